#include "evalx.hpp"

#include "common.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

namespace armor {

refine_config eval_refine_for(ablation_t a, const refine_config & base) {
    refine_config r = base;
    if (a == ablation_t::multitask_only) {
        r.rounds   = 1;
        r.num_traj = 1;
    }
    return r;
}

eval_report run_eval(model & m, const std::vector<episode> & eps, judge & j,
                     const eval_config & cfg) {
    if (eps.empty())    fail(errc::invalid_argument, "eval: empty episode list");
    if (cfg.chunk < 1)  fail(errc::invalid_argument, "eval: chunk must be >= 1");
    const int64_t n = (int64_t) eps.size();
    for (const auto & e : eps) {
        if (!e.has_reasoning) {
            fail(errc::invalid_argument, "eval: episode " + e.id + " lacks a reference");
        }
    }

    std::vector<const tensor *> frames((size_t) n);
    for (int64_t i = 0; i < n; ++i) frames[(size_t) i] = &eps[(size_t) i].frames;

    model_policy pol(m, frames, cfg.refine.temperature, cfg.seed);
    std::vector<refine_result> results;
    results.reserve((size_t) n);
    for (int64_t start = 0; start < n; start += cfg.chunk) {
        const int64_t end = std::min(n, start + cfg.chunk);
        std::vector<int64_t> idx((size_t) (end - start));
        std::iota(idx.begin(), idx.end(), start);
        auto part = refine_batch(pol, idx, task_prompt::both, cfg.refine);
        for (auto & r : part) results.push_back(std::move(r));
    }

    // each executed round is judged once; carried-forward rounds reuse scores
    std::vector<judge_request> reqs;
    for (int64_t i = 0; i < n; ++i) {
        for (size_t t = 0; t < results[(size_t) i].rounds.size(); ++t) {
            reqs.push_back({eps[(size_t) i].id + ":r" + std::to_string(t),
                            content_tokens(results[(size_t) i].rounds[t].selected.reasoning),
                            eps[(size_t) i].reasoning});
        }
    }
    const auto scores = j.score(reqs);
    if (scores.size() != reqs.size()) fail(errc::runtime, "eval: judge result count mismatch");

    std::vector<std::vector<std::pair<double, char>>> js((size_t) n);
    size_t k = 0;
    for (int64_t i = 0; i < n; ++i) {
        for (size_t t = 0; t < results[(size_t) i].rounds.size(); ++t, ++k) {
            js[(size_t) i].push_back({scores[k].score, scores[k].scored ? 1 : 0});
        }
    }

    const int R = cfg.refine.rounds;
    eval_report rep;
    rep.n_episodes = n;
    rep.stop_round_hist.assign((size_t) R, 0);
    double rounds_sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        rep.stop_round_hist[(size_t) (results[(size_t) i].rounds_run - 1)] += 1;
        rounds_sum += (double) results[(size_t) i].rounds_run;
    }
    rep.mean_rounds = rounds_sum / (double) n;

    for (int r = 0; r < R; ++r) {
        int64_t hit = 0, jn = 0;
        double  cost_sum = 0.0, jsum = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const auto & res = results[(size_t) i];
            const size_t t   = (size_t) std::min<int64_t>(r, res.rounds_run - 1);
            const auto & rr  = res.rounds[t];
            hit += rr.selected.det_failure == eps[(size_t) i].failure ? 1 : 0;
            cost_sum += rr.costs[(size_t) rr.best];
            if (js[(size_t) i][t].second) {
                jsum += js[(size_t) i][t].first;
                jn += 1;
            }
        }
        rep.curve.detect.push_back((double) hit / (double) n);
        rep.curve.cost.push_back(cost_sum / (double) n);
        rep.curve.judge.push_back(jn > 0 ? jsum / (double) jn : 0.0);
        if (r == R - 1) {
            rep.detect_accuracy = rep.curve.detect.back();
            rep.judge_score     = rep.curve.judge.back();
            rep.judged          = jn;
            rep.unscored        = n - jn;
        }
    }

    // round-0 baseline: rerun trajectory 0 of round 1 alone (identical rng
    // stream, so it reproduces the model's first shot before any selection)
    refine_config r0 = cfg.refine;
    r0.rounds        = 1;
    r0.num_traj      = 1;
    model_policy pol0(m, frames, cfg.refine.temperature, cfg.seed);
    std::vector<refine_result> base;
    base.reserve((size_t) n);
    for (int64_t start = 0; start < n; start += cfg.chunk) {
        const int64_t end = std::min(n, start + cfg.chunk);
        std::vector<int64_t> idx((size_t) (end - start));
        std::iota(idx.begin(), idx.end(), start);
        auto part = refine_batch(pol0, idx, task_prompt::both, r0);
        for (auto & r : part) base.push_back(std::move(r));
    }
    std::vector<judge_request> reqs0;
    for (int64_t i = 0; i < n; ++i) {
        reqs0.push_back({eps[(size_t) i].id + ":s0",
                         content_tokens(base[(size_t) i].final_out.reasoning),
                         eps[(size_t) i].reasoning});
    }
    const auto scores0 = j.score(reqs0);
    if (scores0.size() != reqs0.size()) fail(errc::runtime, "eval: judge result count mismatch");
    int64_t hit0 = 0, jn0 = 0;
    double  cost0 = 0.0, jsum0 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const auto & out = base[(size_t) i].final_out;
        hit0 += out.det_failure == eps[(size_t) i].failure ? 1 : 0;
        cost0 += refine_cost(out, cfg.refine.lambda);
        if (scores0[(size_t) i].scored) {
            jsum0 += scores0[(size_t) i].score;
            jn0 += 1;
        }
    }
    rep.round0_detect = (double) hit0 / (double) n;
    rep.round0_judge  = jn0 > 0 ? jsum0 / (double) jn0 : 0.0;
    rep.round0_cost   = cost0 / (double) n;
    return rep;
}

nlohmann::json report_json(const eval_report & r) {
    return {
        {"n_episodes", r.n_episodes},
        {"detect_accuracy", r.detect_accuracy},
        {"judge_score", r.judge_score},
        {"judged", r.judged},
        {"unscored", r.unscored},
        {"mean_rounds", r.mean_rounds},
        {"stop_round_hist", r.stop_round_hist},
        {"round0",
         {{"detect", r.round0_detect}, {"judge", r.round0_judge}, {"cost", r.round0_cost}}},
        {"curve",
         {{"detect", r.curve.detect}, {"judge", r.curve.judge}, {"cost", r.curve.cost}}},
    };
}

namespace {

int64_t base_ratio_of(const dataset_manifest & mf) {
    return (int64_t) std::llround((double) mf.count_sparse / (double) mf.count_dense);
}

run_summary run_cell(const grid_config & cfg, ablation_t variant, uint64_t seed,
                     int64_t ratio, bool sweep, const dataset & ds, judge & j) {
    model m;
    m.cfg = cfg.model;
    m.init(seed_stream(seed, {101}));

    train_config tc = cfg.train;
    tc.ablation     = variant;
    tc.seed         = seed_stream(seed, {102});
    run_training(m, ds, tc);

    eval_config ec = cfg.eval;
    ec.refine      = eval_refine_for(variant, cfg.eval.refine);
    ec.seed        = seed_stream(seed, {103});

    run_summary rs;
    rs.variant = ablation_name(variant);
    rs.seed    = seed;
    rs.ratio   = ratio;
    rs.sweep   = sweep;
    rs.report  = run_eval(m, ds.test, j, ec);
    return rs;
}

}  // namespace

grid_report run_ablations(const grid_config & cfg, const judge_factory & make_judge,
                          std::ostream * log) {
    if (cfg.seeds.empty())    fail(errc::invalid_argument, "grid: no seeds");
    if (cfg.variants.empty()) fail(errc::invalid_argument, "grid: no variants");
    if (!make_judge)          fail(errc::invalid_argument, "grid: no judge factory");
    if (cfg.threads < 0)      fail(errc::invalid_argument, "grid: threads must be >= 0");
    const int64_t base_ratio = base_ratio_of(cfg.data);

    // materialize datasets and the cell list up front; the report order is
    // the list order, so results do not depend on worker scheduling
    struct cell_desc {
        ablation_t variant;
        uint64_t   seed;
        int64_t    ratio;
        bool       sweep;
        size_t     ds;
    };
    std::vector<dataset>   datasets;
    std::vector<cell_desc> cells;
    for (uint64_t seed : cfg.seeds) {
        dataset_manifest mf = cfg.data;
        mf.seed             = seed_stream(seed, {100});
        datasets.push_back(generate_dataset(mf));
        for (ablation_t v : cfg.variants) {
            cells.push_back({v, seed, base_ratio, false, datasets.size() - 1});
        }
    }
    if (cfg.sweep_ratios) {
        for (int64_t ratio : cfg.ratios) {
            if (ratio == base_ratio) continue;  // base-ratio runs already exist
            for (uint64_t seed : cfg.seeds) {
                dataset_manifest mf = cfg.data;
                mf.seed             = seed_stream(seed, {100, (uint64_t) ratio});
                mf.count_dense =
                    (int64_t) std::llround((double) cfg.data.count_sparse / (double) ratio);
                datasets.push_back(generate_dataset(mf));
                cells.push_back({ablation_t::full, seed, ratio, true, datasets.size() - 1});
            }
        }
    }

    using clock = std::chrono::steady_clock;
    grid_report g;
    g.runs.resize(cells.size());

    std::atomic<size_t> next{0};
    std::atomic<size_t> finished{0};
    std::mutex          log_mu;
    std::exception_ptr  first_error;
    std::mutex          err_mu;

    auto worker = [&]() {
        std::unique_ptr<judge> j;
        try {
            j = make_judge();
            if (!j) fail(errc::invalid_argument, "grid: judge factory returned null");
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= cells.size()) break;
                const cell_desc & c  = cells[i];
                const auto        t0 = clock::now();
                g.runs[i] = run_cell(cfg, c.variant, c.seed, c.ratio, c.sweep,
                                     datasets[c.ds], *j);
                const double secs =
                    std::chrono::duration<double>(clock::now() - t0).count();
                const size_t done = finished.fetch_add(1) + 1;
                if (log) {
                    std::lock_guard<std::mutex> lk(log_mu);
                    (*log) << "[grid " << done << "/" << cells.size() << "] variant="
                           << g.runs[i].variant << " seed=" << g.runs[i].seed
                           << " ratio=" << g.runs[i].ratio
                           << " detect=" << g.runs[i].report.detect_accuracy
                           << " judge=" << g.runs[i].report.judge_score
                           << " (" << secs << "s)\n";
                    log->flush();
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!first_error) first_error = std::current_exception();
            next.store(cells.size());  // stop dispatching further cells
        }
    };

    size_t nthreads = cfg.threads > 0 ? (size_t) cfg.threads
                                      : (size_t) std::thread::hardware_concurrency();
    if (nthreads < 1) nthreads = 1;
    nthreads = std::min(nthreads, cells.size());
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto & t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return g;
}

std::vector<variant_mean> variant_means(const grid_report & g) {
    std::vector<variant_mean> out;
    for (const auto & run : g.runs) {
        if (run.sweep) continue;
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const variant_mean & v) { return v.variant == run.variant; });
        if (it == out.end()) {
            out.push_back({run.variant, 0.0, 0.0, 0.0});
            it = out.end() - 1;
        }
        it->detect   += run.report.detect_accuracy;
        it->judge    += run.report.judge_score;
        it->combined += 1.0;  // seed count, normalized below
    }
    for (auto & v : out) {
        const double k = v.combined;
        v.detect   /= k;
        v.judge    /= k;
        v.combined = 0.5 * (v.detect + v.judge);
    }
    return out;
}

std::vector<ratio_mean> ratio_means(const grid_report & g) {
    std::vector<ratio_mean> out;
    std::vector<int64_t>    counts;
    for (const auto & run : g.runs) {
        if (run.variant != std::string("full")) continue;
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const ratio_mean & p) { return p.ratio == run.ratio; });
        if (it == out.end()) {
            out.push_back({run.ratio, 0.0, 0.0});
            counts.push_back(0);
            it = out.end() - 1;
        }
        it->detect += run.report.detect_accuracy;
        it->judge  += run.report.judge_score;
        counts[(size_t) (it - out.begin())] += 1;
    }
    for (size_t i = 0; i < out.size(); ++i) {
        out[i].detect /= (double) counts[i];
        out[i].judge  /= (double) counts[i];
    }
    std::sort(out.begin(), out.end(),
              [](const ratio_mean & a, const ratio_mean & b) { return a.ratio < b.ratio; });
    return out;
}

std::vector<std::pair<int64_t, double>> ratio_judge_means(const grid_report & g) {
    std::vector<std::pair<int64_t, double>> out;
    for (const auto & m : ratio_means(g)) out.push_back({m.ratio, m.judge});
    return out;
}

round_curve mean_full_curve(const grid_report & g) {
    round_curve acc;
    int64_t k = 0;
    for (const auto & run : g.runs) {
        if (run.sweep || run.variant != std::string("full")) continue;
        const round_curve & c = run.report.curve;
        if (acc.detect.empty()) {
            acc.detect.assign(c.detect.size(), 0.0);
            acc.judge.assign(c.judge.size(), 0.0);
            acc.cost.assign(c.cost.size(), 0.0);
        }
        for (size_t r = 0; r < c.detect.size(); ++r) {
            acc.detect[r] += c.detect[r];
            acc.judge[r]  += c.judge[r];
            acc.cost[r]   += c.cost[r];
        }
        k += 1;
    }
    for (auto & v : acc.detect) v /= (double) k;
    for (auto & v : acc.judge)  v /= (double) k;
    for (auto & v : acc.cost)   v /= (double) k;
    return acc;
}

round0_mean full_round0_means(const grid_report & g) {
    round0_mean acc;
    int64_t     k = 0;
    for (const auto & run : g.runs) {
        if (run.sweep || run.variant != std::string("full")) continue;
        acc.detect += run.report.round0_detect;
        acc.judge  += run.report.round0_judge;
        acc.cost   += run.report.round0_cost;
        k += 1;
    }
    if (k > 0) {
        acc.detect /= (double) k;
        acc.judge  /= (double) k;
        acc.cost   /= (double) k;
    }
    return acc;
}

nlohmann::json grid_json(const grid_report & g) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto & r : g.runs) {
        runs.push_back({{"variant", r.variant},
                        {"seed", r.seed},
                        {"ratio", r.ratio},
                        {"sweep", r.sweep},
                        {"report", report_json(r.report)}});
    }
    nlohmann::json vm = nlohmann::json::object();
    for (const auto & v : variant_means(g)) {
        vm[v.variant] = {{"detect", v.detect}, {"judge", v.judge}, {"combined", v.combined}};
    }
    nlohmann::json rm = nlohmann::json::array();
    for (const auto & p : ratio_means(g)) {
        rm.push_back({{"ratio", p.ratio}, {"detect", p.detect}, {"judge", p.judge}});
    }
    const round_curve fc = mean_full_curve(g);
    const round0_mean r0 = full_round0_means(g);
    return {{"schema_version", 1},
            {"runs", runs},
            {"summary",
             {{"variants", vm},
              {"ratio_table", rm},
              {"full_round0", {{"detect", r0.detect}, {"judge", r0.judge}, {"cost", r0.cost}}},
              {"full_curve",
               {{"detect", fc.detect}, {"judge", fc.judge}, {"cost", fc.cost}}}}}};
}

void print_grid(std::ostream & os, const grid_report & g) {
    os << "variant means over seeds (base ratio)\n";
    os << "  variant            detect   judge    combined\n";
    char buf[128];
    for (const auto & v : variant_means(g)) {
        snprintf(buf, sizeof(buf), "  %-18s %.4f   %.4f   %.4f\n", v.variant.c_str(),
                 v.detect, v.judge, v.combined);
        os << buf;
    }
    const auto rm = ratio_means(g);
    if (!rm.empty()) {
        os << "full-variant means by sparse:dense ratio\n  ratio   ";
        for (const auto & p : rm) {
            snprintf(buf, sizeof(buf), " %-8lld", (long long) p.ratio);
            os << buf;
        }
        os << "\n  detect  ";
        for (const auto & p : rm) {
            snprintf(buf, sizeof(buf), " %-8.4f", p.detect);
            os << buf;
        }
        os << "\n  judge   ";
        for (const auto & p : rm) {
            snprintf(buf, sizeof(buf), " %-8.4f", p.judge);
            os << buf;
        }
        os << "\n";
    }
    const round_curve fc = mean_full_curve(g);
    if (!fc.detect.empty()) {
        os << "full-variant per-round means (round 0: single shot; carry-forward)\n";
        const round0_mean r0 = full_round0_means(g);
        snprintf(buf, sizeof(buf), "  round 0: detect %.4f judge %.4f cost %.4f\n",
                 r0.detect, r0.judge, r0.cost);
        os << buf;
        for (size_t r = 0; r < fc.detect.size(); ++r) {
            snprintf(buf, sizeof(buf), "  round %zu: detect %.4f judge %.4f cost %.4f\n",
                     r + 1, fc.detect[r], fc.judge[r], fc.cost[r]);
            os << buf;
        }
    }
}

}  // namespace armor
