#include "refine.hpp"

#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace armor {

double refine_cost(const round_output & out, double lambda) {
    return out.h_det + lambda * out.h_reason;
}

cond_context initial_context(task_prompt prompt) {
    cond_context c;
    c.prev          = prev_det::none;
    c.has_reasoning = false;
    c.prompt        = prompt;
    return c;
}

cond_context transition(const round_output & sel, task_prompt prompt) {
    cond_context c;
    c.prev           = sel.det_failure ? prev_det::failure : prev_det::success;
    c.has_reasoning  = true;
    c.prev_reasoning = content_tokens(sel.reasoning);
    c.prompt         = prompt;
    return c;
}

static void check_config(const refine_config & cfg) {
    if (cfg.rounds < 1)       fail(errc::invalid_argument, "refine: rounds must be >= 1");
    if (cfg.num_traj < 1)     fail(errc::invalid_argument, "refine: num_traj must be >= 1");
    if (cfg.lambda < 0.0)     fail(errc::invalid_argument, "refine: lambda must be >= 0");
    if (cfg.temperature < 0)  fail(errc::invalid_argument, "refine: temperature must be >= 0");
}

std::vector<round_output> model_policy::propose(const std::vector<int64_t> & ep_idx,
                                                const std::vector<cond_context> & ctxs,
                                                int num_traj, int round) {
    const int64_t n = (int64_t) ep_idx.size();
    std::vector<const tensor *> fr((size_t) (n * num_traj));
    std::vector<cond_context>   cc((size_t) (n * num_traj));
    std::vector<rng>            streams;
    streams.reserve((size_t) (n * num_traj));
    for (int64_t i = 0; i < n; ++i) {
        if (ep_idx[i] < 0 || ep_idx[i] >= (int64_t) frames->size()) {
            fail(errc::invalid_argument, "refine: episode index out of range");
        }
        for (int mi = 0; mi < num_traj; ++mi) {
            fr[(size_t) (i * num_traj + mi)] = (*frames)[(size_t) ep_idx[i]];
            cc[(size_t) (i * num_traj + mi)] = ctxs[(size_t) i];
            streams.emplace_back(seed_stream(seed, {(uint64_t) ep_idx[i],
                                                    (uint64_t) round, (uint64_t) mi}));
        }
    }
    std::vector<rng *> rp;
    rp.reserve(streams.size());
    for (auto & s : streams) rp.push_back(&s);
    return predict_round_batch(*m, fr, cc, temperature, rp);
}

std::vector<refine_result> refine_batch(refine_policy & pol,
                                        const std::vector<int64_t> & eps,
                                        task_prompt prompt,
                                        const refine_config & cfg) {
    check_config(cfg);
    const int64_t n = (int64_t) eps.size();

    std::vector<refine_result> res((size_t) n);
    std::vector<cond_context>  ctx((size_t) n, initial_context(prompt));
    std::vector<double>        c_min((size_t) n, std::numeric_limits<double>::infinity());
    std::vector<char>          active((size_t) n, 1);

    for (int t = 1; t <= cfg.rounds; ++t) {
        std::vector<int64_t>      act;
        std::vector<cond_context> act_ctx;
        for (int64_t i = 0; i < n; ++i) {
            if (active[(size_t) i]) {
                act.push_back(eps[(size_t) i]);
                act_ctx.push_back(ctx[(size_t) i]);
            }
        }
        if (act.empty()) break;

        auto cands = pol.propose(act, act_ctx, cfg.num_traj, t);
        if ((int64_t) cands.size() != (int64_t) act.size() * cfg.num_traj) {
            fail(errc::runtime, "refine: policy returned wrong candidate count");
        }

        int64_t a = 0;
        for (int64_t i = 0; i < n; ++i) {
            if (!active[(size_t) i]) continue;
            const round_output * base = &cands[(size_t) (a * cfg.num_traj)];
            ++a;

            round_record rec;
            rec.costs.resize((size_t) cfg.num_traj);
            rec.best = 0;
            for (int mi = 0; mi < cfg.num_traj; ++mi) {
                rec.costs[(size_t) mi] = refine_cost(base[mi], cfg.lambda);
                if (rec.costs[(size_t) mi] < rec.costs[(size_t) rec.best]) rec.best = mi;
            }
            rec.selected = base[rec.best];
            const double c = rec.costs[(size_t) rec.best];

            refine_result & r = res[(size_t) i];
            r.rounds_run = t;
            r.final_out  = rec.selected;

            // stop once the selected cost no longer improves on the best seen
            // cost by more than epsilon; the comparison is IEEE as written, so
            // an infinite c_min (first round) or a NaN bound never stops
            if (c >= c_min[(size_t) i] - cfg.epsilon) {
                rec.triggered_stop = true;
                r.stopped_early    = true;
                active[(size_t) i] = 0;
            } else {
                c_min[(size_t) i] = std::min(c_min[(size_t) i], c);
                ctx[(size_t) i]   = transition(rec.selected, prompt);
            }
            r.rounds.push_back(std::move(rec));
        }
    }
    return res;
}

refine_result refine_one(refine_policy & pol, int64_t ep, task_prompt prompt,
                         const refine_config & cfg) {
    auto v = refine_batch(pol, {ep}, prompt, cfg);
    return std::move(v[0]);
}

std::vector<std::vector<cond_context>> rollout_contexts(model & m,
        const std::vector<const tensor *> & frames,
        int rounds, double temperature, task_prompt prompt,
        uint64_t seed, const std::vector<uint64_t> & stream_ids) {
    if (rounds < 1) fail(errc::invalid_argument, "rollout: rounds must be >= 1");
    const int64_t n = (int64_t) frames.size();
    if ((int64_t) stream_ids.size() != n) {
        fail(errc::invalid_argument, "rollout: stream_ids size mismatch");
    }

    std::vector<std::vector<cond_context>> out((size_t) n);
    std::vector<cond_context> ctx((size_t) n, initial_context(prompt));
    for (int t = 1; t <= rounds; ++t) {
        for (int64_t i = 0; i < n; ++i) out[(size_t) i].push_back(ctx[(size_t) i]);
        if (t == rounds) break;  // the last round's outputs would go unused

        std::vector<rng> streams;
        streams.reserve((size_t) n);
        for (int64_t i = 0; i < n; ++i) {
            streams.emplace_back(seed_stream(seed, {stream_ids[(size_t) i], (uint64_t) t}));
        }
        std::vector<rng *> rp;
        rp.reserve((size_t) n);
        for (auto & s : streams) rp.push_back(&s);

        auto preds = predict_round_batch(m, frames, ctx, temperature, rp);
        for (int64_t i = 0; i < n; ++i) {
            ctx[(size_t) i] = transition(preds[(size_t) i], prompt);
        }
    }
    return out;
}

}  // namespace armor
