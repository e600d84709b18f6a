#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "datagen.hpp"
#include "refine.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

using namespace armor;

namespace {

// fixed candidate tables keyed by (episode, round, trajectory); records the
// contexts and episode sets it was called with so tests can inspect threading
struct scripted final : refine_policy {
    std::map<std::tuple<int64_t, int, int>, round_output> table;
    std::vector<std::vector<int64_t>>      calls_eps;
    std::vector<std::vector<cond_context>> calls_ctx;

    void set(int64_t ep, int round, int m, round_output o) {
        table[{ep, round, m}] = std::move(o);
    }

    std::vector<round_output> propose(const std::vector<int64_t> & ep_idx,
                                      const std::vector<cond_context> & ctxs,
                                      int num_traj, int round) override {
        calls_eps.push_back(ep_idx);
        calls_ctx.push_back(ctxs);
        std::vector<round_output> out;
        for (size_t i = 0; i < ep_idx.size(); ++i) {
            for (int mi = 0; mi < num_traj; ++mi) {
                auto it = table.find({ep_idx[i], round, mi});
                REQUIRE(it != table.end());
                out.push_back(it->second);
            }
        }
        return out;
    }
};

round_output ro(double h_det, double h_reason, double det_prob,
                std::vector<int> toks = {vocab::tok_eos}) {
    round_output o;
    o.det_prob    = det_prob;
    o.det_failure = det_prob >= 0.5;
    o.reasoning   = std::move(toks);
    o.h_det       = h_det;
    o.h_reason    = h_reason;
    return o;
}

refine_config cfg1(double epsilon = 1e-4, int rounds = 4) {
    refine_config c;
    c.rounds   = rounds;
    c.num_traj = 1;
    c.epsilon  = epsilon;
    return c;
}

}  // namespace

TEST_CASE("monotone improvement runs the full round budget") {
    scripted pol;
    pol.set(0, 1, 0, ro(1.0, 0.0, 0.9, {7, vocab::tok_eos}));
    pol.set(0, 2, 0, ro(0.8, 0.0, 0.9, {8, vocab::tok_eos}));
    pol.set(0, 3, 0, ro(0.6, 0.0, 0.9, {9, vocab::tok_eos}));
    pol.set(0, 4, 0, ro(0.4, 0.0, 0.9, {10, vocab::tok_eos}));

    auto r = refine_one(pol, 0, task_prompt::both, cfg1());
    CHECK(r.rounds_run == 4);
    CHECK(!r.stopped_early);
    REQUIRE(r.rounds.size() == 4);
    CHECK(!r.rounds[3].triggered_stop);
    CHECK(r.final_out.reasoning == std::vector<int>{10, vocab::tok_eos});
    CHECK(r.final_out.h_det == 0.4);
}

TEST_CASE("no improvement stops at round two and returns that round verbatim") {
    scripted pol;
    pol.set(0, 1, 0, ro(1.0, 0.0, 0.9, {7, vocab::tok_eos}));
    pol.set(0, 2, 0, ro(1.0, 0.0, 0.2, {8, vocab::tok_eos}));

    auto r = refine_one(pol, 0, task_prompt::both, cfg1());
    CHECK(r.rounds_run == 2);
    CHECK(r.stopped_early);
    REQUIRE(r.rounds.size() == 2);
    CHECK(!r.rounds[0].triggered_stop);
    CHECK(r.rounds[1].triggered_stop);
    // the stopping round's own selection is returned, not the earlier best
    CHECK(r.final_out.reasoning == std::vector<int>{8, vocab::tok_eos});
    CHECK(r.final_out.det_prob == 0.2);
}

TEST_CASE("improvement of exactly epsilon stops") {
    // all values exact in binary: 0.5 - 0.0625 = 0.4375
    scripted pol;
    pol.set(0, 1, 0, ro(0.5, 0.0, 0.9));
    pol.set(0, 2, 0, ro(0.4375, 0.0, 0.9));

    auto r = refine_one(pol, 0, task_prompt::both, cfg1(0.0625));
    CHECK(r.rounds_run == 2);
    CHECK(r.stopped_early);
    CHECK(r.rounds[1].triggered_stop);
}

TEST_CASE("improvement just past epsilon continues") {
    // 0.4375 - 2^-10 is also exact; clears the 0.0625 threshold strictly
    scripted pol;
    pol.set(0, 1, 0, ro(0.5, 0.0, 0.9));
    pol.set(0, 2, 0, ro(0.4375 - 0.0009765625, 0.0, 0.9));
    pol.set(0, 3, 0, ro(0.4365234375, 0.0, 0.9));  // equal to round 2 -> stop

    auto r = refine_one(pol, 0, task_prompt::both, cfg1(0.0625));
    CHECK(r.rounds_run == 3);
    CHECK(!r.rounds[1].triggered_stop);
    CHECK(r.rounds[2].triggered_stop);
}

TEST_CASE("cost ties select the lowest trajectory index") {
    refine_config cfg;
    cfg.num_traj = 3;
    cfg.rounds   = 2;

    scripted pol;
    pol.set(0, 1, 0, ro(0.7, 0.0, 0.9, {70, vocab::tok_eos}));
    pol.set(0, 1, 1, ro(0.3, 0.0, 0.9, {71, vocab::tok_eos}));
    pol.set(0, 1, 2, ro(0.3, 0.0, 0.9, {72, vocab::tok_eos}));
    for (int mi = 0; mi < 3; ++mi) {
        pol.set(0, 2, mi, ro(0.3, 0.0, 0.9, {80 + mi, vocab::tok_eos}));
    }

    auto r = refine_one(pol, 0, task_prompt::both, cfg);
    REQUIRE(r.rounds.size() == 2);
    CHECK(r.rounds[0].best == 1);  // first of the tied minima
    CHECK(r.rounds[0].selected.reasoning == std::vector<int>{71, vocab::tok_eos});
    CHECK(r.rounds[1].best == 0);  // all tied -> index 0
    CHECK(r.rounds[1].triggered_stop);
    CHECK(r.final_out.reasoning == std::vector<int>{80, vocab::tok_eos});
}

TEST_CASE("infinite epsilon always stops at round two") {
    scripted pol;
    pol.set(0, 1, 0, ro(2.0, 0.0, 0.9));
    pol.set(0, 2, 0, ro(0.1, 0.0, 0.9));  // huge improvement, still stops

    auto r = refine_one(pol, 0, task_prompt::both,
                        cfg1(std::numeric_limits<double>::infinity()));
    CHECK(r.rounds_run == 2);
    CHECK(!r.rounds[0].triggered_stop);  // inf - inf = NaN never compares true
    CHECK(r.rounds[1].triggered_stop);
    CHECK(r.final_out.h_det == 0.1);
}

TEST_CASE("round one never stops regardless of cost") {
    scripted pol;
    pol.set(0, 1, 0, ro(1e12, 0.0, 0.9));
    pol.set(0, 2, 0, ro(2e12, 0.0, 0.9));

    auto r = refine_one(pol, 0, task_prompt::both, cfg1());
    CHECK(!r.rounds[0].triggered_stop);
    CHECK(r.rounds_run == 2);
    CHECK(r.rounds[1].triggered_stop);
}

TEST_CASE("a worsening round is returned verbatim when it triggers the stop") {
    scripted pol;
    pol.set(0, 1, 0, ro(1.0, 0.0, 0.9, {7, vocab::tok_eos}));
    pol.set(0, 2, 0, ro(0.7, 0.0, 0.9, {8, vocab::tok_eos}));
    pol.set(0, 3, 0, ro(2.0, 0.0, 0.9, {9, vocab::tok_eos}));

    auto r = refine_one(pol, 0, task_prompt::both, cfg1());
    CHECK(r.rounds_run == 3);
    CHECK(r.stopped_early);
    CHECK(r.final_out.h_det == 2.0);  // worse than round 2, still the answer
    CHECK(r.final_out.reasoning == std::vector<int>{9, vocab::tok_eos});
}

TEST_CASE("contexts thread the selected candidate between rounds") {
    const std::vector<int> words = {vocab::id_of("dropped"), vocab::id_of("item")};
    std::vector<int> with_eos = words;
    with_eos.push_back(vocab::tok_eos);

    scripted pol;
    pol.set(0, 1, 0, ro(0.2, 0.0, 0.9, with_eos));           // failure branch
    pol.set(0, 2, 0, ro(0.1, 0.0, 0.2, {vocab::tok_eos}));   // success, empty text
    pol.set(0, 3, 0, ro(0.1, 0.0, 0.2));                     // equal cost -> stop

    auto r = refine_one(pol, 0, task_prompt::detect, cfg1(1e-4, 4));
    CHECK(r.rounds_run == 3);
    REQUIRE(pol.calls_ctx.size() == 3);

    const cond_context & c1 = pol.calls_ctx[0][0];
    CHECK(c1.prev == prev_det::none);
    CHECK(!c1.has_reasoning);
    CHECK(c1.prev_reasoning.empty());
    CHECK(c1.prompt == task_prompt::detect);

    const cond_context & c2 = pol.calls_ctx[1][0];
    CHECK(c2.prev == prev_det::failure);   // det_prob 0.9 -> failure
    CHECK(c2.has_reasoning);
    CHECK(c2.prev_reasoning == words);     // eos stripped
    CHECK(c2.prompt == task_prompt::detect);

    const cond_context & c3 = pol.calls_ctx[2][0];
    CHECK(c3.prev == prev_det::success);   // det_prob 0.2 -> success
    CHECK(c3.has_reasoning);               // present even when text is empty
    CHECK(c3.prev_reasoning.empty());
}

TEST_CASE("batched refinement equals one-by-one with independent stopping") {
    scripted pol;
    // episode 0 stops at round 2, episode 1 never stops, episode 2 stops at 3
    pol.set(0, 1, 0, ro(1.0, 0.0, 0.9, {7, vocab::tok_eos}));
    pol.set(0, 2, 0, ro(1.0, 0.0, 0.9, {8, vocab::tok_eos}));
    double c = 1.0;
    for (int t = 1; t <= 4; ++t, c -= 0.1) {
        pol.set(1, t, 0, ro(c, 0.0, 0.9, {20 + t, vocab::tok_eos}));
    }
    pol.set(2, 1, 0, ro(0.9, 0.0, 0.9, {30, vocab::tok_eos}));
    pol.set(2, 2, 0, ro(0.5, 0.0, 0.9, {31, vocab::tok_eos}));
    pol.set(2, 3, 0, ro(0.5, 0.0, 0.9, {32, vocab::tok_eos}));

    auto batch = refine_batch(pol, {0, 1, 2}, task_prompt::both, cfg1());

    scripted pol_a = pol, pol_b = pol, pol_c = pol;
    auto r0 = refine_one(pol_a, 0, task_prompt::both, cfg1());
    auto r1 = refine_one(pol_b, 1, task_prompt::both, cfg1());
    auto r2 = refine_one(pol_c, 2, task_prompt::both, cfg1());

    const refine_result * singles[3] = {&r0, &r1, &r2};
    for (int i = 0; i < 3; ++i) {
        CHECK(batch[(size_t) i].rounds_run == singles[i]->rounds_run);
        CHECK(batch[(size_t) i].stopped_early == singles[i]->stopped_early);
        CHECK(batch[(size_t) i].final_out.reasoning == singles[i]->final_out.reasoning);
        REQUIRE(batch[(size_t) i].rounds.size() == singles[i]->rounds.size());
        for (size_t t = 0; t < singles[i]->rounds.size(); ++t) {
            CHECK(batch[(size_t) i].rounds[t].costs == singles[i]->rounds[t].costs);
        }
    }
    CHECK(batch[0].rounds_run == 2);
    CHECK(batch[1].rounds_run == 4);
    CHECK(!batch[1].stopped_early);
    CHECK(batch[2].rounds_run == 3);

    // stopped episodes leave the active set: round-3 call sees {1, 2}, round-4 {1}
    REQUIRE(pol.calls_eps.size() == 4);
    CHECK(pol.calls_eps[0] == std::vector<int64_t>{0, 1, 2});
    CHECK(pol.calls_eps[2] == std::vector<int64_t>{1, 2});
    CHECK(pol.calls_eps[3] == std::vector<int64_t>{1});
}

TEST_CASE("lambda weighs reasoning entropy into the selection cost") {
    round_output a = ro(0.30, 0.0, 0.9, {7, vocab::tok_eos});
    round_output b = ro(0.25, 1.0, 0.9, {8, vocab::tok_eos});
    CHECK(refine_cost(a, 0.1) == doctest::Approx(0.30).epsilon(1e-15));
    CHECK(refine_cost(b, 0.1) == doctest::Approx(0.35).epsilon(1e-15));

    refine_config cfg;
    cfg.num_traj = 2;
    cfg.rounds   = 1;

    scripted pol;
    pol.set(0, 1, 0, a);
    pol.set(0, 1, 1, b);
    auto r = refine_one(pol, 0, task_prompt::both, cfg);
    CHECK(r.rounds[0].best == 0);  // a wins at lambda 0.1 despite higher h_det

    cfg.lambda = 0.0;
    scripted pol2;
    pol2.set(0, 1, 0, a);
    pol2.set(0, 1, 1, b);
    auto r2 = refine_one(pol2, 0, task_prompt::both, cfg);
    CHECK(r2.rounds[0].best == 1);  // reasoning entropy ignored -> b wins
}

TEST_CASE("single-round budget returns the first selection") {
    scripted pol;
    pol.set(0, 1, 0, ro(0.8, 0.0, 0.9, {7, vocab::tok_eos}));
    auto r = refine_one(pol, 0, task_prompt::both, cfg1(1e-4, 1));
    CHECK(r.rounds_run == 1);
    CHECK(!r.stopped_early);
    CHECK(r.final_out.reasoning == std::vector<int>{7, vocab::tok_eos});
}

TEST_CASE("invalid configurations are rejected") {
    scripted pol;
    refine_config cfg;
    cfg.rounds = 0;
    CHECK_THROWS_AS(refine_one(pol, 0, task_prompt::both, cfg), error);
    cfg = {};
    cfg.num_traj = 0;
    CHECK_THROWS_AS(refine_one(pol, 0, task_prompt::both, cfg), error);
    cfg = {};
    cfg.lambda = -0.1;
    CHECK_THROWS_AS(refine_one(pol, 0, task_prompt::both, cfg), error);
    cfg = {};
    cfg.temperature = -1.0;
    CHECK_THROWS_AS(refine_one(pol, 0, task_prompt::both, cfg), error);
}

TEST_CASE("untrained model stops at round two with flat costs") {
    model m;
    m.init(11);
    episode e0 = generate_episode(100, false, -1);
    episode e1 = generate_episode(101, true, 3);
    std::vector<const tensor *> frames = {&e0.frames, &e1.frames};

    model_policy pol(m, frames, 0.7, 42);
    refine_config cfg;  // defaults: 4 rounds, 3 trajectories

    auto res = refine_batch(pol, {0, 1}, task_prompt::both, cfg);
    const double flat = std::log(2.0) + 0.1 * std::log((double) vocab::size());
    for (const auto & r : res) {
        CHECK(r.rounds_run == 2);  // equal costs -> no improvement -> stop
        CHECK(r.stopped_early);
        // costs agree to ~1e-15 but not bit-exactly: h_reason averages a
        // trajectory-length-dependent number of identical step entropies
        for (const auto & rr : r.rounds) {
            for (double cc : rr.costs) {
                CHECK(cc == doctest::Approx(flat).epsilon(1e-12));
            }
        }
        CHECK(r.final_out.det_prob == 0.5);
    }
}

TEST_CASE("model-backed batched refinement equals one-by-one runs") {
    model m;
    m.init(12);
    episode e0 = generate_episode(200, true, 0);
    episode e1 = generate_episode(201, true, 5);
    episode e2 = generate_episode(202, false, -1);
    std::vector<const tensor *> frames = {&e0.frames, &e1.frames, &e2.frames};

    refine_config cfg;
    cfg.rounds = 2;  // untrained model stops here anyway; keep the test quick

    model_policy pol(m, frames, 0.7, 777);
    auto batch = refine_batch(pol, {0, 1, 2}, task_prompt::both, cfg);

    for (int64_t i = 0; i < 3; ++i) {
        model_policy ps(m, frames, 0.7, 777);
        auto one = refine_one(ps, i, task_prompt::both, cfg);
        REQUIRE(batch[(size_t) i].rounds.size() == one.rounds.size());
        CHECK(batch[(size_t) i].rounds_run == one.rounds_run);
        CHECK(batch[(size_t) i].final_out.reasoning == one.final_out.reasoning);
        CHECK(batch[(size_t) i].final_out.det_prob == one.final_out.det_prob);
        for (size_t t = 0; t < one.rounds.size(); ++t) {
            CHECK(batch[(size_t) i].rounds[t].costs == one.rounds[t].costs);
            CHECK(batch[(size_t) i].rounds[t].selected.reasoning ==
                  one.rounds[t].selected.reasoning);
        }
    }
}

TEST_CASE("training rollouts record per-round contexts") {
    model m;
    m.init(13);
    episode e0 = generate_episode(300, true, 2);
    episode e1 = generate_episode(301, false, -1);
    std::vector<const tensor *> frames = {&e0.frames, &e1.frames};

    auto ctxs = rollout_contexts(m, frames, 3, 1.0, task_prompt::both, 99, {0, 1});
    REQUIRE(ctxs.size() == 2);
    for (const auto & per_ep : ctxs) {
        REQUIRE(per_ep.size() == 3);
        CHECK(per_ep[0].prev == prev_det::none);
        CHECK(!per_ep[0].has_reasoning);
        for (size_t t = 1; t < per_ep.size(); ++t) {
            // untrained model always predicts p = 0.5 -> failure by threshold
            CHECK(per_ep[t].prev == prev_det::failure);
            CHECK(per_ep[t].has_reasoning);
        }
    }

    // reproducible given the same seed and stream ids, and per-episode streams
    // make each episode's rollout independent of the batch composition
    auto again  = rollout_contexts(m, frames, 3, 1.0, task_prompt::both, 99, {0, 1});
    auto single = rollout_contexts(m, {&e1.frames}, 3, 1.0, task_prompt::both, 99, {1});
    for (size_t t = 0; t < 3; ++t) {
        CHECK(again[0][t].prev_reasoning == ctxs[0][t].prev_reasoning);
        CHECK(again[1][t].prev_reasoning == ctxs[1][t].prev_reasoning);
        CHECK(single[0][t].prev_reasoning == ctxs[1][t].prev_reasoning);
        CHECK(single[0][t].prev == ctxs[1][t].prev);
    }

    CHECK_THROWS_AS(rollout_contexts(m, frames, 0, 1.0, task_prompt::both, 99, {0, 1}),
                    error);
    CHECK_THROWS_AS(rollout_contexts(m, frames, 3, 1.0, task_prompt::both, 99, {0}),
                    error);
}
