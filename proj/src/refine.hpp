#pragma once

// entropy-guided multi-trajectory refinement: each round proposes a set of
// candidate outputs, keeps the minimum-cost one, and re-conditions the next
// round on it; refinement stops once the selected cost stops improving.

#include "model.hpp"

#include <cstdint>
#include <vector>

namespace armor {

struct refine_config {
    int    rounds      = 4;     // max refinement rounds (>= 1)
    int    num_traj    = 3;     // candidate trajectories per round (>= 1)
    double temperature = 0.7;   // sampling temperature for candidates
    double lambda      = 0.1;   // weight of reasoning entropy in the cost
    double epsilon     = 1e-4;  // minimum cost improvement to keep refining
};

// selection cost: detection entropy plus weighted mean reasoning entropy
double refine_cost(const round_output & out, double lambda);

// unconditioned context used for the first round
cond_context initial_context(task_prompt prompt);

// context for the next round, conditioned on the selected candidate
cond_context transition(const round_output & sel, task_prompt prompt);

struct round_record {
    std::vector<double> costs;                  // per candidate trajectory
    int                 best = 0;               // argmin; ties -> lowest index
    round_output        selected;               // copy of the best candidate
    bool                triggered_stop = false; // this round hit the stop rule
};

struct refine_result {
    round_output              final_out;             // selection of the last executed round
    int                       rounds_run    = 0;     // rounds actually executed
    bool                      stopped_early = false; // stop rule fired
    std::vector<round_record> rounds;                // one record per executed round
};

// candidate source; implementations hold their own per-episode state and are
// addressed by stable episode indices so results do not depend on batching
struct refine_policy {
    virtual ~refine_policy() = default;

    // one candidate for each (episode, trajectory) pair, episode-major:
    // result[i*num_traj + m] is trajectory m for episode ep_idx[i]
    virtual std::vector<round_output> propose(const std::vector<int64_t> & ep_idx,
                                              const std::vector<cond_context> & ctxs,
                                              int num_traj, int round) = 0;
};

// samples candidates from a model with one rng stream per (episode, round,
// trajectory), so batched and one-by-one runs produce identical outputs
struct model_policy final : refine_policy {
    model *                           m      = nullptr;
    const std::vector<const tensor *> * frames = nullptr;  // indexed by episode
    double                            temperature = 0.7;
    uint64_t                          seed        = 0;

    model_policy(model & mm, const std::vector<const tensor *> & fr,
                 double temp, uint64_t sd)
        : m(&mm), frames(&fr), temperature(temp), seed(sd) {}

    std::vector<round_output> propose(const std::vector<int64_t> & ep_idx,
                                      const std::vector<cond_context> & ctxs,
                                      int num_traj, int round) override;
};

refine_result refine_one(refine_policy & pol, int64_t ep, task_prompt prompt,
                         const refine_config & cfg);

// per-episode independent stopping; equivalent to refine_one on each episode
std::vector<refine_result> refine_batch(refine_policy & pol,
                                        const std::vector<int64_t> & eps,
                                        task_prompt prompt,
                                        const refine_config & cfg);

// training rollout: run `rounds` rounds with single sampled predictions (no
// candidate selection) and record the context fed to the model at each round;
// result[i][t] is the context episode i saw at round t+1. stream_ids give each
// episode a stable per-rollout rng stream.
std::vector<std::vector<cond_context>> rollout_contexts(model & m,
        const std::vector<const tensor *> & frames,
        int rounds, double temperature, task_prompt prompt,
        uint64_t seed, const std::vector<uint64_t> & stream_ids);

}  // namespace armor
