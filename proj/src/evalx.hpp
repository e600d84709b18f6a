#pragma once

// benchmark evaluation: batched entropy-guided refinement over a test split
// with per-round quality curves, plus the multi-seed variant / supervision-
// ratio grid used for headline comparisons.

#include "judge.hpp"
#include "refine.hpp"
#include "train.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace armor {

struct eval_config {
    refine_config refine;      // rounds, trajectories, temperature, lambda, epsilon
    int           chunk = 64;  // episodes per batched refinement call
    uint64_t      seed  = 0;   // base seed for candidate sampling streams
};

// per report round r (0-based; round r reflects r+1 executed refinement
// rounds) with stopped episodes carrying their final values forward
struct round_curve {
    std::vector<double> detect;  // detection accuracy
    std::vector<double> judge;   // mean judge score over scored episodes
    std::vector<double> cost;    // mean selected cost
};

struct eval_report {
    int64_t              n_episodes      = 0;
    double               detect_accuracy = 0.0;  // final report round
    double               judge_score     = 0.0;  // final report round
    int64_t              judged          = 0;    // scored at the final round
    int64_t              unscored        = 0;
    double               mean_rounds     = 0.0;  // executed rounds per episode
    std::vector<int64_t> stop_round_hist;        // index r: episodes ending at round r
    round_curve          curve;
    // round-0 baseline: the first sampled trajectory, no selection and no
    // conditioning (curve[0] is then "round 1", the first refinement round)
    double round0_detect = 0.0;
    double round0_judge  = 0.0;
    double round0_cost   = 0.0;
};

eval_report    run_eval(model & m, const std::vector<episode> & eps, judge & j,
                        const eval_config & cfg);
nlohmann::json report_json(const eval_report & r);

// one grid cell: a variant trained and evaluated under one seed; ratio is the
// sparse:dense supervision ratio of the training dataset
struct run_summary {
    std::string variant;
    uint64_t    seed  = 0;
    int64_t     ratio = 0;
    bool        sweep = false;  // supervision-ratio sweep cell (vs variant grid)
    eval_report report;
};

struct grid_config {
    dataset_manifest        data;   // base counts; per-seed dataset seeds derive from run seeds
    model_config            model;  // architecture shared by every cell
    train_config            train;  // base; seed and ablation overridden per run
    eval_config             eval;   // base; seed overridden per run
    std::vector<ablation_t> variants = {ablation_t::full, ablation_t::multitask_only,
                                        ablation_t::refinement_only, ablation_t::offline_only,
                                        ablation_t::online_only};
    std::vector<uint64_t>   seeds  = {1, 2, 3, 4};
    std::vector<int64_t>    ratios = {2, 5, 10, 30};  // sweep; base-ratio runs are reused
    bool                    sweep_ratios = true;
    int                     threads      = 0;  // cell workers; 0 = hardware concurrency
};

struct grid_report {
    std::vector<run_summary> runs;
};

// per-variant means over seeds at the base ratio
struct variant_mean {
    std::string variant;
    double      detect   = 0.0;
    double      judge    = 0.0;
    double      combined = 0.0;  // (detect + judge) / 2, averaged over seeds
};
std::vector<variant_mean> variant_means(const grid_report & g);

// per-ratio means over seeds (full variant runs, base + sweep), ratio-sorted
struct ratio_mean {
    int64_t ratio  = 0;
    double  detect = 0.0;
    double  judge  = 0.0;
};
std::vector<ratio_mean> ratio_means(const grid_report & g);

// mean judge score over seeds per supervision ratio (full variant runs)
std::vector<std::pair<int64_t, double>> ratio_judge_means(const grid_report & g);

// mean per-round curves over the full-variant base-ratio runs
round_curve mean_full_curve(const grid_report & g);

// mean single-shot baseline over the full-variant base-ratio runs
struct round0_mean {
    double detect = 0.0;
    double judge  = 0.0;
    double cost   = 0.0;
};
round0_mean full_round0_means(const grid_report & g);

// builds one judge per worker thread, so external judge processes are never
// shared across cells
using judge_factory = std::function<std::unique_ptr<judge>()>;

// trains and evaluates every grid cell; cells run on a worker pool and the
// run order in the report is fixed regardless of thread count. progress
// lines go to *log if given (completion order, hence thread-dependent).
grid_report    run_ablations(const grid_config & cfg, const judge_factory & make_judge,
                             std::ostream * log);
nlohmann::json grid_json(const grid_report & g);
void           print_grid(std::ostream & os, const grid_report & g);

// the multitask-only variant skips refinement at evaluation time
refine_config eval_refine_for(ablation_t a, const refine_config & base);

}  // namespace armor
