#pragma once

#include "datagen.hpp"
#include "evalx.hpp"

namespace armor {

// output locations for a run; all artifacts land under these, never the cwd
struct run_paths {
    std::string data_dir       = "data";
    std::string checkpoint_dir = "checkpoints";
    std::string report_dir     = "reports";
};

// one self-describing config driving every command. the top-level seed feeds
// fixed derivation streams for any section seed not given explicitly:
// data 100, model init 101, train 102, eval 103 (the same derivation the
// ablation grid applies per run seed).
struct run_config {
    int64_t          schema_version = 1;
    uint64_t         seed           = 1;
    uint64_t         model_init_seed = 0;  // resolved; 0 never occurs after parsing
    dataset_manifest data;
    model_config     model;
    train_config     train;
    eval_config      eval;
    run_paths        paths;

    // ablation grid lists (variants/seeds/ratios); other grid fields come
    // from the sections above
    std::vector<ablation_t> grid_variants = {ablation_t::full, ablation_t::multitask_only,
                                             ablation_t::refinement_only, ablation_t::offline_only,
                                             ablation_t::online_only};
    std::vector<uint64_t>   grid_seeds    = {1, 2, 3, 4};
    std::vector<int64_t>    grid_ratios   = {2, 5, 10, 30};
    bool                    sweep_ratios  = true;
    int                     grid_threads  = 0;  // 0 = hardware concurrency

    std::string judge_command;            // empty: deterministic template judge
    int64_t     judge_timeout_ms = 10000;

    run_config() {
        // benchmark split sizes; a config file can override any of them
        data.count_sparse = 2000;
        data.count_dense  = 200;
        data.count_test   = 300;
    }
};

// parse and resolve a config from json text. unknown keys are rejected with
// their full path; section seeds default from the top-level seed; the
// ARMOR_SEED environment variable, when set, replaces the top-level seed
// before derivation (explicit section seeds still win). overrides are
// "dotted.key=value" entries applied over the document after the environment
// override, so "seed=..." given here wins over ARMOR_SEED; values parse as
// json when well-formed and as plain strings otherwise.
run_config config_from_json(const std::string & text,
                            const std::vector<std::string> & overrides = {});

// read a config file and resolve it via config_from_json
run_config load_config(const std::string & path,
                       const std::vector<std::string> & overrides = {});

// fully resolved echo: every defaulted or derived value is materialized, so
// re-running from the echo reproduces the run without ARMOR_SEED set
std::string config_to_json(const run_config & cfg);

// assemble the grid for the ablate command from a resolved config
grid_config grid_from_config(const run_config & cfg);

}  // namespace armor
