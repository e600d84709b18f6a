// C API over the pipeline: thin argument handling and artifact plumbing on
// top of the core modules. every command echoes its fully resolved config
// beside its outputs so a run can be reproduced from the artifacts alone.

#include "armor.h"

#include "checkpoint.hpp"
#include "runconfig.hpp"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;
namespace fs = std::filesystem;

using namespace armor;

struct armor_config {
    run_config c;
};

namespace {

thread_local std::string g_error;

armor_status status_of(const error & e) {
    switch (e.code) {
        case errc::invalid_argument:
        case errc::parse:
            return ARMOR_ERR_VALIDATION;
        case errc::io:
        case errc::runtime:
            break;
    }
    return ARMOR_ERR_RUNTIME;
}

template <typename F> armor_status guarded(F && f) {
    try {
        f();
        g_error.clear();
        return ARMOR_OK;
    } catch (const error & e) {
        g_error = e.what();
        return status_of(e);
    } catch (const std::exception & e) {
        g_error = e.what();
        return ARMOR_ERR_RUNTIME;
    } catch (...) {
        g_error = "unknown error";
        return ARMOR_ERR_RUNTIME;
    }
}

char * dup_string(const std::string & s) {
    char * p = (char *) std::malloc(s.size() + 1);
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

void give(char ** out, const std::string & s) {
    if (out) *out = dup_string(s);
}

const run_config & conf(const armor_config * cfg) {
    if (!cfg) fail(errc::invalid_argument, "config is null");
    return cfg->c;
}

std::vector<std::string> override_vec(const char * const * overrides, size_t n) {
    std::vector<std::string> v;
    v.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!overrides[i]) fail(errc::invalid_argument, "override entry is null");
        v.emplace_back(overrides[i]);
    }
    return v;
}

void write_text(const std::string & path, const std::string & text) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(errc::io, "cannot write " + path);
    f << text;
    if (!f) fail(errc::io, "write failed for " + path);
}

void write_echo(const run_config & c, const std::string & dir) {
    write_text(dir + "/config.json", config_to_json(c));
}

// checksums of the files that exist under dir, keyed by file name
json checksum_files(const std::string & dir, std::initializer_list<const char *> names) {
    json files = json::object();
    for (const char * name : names) {
        const std::string path = dir + "/" + name;
        if (fs::exists(path)) files[name] = hex64(file_checksum(path));
    }
    return files;
}

void require_file(const std::string & path, const std::string & hint) {
    if (!fs::exists(path)) fail(errc::invalid_argument, path + " not found; " + hint);
}

model load_model(const run_config & c, const std::string & ck) {
    model m;
    m.cfg = c.model;
    m.init(c.model_init_seed);
    load_checkpoint(m.ps, ck);
    return m;
}

judge_factory judge_from(const run_config & c) {
    if (c.judge_command.empty()) {
        return [] { return std::make_unique<template_judge>(); };
    }
    const std::string cmd = c.judge_command;
    const int64_t     tmo = c.judge_timeout_ms;
    return [cmd, tmo] { return std::make_unique<process_judge>(cmd, tmo); };
}

// the dataset on disk must be the one the config describes, otherwise the
// echoed config would not reproduce the run
void check_data_spec(const dataset_manifest & have, const dataset_manifest & want,
                     const std::string & dir) {
    const bool same = have.seed == want.seed && have.count_sparse == want.count_sparse &&
                      have.count_dense == want.count_dense &&
                      have.count_test == want.count_test &&
                      have.success_fraction_sparse == want.success_fraction_sparse &&
                      have.success_fraction_dense == want.success_fraction_dense &&
                      have.success_fraction_test == want.success_fraction_test &&
                      have.frame_dim == want.frame_dim && have.ep_len == want.ep_len;
    if (!same) {
        fail(errc::invalid_argument,
             "dataset at " + dir + " does not match the config's data section; "
             "rerun gen-data or align data.* with the dataset's manifest");
    }
}

split_t peek_split(const std::string & path) {
    std::ifstream f(path);
    if (!f) fail(errc::io, "cannot open " + path);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("split")) {
            fail(errc::parse, path + ": first record carries no split field");
        }
        return split_from_name(j.at("split").get<std::string>());
    }
    fail(errc::invalid_argument, path + ": no episodes");
}

json selected_json(const round_output & out, double lambda) {
    return {{"detection", out.det_failure ? "failure" : "success"},
            {"det_prob", out.det_prob},
            {"reasoning", vocab::to_text(content_tokens(out.reasoning))},
            {"h_det", out.h_det},
            {"h_reason", out.h_reason},
            {"cost", refine_cost(out, lambda)}};
}

}  // namespace

extern "C" {

const char * armor_version(void) { return "1.0.0"; }

const char * armor_last_error(void) { return g_error.c_str(); }

void armor_string_free(char * s) { std::free(s); }

armor_status armor_config_parse(const char * json_text, const char * const * overrides,
                                size_t n_overrides, armor_config ** out) {
    return guarded([&] {
        if (!out) fail(errc::invalid_argument, "output config pointer is null");
        if (n_overrides > 0 && !overrides) {
            fail(errc::invalid_argument, "override array is null");
        }
        auto cfg = std::make_unique<armor_config>();
        cfg->c = config_from_json(json_text ? json_text : "{}",
                                  override_vec(overrides, n_overrides));
        *out = cfg.release();
    });
}

armor_status armor_config_load(const char * path, const char * const * overrides,
                               size_t n_overrides, armor_config ** out) {
    return guarded([&] {
        if (!out) fail(errc::invalid_argument, "output config pointer is null");
        if (n_overrides > 0 && !overrides) {
            fail(errc::invalid_argument, "override array is null");
        }
        auto cfg = std::make_unique<armor_config>();
        if (path) {
            cfg->c = load_config(path, override_vec(overrides, n_overrides));
        } else {
            cfg->c = config_from_json("{}", override_vec(overrides, n_overrides));
        }
        *out = cfg.release();
    });
}

void armor_config_free(armor_config * cfg) { delete cfg; }

armor_status armor_config_json(const armor_config * cfg, char ** out_json) {
    return guarded([&] { give(out_json, config_to_json(conf(cfg))); });
}

armor_status armor_gen_data(const armor_config * cfg, char ** out_json) {
    return guarded([&] {
        const run_config & c  = conf(cfg);
        const dataset      ds = generate_dataset(c.data);
        write_dataset(ds, c.paths.data_dir);
        write_echo(c, c.paths.data_dir);
        json out = {{"dir", c.paths.data_dir},
                    {"files", checksum_files(c.paths.data_dir,
                                             {"sparse.jsonl", "dense.jsonl", "test.jsonl",
                                              "manifest.json", "vocab.json", "config.json"})}};
        give(out_json, out.dump(2) + "\n");
    });
}

armor_status armor_train(const armor_config * cfg, char ** out_json) {
    return guarded([&] {
        const run_config & c = conf(cfg);
        require_file(c.paths.data_dir + "/manifest.json",
                     "generate the dataset first (gen-data)");
        const dataset ds = load_dataset(c.paths.data_dir);
        check_data_spec(ds.manifest, c.data, c.paths.data_dir);

        const std::string dir = c.paths.checkpoint_dir;
        fs::create_directories(dir);
        write_echo(c, dir);

        model m;
        m.cfg = c.model;
        m.init(c.model_init_seed);
        run_training(m, ds, c.train, dir + "/train_log.jsonl", dir);

        json out = {{"checkpoint_dir", dir},
                    {"planned_steps", planned_steps(c.train, ds)},
                    {"files", checksum_files(dir, {"warmup.ckpt", "expert.ckpt", "final.ckpt",
                                                   "train_log.jsonl", "config.json"})}};
        give(out_json, out.dump(2) + "\n");
    });
}

armor_status armor_infer(const armor_config * cfg, const char * checkpoint,
                         const char * episode_file, const char * episode_id,
                         char ** out_json) {
    return guarded([&] {
        const run_config & c = conf(cfg);
        const std::string ck = checkpoint ? checkpoint : c.paths.checkpoint_dir + "/final.ckpt";
        require_file(ck, "train a model first (train)");
        const std::string src = episode_file ? episode_file : c.paths.data_dir + "/test.jsonl";
        require_file(src, "generate the dataset first (gen-data) or pass an episode file");

        const auto eps = load_split(src, peek_split(src));
        if (eps.empty()) fail(errc::invalid_argument, src + ": no episodes");
        int64_t idx = 0;
        if (episode_id) {
            idx = -1;
            for (int64_t i = 0; i < (int64_t) eps.size(); ++i) {
                if (eps[(size_t) i].id == episode_id) {
                    idx = i;
                    break;
                }
            }
            if (idx < 0) {
                fail(errc::invalid_argument,
                     std::string("episode '") + episode_id + "' not found in " + src);
            }
        }
        const episode & ep = eps[(size_t) idx];

        model m = load_model(c, ck);
        std::vector<const tensor *> frames(eps.size());
        for (size_t i = 0; i < eps.size(); ++i) frames[i] = &eps[i].frames;
        model_policy pol(m, frames, c.eval.refine.temperature, c.eval.seed);
        const refine_result res =
            refine_batch(pol, {idx}, task_prompt::both, c.eval.refine).front();

        json rounds = json::array();
        for (size_t t = 0; t < res.rounds.size(); ++t) {
            const round_record & rr = res.rounds[t];
            rounds.push_back({{"round", t + 1},
                              {"costs", rr.costs},
                              {"best", rr.best},
                              {"triggered_stop", rr.triggered_stop},
                              {"selected", selected_json(rr.selected, c.eval.refine.lambda)}});
        }
        const std::string report = c.paths.report_dir + "/infer_" + ep.id + ".json";
        json out = {{"episode_id", ep.id},
                    {"source", src},
                    {"index", idx},
                    {"checkpoint", ck},
                    {"report_path", report},
                    {"detection", res.final_out.det_failure ? "failure" : "success"},
                    {"det_prob", res.final_out.det_prob},
                    {"reasoning", vocab::to_text(content_tokens(res.final_out.reasoning))},
                    {"rounds_run", res.rounds_run},
                    {"stopped_early", res.stopped_early},
                    {"rounds", rounds}};

        const std::string text = out.dump(2) + "\n";
        write_text(report, text);
        write_echo(c, c.paths.report_dir);
        give(out_json, text);
    });
}

armor_status armor_eval(const armor_config * cfg, const char * checkpoint,
                        const char * report_path, char ** out_json) {
    return guarded([&] {
        const run_config & c = conf(cfg);
        const std::string ck = checkpoint ? checkpoint : c.paths.checkpoint_dir + "/final.ckpt";
        require_file(ck, "train a model first (train)");
        require_file(c.paths.data_dir + "/manifest.json",
                     "generate the dataset first (gen-data)");

        const dataset_manifest mf = load_manifest(c.paths.data_dir + "/manifest.json");
        if (mf.vocab_hash != vocab::hash()) {
            fail(errc::parse, c.paths.data_dir + ": vocab_hash does not match this build");
        }
        const auto test = load_split(c.paths.data_dir + "/test.jsonl", split_t::test);

        model m = load_model(c, ck);
        auto  j = judge_from(c)();
        const eval_report rep = run_eval(m, test, *j, c.eval);

        const std::string path =
            report_path ? report_path : c.paths.report_dir + "/eval.json";
        json out = {{"checkpoint", ck},
                    {"data_dir", c.paths.data_dir},
                    {"report_path", path},
                    {"report", report_json(rep)}};
        const std::string text = out.dump(2) + "\n";
        write_text(path, text);
        write_echo(c, fs::path(path).has_parent_path()
                          ? fs::path(path).parent_path().string()
                          : std::string("."));
        give(out_json, text);
    });
}

armor_status armor_ablate(const armor_config * cfg, const char * grid,
                          const char * report_path, char ** out_json, char ** out_table) {
    return guarded([&] {
        const run_config & c = conf(cfg);
        grid_config g = grid_from_config(c);
        const std::string sel = grid ? grid : "all";
        if (sel == "variants") {
            g.sweep_ratios = false;
        } else if (sel == "ratio") {
            g.variants     = {ablation_t::full};
            g.sweep_ratios = true;
        } else if (sel != "all") {
            fail(errc::invalid_argument,
                 "unknown grid '" + sel + "' (expected variants, ratio or all)");
        }

        const grid_report rep = run_ablations(g, judge_from(c), &std::cerr);

        const std::string text = grid_json(rep).dump(2) + "\n";
        const std::string path =
            report_path ? report_path : c.paths.report_dir + "/ablate.json";
        write_text(path, text);
        write_echo(c, fs::path(path).has_parent_path()
                          ? fs::path(path).parent_path().string()
                          : std::string("."));
        give(out_json, text);
        if (out_table) {
            std::ostringstream table;
            print_grid(table, rep);
            *out_table = dup_string(table.str());
        }
    });
}

}  // extern "C"
