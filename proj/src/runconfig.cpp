#include "runconfig.hpp"

#include "common.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace armor {

using nlohmann::ordered_json;

// ---- parse helpers ---------------------------------------------------------

static void check_keys(const nlohmann::json & o, const std::string & path,
                       std::initializer_list<const char *> allowed) {
    for (auto it = o.begin(); it != o.end(); ++it) {
        bool known = false;
        for (const char * a : allowed)
            if (it.key() == a) { known = true; break; }
        if (!known)
            fail(errc::parse, "config: unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
    }
}

template <typename T>
static void take(const nlohmann::json & o, const char * key, T & out) {
    auto it = o.find(key);
    if (it != o.end()) out = it->get<T>();
}

template <typename T>
static bool take_seen(const nlohmann::json & o, const char * key, T & out) {
    auto it = o.find(key);
    if (it == o.end()) return false;
    out = it->get<T>();
    return true;
}

static void parse_data(const nlohmann::json & o, dataset_manifest & d, bool & seed_set) {
    check_keys(o, "data", { "seed", "count_sparse", "count_dense", "count_test",
                            "success_fraction_sparse", "success_fraction_dense",
                            "success_fraction_test", "frame_dim", "ep_len", "vocab_hash" });
    seed_set = take_seen(o, "seed", d.seed);
    take(o, "count_sparse", d.count_sparse);
    take(o, "count_dense", d.count_dense);
    take(o, "count_test", d.count_test);
    take(o, "success_fraction_sparse", d.success_fraction_sparse);
    take(o, "success_fraction_dense", d.success_fraction_dense);
    take(o, "success_fraction_test", d.success_fraction_test);
    take(o, "frame_dim", d.frame_dim);
    take(o, "ep_len", d.ep_len);
    take(o, "vocab_hash", d.vocab_hash);
}

static void parse_model(const nlohmann::json & o, model_config & m, uint64_t & init_seed,
                        bool & seed_set) {
    check_keys(o, "model", { "init_seed", "frame_dim", "hidden", "decoder_layers", "attn_heads",
                             "max_reasoning_len", "dropout", "ffn_mult", "max_positions" });
    seed_set = take_seen(o, "init_seed", init_seed);
    take(o, "frame_dim", m.frame_dim);
    take(o, "hidden", m.hidden);
    take(o, "decoder_layers", m.decoder_layers);
    take(o, "attn_heads", m.attn_heads);
    take(o, "max_reasoning_len", m.max_reasoning_len);
    take(o, "dropout", m.dropout);
    take(o, "ffn_mult", m.ffn_mult);
    take(o, "max_positions", m.max_positions);
}

static void parse_train(const nlohmann::json & o, train_config & t, bool & seed_set) {
    check_keys(o, "train", { "seed", "warmup_epochs", "expert_epochs", "online_epochs",
                             "rollout_rounds", "batch_size", "lr_heads", "lr_encoder",
                             "weight_decay", "warmup_ratio", "grad_clip", "temperature",
                             "dense_repeat", "ablation", "expert_loss_masked_only" });
    seed_set = take_seen(o, "seed", t.seed);
    take(o, "warmup_epochs", t.warmup_epochs);
    take(o, "expert_epochs", t.expert_epochs);
    take(o, "online_epochs", t.online_epochs);
    take(o, "rollout_rounds", t.rollout_rounds);
    take(o, "batch_size", t.batch_size);
    take(o, "lr_heads", t.lr_heads);
    take(o, "lr_encoder", t.lr_encoder);
    take(o, "weight_decay", t.weight_decay);
    take(o, "warmup_ratio", t.warmup_ratio);
    take(o, "grad_clip", t.grad_clip);
    take(o, "temperature", t.temperature);
    take(o, "dense_repeat", t.dense_repeat);
    std::string ab;
    if (take_seen(o, "ablation", ab)) t.ablation = ablation_from_name(ab);
    take(o, "expert_loss_masked_only", t.expert_loss_masked_only);
}

static void parse_eval(const nlohmann::json & o, eval_config & e, bool & seed_set) {
    check_keys(o, "eval", { "seed", "chunk", "rounds", "num_traj", "temperature",
                            "lambda", "epsilon" });
    seed_set = take_seen(o, "seed", e.seed);
    take(o, "chunk", e.chunk);
    take(o, "rounds", e.refine.rounds);
    take(o, "num_traj", e.refine.num_traj);
    take(o, "temperature", e.refine.temperature);
    take(o, "lambda", e.refine.lambda);
    take(o, "epsilon", e.refine.epsilon);
}

static void parse_grid(const nlohmann::json & o, run_config & c) {
    check_keys(o, "grid", { "variants", "seeds", "ratios", "sweep_ratios", "threads" });
    auto it = o.find("variants");
    if (it != o.end()) {
        c.grid_variants.clear();
        for (const auto & v : *it) c.grid_variants.push_back(ablation_from_name(v.get<std::string>()));
    }
    take(o, "seeds", c.grid_seeds);
    take(o, "ratios", c.grid_ratios);
    take(o, "sweep_ratios", c.sweep_ratios);
    take(o, "threads", c.grid_threads);
}

static void parse_paths(const nlohmann::json & o, run_paths & p) {
    check_keys(o, "paths", { "data_dir", "checkpoint_dir", "report_dir" });
    take(o, "data_dir", p.data_dir);
    take(o, "checkpoint_dir", p.checkpoint_dir);
    take(o, "report_dir", p.report_dir);
}

static void parse_judge(const nlohmann::json & o, run_config & c) {
    check_keys(o, "judge", { "command", "timeout_ms" });
    take(o, "command", c.judge_command);
    take(o, "timeout_ms", c.judge_timeout_ms);
}

static uint64_t env_seed_override(bool & present) {
    const char * s = std::getenv("ARMOR_SEED");
    present = s != nullptr;
    if (!present) return 0;
    if (*s == '\0') fail(errc::invalid_argument, "ARMOR_SEED: empty value");
    char *   end = nullptr;
    uint64_t v   = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0')
        fail(errc::invalid_argument, std::string("ARMOR_SEED: not an unsigned integer: '") + s + "'");
    return v;
}

// apply one "dotted.key=value" entry onto the raw document; the value is
// parsed as json when well-formed (numbers, booleans, arrays, quoted
// strings) and treated as a plain string otherwise
static void apply_override(nlohmann::json & j, const std::string & kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        fail(errc::invalid_argument, "override must be key=value: '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);

    nlohmann::json * node = &j;
    size_t begin = 0, walked = 0;
    for (;;) {
        const size_t dot  = key.find('.', begin);
        const std::string part = key.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (part.empty())
            fail(errc::invalid_argument, "override: empty key segment in '" + key + "'");
        if (dot == std::string::npos) {
            nlohmann::json parsed = nlohmann::json::parse(val, nullptr, false);
            (*node)[part] = parsed.is_discarded() ? nlohmann::json(val) : parsed;
            return;
        }
        if (node->contains(part) && !(*node)[part].is_object())
            fail(errc::invalid_argument,
                 "override: '" + key.substr(0, walked + part.size()) + "' is not a section");
        node  = &(*node)[part];
        walked += part.size() + 1;
        begin = dot + 1;
    }
}

run_config config_from_json(const std::string & text,
                            const std::vector<std::string> & overrides) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        fail(errc::parse, std::string("config: ") + e.what());
    }
    if (!j.is_object()) fail(errc::parse, "config: top level must be an object");

    // precedence: file < ARMOR_SEED < explicit overrides
    bool env_present = false;
    uint64_t env_seed = env_seed_override(env_present);
    if (env_present) j["seed"] = env_seed;
    for (const auto & kv : overrides) apply_override(j, kv);

    run_config c;
    bool data_seed = false, model_seed = false, train_seed = false, eval_seed = false;
    try {
        check_keys(j, "", { "schema_version", "seed", "data", "model", "train", "eval",
                            "grid", "paths", "judge" });
        take(j, "schema_version", c.schema_version);
        if (c.schema_version != 1)
            fail(errc::parse, "config: unsupported schema_version " + std::to_string(c.schema_version));
        take(j, "seed", c.seed);
        if (auto it = j.find("data"); it != j.end()) parse_data(*it, c.data, data_seed);
        if (auto it = j.find("model"); it != j.end())
            parse_model(*it, c.model, c.model_init_seed, model_seed);
        if (auto it = j.find("train"); it != j.end()) parse_train(*it, c.train, train_seed);
        if (auto it = j.find("eval"); it != j.end()) parse_eval(*it, c.eval, eval_seed);
        if (auto it = j.find("grid"); it != j.end()) parse_grid(*it, c);
        if (auto it = j.find("paths"); it != j.end()) parse_paths(*it, c.paths);
        if (auto it = j.find("judge"); it != j.end()) parse_judge(*it, c);
    } catch (const nlohmann::json::exception & e) {
        fail(errc::parse, std::string("config: ") + e.what());
    }

    if (!data_seed) c.data.seed = seed_stream(c.seed, { 100 });
    if (!model_seed) c.model_init_seed = seed_stream(c.seed, { 101 });
    if (!train_seed) c.train.seed = seed_stream(c.seed, { 102 });
    if (!eval_seed) c.eval.seed = seed_stream(c.seed, { 103 });

    if (c.judge_timeout_ms <= 0)
        fail(errc::invalid_argument, "config: judge.timeout_ms must be positive");
    if (c.grid_threads < 0)
        fail(errc::invalid_argument, "config: grid.threads must be >= 0");
    return c;
}

run_config load_config(const std::string & path, const std::vector<std::string> & overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io, "config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str(), overrides);
}

std::string config_to_json(const run_config & c) {
    ordered_json j;
    j["schema_version"] = c.schema_version;
    j["seed"]           = c.seed;
    j["data"]           = { { "seed", c.data.seed },
                            { "count_sparse", c.data.count_sparse },
                            { "count_dense", c.data.count_dense },
                            { "count_test", c.data.count_test },
                            { "success_fraction_sparse", c.data.success_fraction_sparse },
                            { "success_fraction_dense", c.data.success_fraction_dense },
                            { "success_fraction_test", c.data.success_fraction_test },
                            { "frame_dim", c.data.frame_dim },
                            { "ep_len", c.data.ep_len },
                            { "vocab_hash", c.data.vocab_hash } };
    j["model"]          = { { "init_seed", c.model_init_seed },
                            { "frame_dim", c.model.frame_dim },
                            { "hidden", c.model.hidden },
                            { "decoder_layers", c.model.decoder_layers },
                            { "attn_heads", c.model.attn_heads },
                            { "max_reasoning_len", c.model.max_reasoning_len },
                            { "dropout", c.model.dropout },
                            { "ffn_mult", c.model.ffn_mult },
                            { "max_positions", c.model.max_positions } };
    j["train"]          = { { "seed", c.train.seed },
                            { "warmup_epochs", c.train.warmup_epochs },
                            { "expert_epochs", c.train.expert_epochs },
                            { "online_epochs", c.train.online_epochs },
                            { "rollout_rounds", c.train.rollout_rounds },
                            { "batch_size", c.train.batch_size },
                            { "lr_heads", c.train.lr_heads },
                            { "lr_encoder", c.train.lr_encoder },
                            { "weight_decay", c.train.weight_decay },
                            { "warmup_ratio", c.train.warmup_ratio },
                            { "grad_clip", c.train.grad_clip },
                            { "temperature", c.train.temperature },
                            { "dense_repeat", c.train.dense_repeat },
                            { "ablation", ablation_name(c.train.ablation) },
                            { "expert_loss_masked_only", c.train.expert_loss_masked_only } };
    j["eval"]           = { { "seed", c.eval.seed },
                            { "chunk", c.eval.chunk },
                            { "rounds", c.eval.refine.rounds },
                            { "num_traj", c.eval.refine.num_traj },
                            { "temperature", c.eval.refine.temperature },
                            { "lambda", c.eval.refine.lambda },
                            { "epsilon", c.eval.refine.epsilon } };
    ordered_json variants = ordered_json::array();
    for (ablation_t v : c.grid_variants) variants.push_back(ablation_name(v));
    j["grid"]  = { { "variants", variants },
                   { "seeds", c.grid_seeds },
                   { "ratios", c.grid_ratios },
                   { "sweep_ratios", c.sweep_ratios },
                   { "threads", c.grid_threads } };
    j["paths"] = { { "data_dir", c.paths.data_dir },
                   { "checkpoint_dir", c.paths.checkpoint_dir },
                   { "report_dir", c.paths.report_dir } };
    j["judge"] = { { "command", c.judge_command }, { "timeout_ms", c.judge_timeout_ms } };
    return j.dump(2) + "\n";
}

grid_config grid_from_config(const run_config & c) {
    grid_config g;
    g.data         = c.data;
    g.model        = c.model;
    g.train        = c.train;
    g.eval         = c.eval;
    g.variants     = c.grid_variants;
    g.seeds        = c.grid_seeds;
    g.ratios       = c.grid_ratios;
    g.sweep_ratios = c.sweep_ratios;
    g.threads      = c.grid_threads;
    return g;
}

}  // namespace armor
