#include "datagen.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace armor {

using nlohmann::json;

const char * split_name(split_t s) {
    switch (s) {
        case split_t::sparse: return "sparse";
        case split_t::dense:  return "dense";
        case split_t::test:   return "test";
    }
    fail(errc::invalid_argument, "bad split");
}

split_t split_from_name(const std::string & s) {
    if (s == "sparse") return split_t::sparse;
    if (s == "dense")  return split_t::dense;
    if (s == "test")   return split_t::test;
    fail(errc::parse, "unknown split '" + s + "'");
}

static constexpr uint64_t k_signature_seed = 0x5eedf00dull;
static constexpr double   k_noise_sigma    = 0.05;
static constexpr double   k_sig_coeff      = 0.8;
static constexpr int      k_sig_start      = 6;  // signature on frames 6..11

const std::vector<std::vector<int>> & reasoning_prefixes() {
    static const std::vector<std::vector<int>> p = {
        vocab::to_ids({ "i", "observe" }),
        vocab::to_ids({ "i", "see" }),
    };
    return p;
}

const std::vector<int> & success_template() {
    static const std::vector<int> t =
        vocab::to_ids({ "the", "robot", "succeeded", "at", "the", "task" });
    return t;
}

const std::vector<failure_mode> & modes() {
    static const std::vector<failure_mode> ms = [] {
        struct def {
            const char * name;
            std::vector<std::string> words;
        };
        const std::vector<def> defs = {
            { "gripper_not_closed", { "the", "robot", "did", "not", "close", "its", "gripper" } },
            { "offset_y", { "the", "gripper", "moved", "with", "an", "offset", "along", "y" } },
            { "dropped_midway",
              { "the", "robot", "dropped", "the", "item", "midway", "through", "the", "task" } },
            { "wrong_bin",
              { "the", "robot", "placed", "the", "item", "in", "the", "wrong", "bin" } },
            { "item_damaged", { "the", "item", "was", "damaged", "during", "the", "task" } },
            { "collision", { "the", "robot", "arm", "collided", "with", "an", "obstacle" } },
            { "no_grasp", { "the", "robot", "did", "not", "grasp", "the", "item" } },
            { "spillage", { "the", "item", "spilled", "its", "contents", "in", "the", "bin" } },
        };

        // orthonormal signatures: gram-schmidt over seeded gaussian draws
        rng g(k_signature_seed);
        std::vector<std::vector<double>> sig(k_num_modes,
                                             std::vector<double>(k_frame_dim));
        for (auto & v : sig)
            for (auto & x : v) x = g.normal();
        for (int i = 0; i < k_num_modes; ++i) {
            for (int j = 0; j < i; ++j) {
                double d = 0;
                for (int c = 0; c < k_frame_dim; ++c) d += sig[i][c] * sig[j][c];
                for (int c = 0; c < k_frame_dim; ++c) sig[i][c] -= d * sig[j][c];
            }
            double n = 0;
            for (int c = 0; c < k_frame_dim; ++c) n += sig[i][c] * sig[i][c];
            n = std::sqrt(n);
            if (n < 1e-9) fail(errc::runtime, "degenerate mode signature");
            for (int c = 0; c < k_frame_dim; ++c) sig[i][c] /= n;
        }

        std::vector<failure_mode> out;
        for (int i = 0; i < k_num_modes; ++i)
            out.push_back({ i, defs[(size_t) i].name,
                            vocab::to_ids(defs[(size_t) i].words), sig[(size_t) i] });
        return out;
    }();
    return ms;
}

std::vector<int> render_reasoning(int mode, rng & g) {
    if (mode < 0) return success_template();
    if (mode >= k_num_modes) fail(errc::invalid_argument, "render_reasoning: bad mode");
    const auto & pref = reasoning_prefixes()[(size_t) g.below(2)];
    std::vector<int> r = pref;
    const auto & t = modes()[(size_t) mode].tmpl;
    r.insert(r.end(), t.begin(), t.end());
    return r;
}

episode generate_episode(uint64_t seed, bool failure, int mode) {
    if (failure && (mode < 0 || mode >= k_num_modes))
        fail(errc::invalid_argument, "generate_episode: failure requires a mode in 0..7");
    if (!failure && mode != -1)
        fail(errc::invalid_argument, "generate_episode: success must not carry a mode");

    episode ep;
    ep.failure = failure;
    ep.mode    = mode;
    ep.frames  = tensor(k_ep_len, k_frame_dim);

    rng g(seed);
    for (int t = 0; t < k_ep_len; ++t) {
        double base = (double) t / (double) k_ep_len;
        for (int d = 0; d < k_frame_dim; ++d)
            ep.frames.at(t, d) = base + k_noise_sigma * g.normal();
    }
    if (failure) {
        const auto & sig = modes()[(size_t) mode].signature;
        for (int t = k_sig_start; t < k_ep_len; ++t)
            for (int d = 0; d < k_frame_dim; ++d)
                ep.frames.at(t, d) += k_sig_coeff * sig[(size_t) d];
    }
    ep.reasoning     = render_reasoning(failure ? mode : -1, g);
    ep.has_reasoning = true;
    return ep;
}

static std::vector<episode> generate_split(const dataset_manifest & cfg, split_t split,
                                           int64_t n, double frac) {
    int64_t n_succ = (int64_t) std::llround(frac * (double) n);
    uint64_t split_id = (uint64_t) split;

    // label/mode slots, failures round-robin across modes, then shuffled
    std::vector<std::pair<bool, int>> slots;
    slots.reserve((size_t) n);
    for (int64_t i = 0; i < n_succ; ++i) slots.push_back({ false, -1 });
    for (int64_t i = 0; i < n - n_succ; ++i) slots.push_back({ true, (int) (i % k_num_modes) });
    rng shuf(seed_stream(cfg.seed, { split_id, 1 }));
    shuf.shuffle(slots);

    std::vector<episode> out;
    out.reserve((size_t) n);
    char idbuf[64];
    for (int64_t i = 0; i < n; ++i) {
        auto [failure, mode] = slots[(size_t) i];
        episode ep = generate_episode(seed_stream(cfg.seed, { split_id, 2, (uint64_t) i }),
                                      failure, mode);
        std::snprintf(idbuf, sizeof(idbuf), "%s-%06lld", split_name(split), (long long) i);
        ep.id    = idbuf;
        ep.split = split;
        if (split == split_t::sparse) {
            ep.has_reasoning = false;
            ep.reasoning.clear();
        }
        out.push_back(std::move(ep));
    }
    return out;
}

dataset generate_dataset(const dataset_manifest & cfg) {
    if (cfg.count_sparse <= 0 || cfg.count_dense <= 0 || cfg.count_test <= 0)
        fail(errc::invalid_argument, "generate_dataset: counts must be positive");
    if (cfg.success_fraction_test != 0.5)
        fail(errc::invalid_argument, "generate_dataset: test split must be balanced (0.5)");
    for (double f : { cfg.success_fraction_sparse, cfg.success_fraction_dense })
        if (f < 0.0 || f > 1.0)
            fail(errc::invalid_argument, "generate_dataset: success fraction out of [0,1]");
    if (cfg.frame_dim != k_frame_dim || cfg.ep_len != k_ep_len)
        fail(errc::invalid_argument, "generate_dataset: unsupported frame_dim/ep_len");

    dataset ds;
    ds.manifest            = cfg;
    ds.manifest.vocab_hash = vocab::hash();
    ds.sparse = generate_split(cfg, split_t::sparse, cfg.count_sparse, cfg.success_fraction_sparse);
    ds.dense  = generate_split(cfg, split_t::dense, cfg.count_dense, cfg.success_fraction_dense);
    ds.test   = generate_split(cfg, split_t::test, cfg.count_test, cfg.success_fraction_test);
    return ds;
}

static json episode_to_json(const episode & ep) {
    json j;
    j["episode_id"] = ep.id;
    json frames = json::array();
    for (int64_t t = 0; t < ep.frames.rows; ++t) {
        json row = json::array();
        for (int64_t d = 0; d < ep.frames.cols; ++d) row.push_back(ep.frames.at(t, d));
        frames.push_back(std::move(row));
    }
    j["frames"] = std::move(frames);
    j["label"]  = ep.failure ? "failure" : "success";
    if (ep.failure) j["failure_mode"] = ep.mode;
    if (ep.has_reasoning) j["reasoning"] = vocab::to_words(ep.reasoning);
    j["split"] = split_name(ep.split);
    return j;
}

static episode episode_from_json(const json & j, split_t expected_split) {
    static const std::vector<std::string> allowed = { "episode_id", "frames", "label",
                                                      "failure_mode", "reasoning", "split" };
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto & k : allowed) ok = ok || it.key() == k;
        if (!ok) fail(errc::parse, "episode: unexpected field '" + it.key() + "'");
    }
    episode ep;
    ep.id = j.at("episode_id").get<std::string>();
    const json & fr = j.at("frames");
    if (!fr.is_array() || fr.size() != k_ep_len)
        fail(errc::parse, "episode " + ep.id + ": frames must have " +
                              std::to_string(k_ep_len) + " rows");
    ep.frames = tensor(k_ep_len, k_frame_dim);
    for (int t = 0; t < k_ep_len; ++t) {
        const json & row = fr[(size_t) t];
        if (!row.is_array() || row.size() != k_frame_dim)
            fail(errc::parse, "episode " + ep.id + ": bad frame width");
        for (int d = 0; d < k_frame_dim; ++d) ep.frames.at(t, d) = row[(size_t) d].get<double>();
    }
    std::string label = j.at("label").get<std::string>();
    if (label != "success" && label != "failure")
        fail(errc::parse, "episode " + ep.id + ": bad label '" + label + "'");
    ep.failure = label == "failure";

    if (j.contains("failure_mode")) {
        if (!ep.failure)
            fail(errc::parse, "episode " + ep.id + ": failure_mode on a success episode");
        ep.mode = j.at("failure_mode").get<int>();
        if (ep.mode < 0 || ep.mode >= k_num_modes)
            fail(errc::parse, "episode " + ep.id + ": failure_mode out of range");
    } else if (ep.failure) {
        fail(errc::parse, "episode " + ep.id + ": failure episode missing failure_mode");
    }

    ep.split = split_from_name(j.at("split").get<std::string>());
    if (ep.split != expected_split)
        fail(errc::parse, "episode " + ep.id + ": split field does not match file");

    bool want_reasoning = expected_split != split_t::sparse;
    if (j.contains("reasoning")) {
        if (!want_reasoning)
            fail(errc::parse, "episode " + ep.id + ": sparse episodes must not carry reasoning");
        ep.reasoning     = vocab::to_ids(j.at("reasoning").get<std::vector<std::string>>());
        ep.has_reasoning = true;
    } else if (want_reasoning) {
        fail(errc::parse, "episode " + ep.id + ": missing reasoning");
    }
    return ep;
}

void write_dataset(const dataset & ds, const std::string & dir) {
    std::filesystem::create_directories(dir);
    auto write_split = [&](const std::vector<episode> & eps, const char * name) {
        std::ofstream f(dir + "/" + name);
        if (!f) fail(errc::io, std::string("cannot write ") + dir + "/" + name);
        for (const auto & ep : eps) f << episode_to_json(ep).dump() << '\n';
        if (!f) fail(errc::io, std::string("write failed for ") + name);
    };
    write_split(ds.sparse, "sparse.jsonl");
    write_split(ds.dense, "dense.jsonl");
    write_split(ds.test, "test.jsonl");

    json m;
    m["seed"]   = ds.manifest.seed;
    m["counts"] = { { "sparse", ds.manifest.count_sparse },
                    { "dense", ds.manifest.count_dense },
                    { "test", ds.manifest.count_test } };
    m["success_fraction"] = { { "sparse", ds.manifest.success_fraction_sparse },
                              { "dense", ds.manifest.success_fraction_dense },
                              { "test", ds.manifest.success_fraction_test } };
    m["frame_dim"]  = ds.manifest.frame_dim;
    m["ep_len"]     = ds.manifest.ep_len;
    m["vocab_hash"] = ds.manifest.vocab_hash;
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) fail(errc::io, "cannot write manifest.json");
    mf << m.dump(2) << '\n';

    std::ofstream vf(dir + "/vocab.json");
    if (!vf) fail(errc::io, "cannot write vocab.json");
    vf << json(vocab::tokens()).dump() << '\n';
}

std::vector<episode> load_split(const std::string & path, split_t split) {
    std::ifstream f(path);
    if (!f) fail(errc::io, "cannot open " + path);
    std::vector<episode> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception & e) {
            fail(errc::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            out.push_back(episode_from_json(j, split));
        } catch (const error & e) {
            fail(e.code, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

dataset_manifest load_manifest(const std::string & path) {
    std::ifstream f(path);
    if (!f) fail(errc::io, "cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception & e) {
        fail(errc::parse, path + ": " + e.what());
    }
    dataset_manifest m;
    try {
        m.seed         = j.at("seed").get<uint64_t>();
        m.count_sparse = j.at("counts").at("sparse").get<int64_t>();
        m.count_dense  = j.at("counts").at("dense").get<int64_t>();
        m.count_test   = j.at("counts").at("test").get<int64_t>();
        m.success_fraction_sparse = j.at("success_fraction").at("sparse").get<double>();
        m.success_fraction_dense  = j.at("success_fraction").at("dense").get<double>();
        m.success_fraction_test   = j.at("success_fraction").at("test").get<double>();
        m.frame_dim  = j.at("frame_dim").get<int>();
        m.ep_len     = j.at("ep_len").get<int>();
        m.vocab_hash = j.at("vocab_hash").get<std::string>();
    } catch (const json::exception & e) {
        fail(errc::parse, path + ": " + e.what());
    }
    return m;
}

dataset load_dataset(const std::string & dir) {
    dataset ds;
    ds.manifest = load_manifest(dir + "/manifest.json");
    if (ds.manifest.vocab_hash != vocab::hash())
        fail(errc::parse, dir + ": vocab_hash does not match this build's vocabulary");
    ds.sparse = load_split(dir + "/sparse.jsonl", split_t::sparse);
    ds.dense  = load_split(dir + "/dense.jsonl", split_t::dense);
    ds.test   = load_split(dir + "/test.jsonl", split_t::test);
    auto check = [&](size_t got, int64_t want, const char * name) {
        if ((int64_t) got != want)
            fail(errc::parse, dir + ": " + name + " count does not match manifest");
    };
    check(ds.sparse.size(), ds.manifest.count_sparse, "sparse");
    check(ds.dense.size(), ds.manifest.count_dense, "dense");
    check(ds.test.size(), ds.manifest.count_test, "test");
    return ds;
}

}  // namespace armor
