#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "checkpoint.hpp"
#include "refine.hpp"
#include "train.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace armor;

namespace {

dataset small_dataset(uint64_t seed, int64_t n_sparse, int64_t n_dense) {
    dataset_manifest mf;
    mf.seed         = seed;
    mf.count_sparse = n_sparse;
    mf.count_dense  = n_dense;
    mf.count_test   = 8;
    return generate_dataset(mf);
}

model small_model(uint64_t seed) {
    model m;
    m.cfg.hidden   = 32;
    m.cfg.ffn_mult = 2;
    m.init(seed);
    return m;
}

// eval-mode loss over a list of episodes under their unconditioned contexts
double eval_loss(model & m, const std::vector<const episode *> & eps) {
    const int64_t b = (int64_t) eps.size();
    std::vector<const tensor *>   frames((size_t) b);
    std::vector<std::vector<int>> ct((size_t) b);
    std::vector<double>           y((size_t) b);
    std::vector<std::vector<int>> targets;
    for (int64_t i = 0; i < b; ++i) {
        frames[(size_t) i] = &eps[(size_t) i]->frames;
        ct[(size_t) i]     = context_tokens(initial_context(task_prompt::both));
        y[(size_t) i]      = eps[(size_t) i]->failure ? 1.0 : 0.0;
        std::vector<int> t = eps[(size_t) i]->reasoning;
        t.push_back(vocab::tok_eos);
        targets.push_back(std::move(t));
    }
    mgraph g(m);
    cm_pack cm = build_context_memory(g, frames, ct);
    ad::node * bce = ad::bce_rows(g.t, classify_probs(g, cm), y, 1e-12);
    cm_pack cm2 = build_context_memory(g, frames, ct);
    ad::node * ntp = ntp_rows(g, cm2, targets);
    std::vector<double> w((size_t) b, 1.0 / (double) b);
    return ad::rowsum_weighted(g.t, bce, w)->val.item() +
           ad::rowsum_weighted(g.t, ntp, w)->val.item();
}

struct tmpdir {
    std::string path;
    explicit tmpdir(const std::string & name) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~tmpdir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("stage plans keep the total epoch budget per ablation") {
    train_config cfg;  // 3 + 3 + 10
    cfg.ablation = ablation_t::full;
    stage_plan p = plan_stages(cfg);
    CHECK(p.warmup == 3);
    CHECK(p.expert == 3);
    CHECK(p.online == 10);

    cfg.ablation = ablation_t::multitask_only;
    p = plan_stages(cfg);
    CHECK(p.warmup == 16);
    CHECK(p.expert == 0);
    CHECK(p.online == 0);

    cfg.ablation = ablation_t::refinement_only;
    p = plan_stages(cfg);
    CHECK(p.warmup == 16);

    cfg.ablation = ablation_t::offline_only;
    p = plan_stages(cfg);
    CHECK(p.warmup == 8);
    CHECK(p.expert == 8);
    CHECK(p.online == 0);

    cfg.ablation = ablation_t::online_only;
    p = plan_stages(cfg);
    CHECK(p.warmup == 0);
    CHECK(p.online == 16);

    CHECK(std::string(ablation_name(ablation_t::offline_only)) == "offline_only");
    CHECK(ablation_from_name("online_only") == ablation_t::online_only);
    CHECK_THROWS_AS(ablation_from_name("bogus"), error);
}

TEST_CASE("planned step counts follow the per-stage pool sizes") {
    dataset ds = small_dataset(7, 20, 12);
    train_config cfg;
    cfg.batch_size    = 8;
    cfg.warmup_epochs = 2;   // union 32 -> 4 steps per epoch
    cfg.expert_epochs = 1;   // dense 12 -> 2 steps
    cfg.online_epochs = 1;   // 20 + 2*12 = 44 -> 6 steps
    CHECK(planned_steps(cfg, ds) == 2 * 4 + 2 + 6);

    cfg.ablation = ablation_t::offline_only;  // 2 warmup + 2 expert epochs
    CHECK(planned_steps(cfg, ds) == 2 * 4 + 2 * 2);
}

TEST_CASE("a small model memorizes a tiny dense split") {
    dataset ds = small_dataset(21, 4, 16);
    ds.sparse.clear();  // overfit the dense split alone, one batch per epoch
    model   m  = small_model(3);

    train_config cfg;
    cfg.warmup_epochs = 200;  // one step per epoch at this size
    cfg.expert_epochs = 0;
    cfg.online_epochs = 0;
    cfg.batch_size    = 16;
    cfg.seed          = 5;
    cfg.lr_heads      = 1e-2;  // overfitting a fixed batch wants a hotter rate
    cfg.lr_encoder    = 2e-3;  // than the full-pipeline defaults

    run_training(m, ds, cfg);

    std::vector<const episode *> eps;
    for (const auto & e : ds.dense) eps.push_back(&e);
    CHECK(eval_loss(m, eps) < 0.05);
}

TEST_CASE("training is reproducible and seed-sensitive") {
    dataset ds = small_dataset(9, 8, 8);
    train_config cfg;
    cfg.warmup_epochs = 1;
    cfg.expert_epochs = 1;
    cfg.online_epochs = 1;
    cfg.batch_size    = 8;
    cfg.seed          = 77;

    tmpdir d1("armor_train_a"), d2("armor_train_b"), d3("armor_train_c");
    {
        model m = small_model(4);
        run_training(m, ds, cfg, "", d1.path);
    }
    {
        model m = small_model(4);
        run_training(m, ds, cfg, "", d2.path);
    }
    train_config cfg2 = cfg;
    cfg2.seed         = 78;
    {
        model m = small_model(4);
        run_training(m, ds, cfg2, "", d3.path);
    }
    CHECK(file_checksum(d1.path + "/final.ckpt") == file_checksum(d2.path + "/final.ckpt"));
    CHECK(file_checksum(d1.path + "/final.ckpt") != file_checksum(d3.path + "/final.ckpt"));
    CHECK(file_checksum(d1.path + "/warmup.ckpt") == file_checksum(d2.path + "/warmup.ckpt"));
}

TEST_CASE("sparse samples carry an exactly-zero next-token weight in every phase") {
    dataset ds = small_dataset(11, 10, 6);
    model   m  = small_model(6);

    train_config cfg;
    cfg.warmup_epochs = 1;
    cfg.expert_epochs = 1;
    cfg.online_epochs = 1;
    cfg.rollout_rounds = 2;
    cfg.batch_size    = 8;
    cfg.seed          = 13;

    std::set<std::string> sparse_ids;
    for (const auto & e : ds.sparse) sparse_ids.insert(e.id);

    int64_t n_sparse_records = 0, n_dense_records = 0, n_online_rounds = 0;
    run_training(m, ds, cfg, "", "", [&](const sample_loss & sl) {
        const bool is_sparse = sparse_ids.count(sl.episode_id) > 0;
        CHECK(sl.dense == !is_sparse);
        if (is_sparse) {
            CHECK(sl.ntp_weight == 0.0);  // exact zero, all phases
            CHECK(sl.ntp == 0.0);         // never even computed
            n_sparse_records += 1;
        } else {
            CHECK(sl.ntp_weight == 1.0);  // default config: both losses on
            CHECK(sl.ntp > 0.0);
            n_dense_records += 1;
        }
        CHECK(sl.bce_weight == 1.0);
        CHECK(sl.bce >= 0.0);
        if (std::string(sl.phase) == "online") {
            CHECK(sl.round >= 1);
            CHECK(sl.round <= 2);
            n_online_rounds += 1;
        } else {
            CHECK(sl.round == 0);
        }
        if (std::string(sl.phase) == "expert") CHECK(!is_sparse);
    });

    // warmup sees each sample once; online replays each of the 2 rounds
    // for 10 sparse + 2*6 dense samples; expert sees the 6 dense once
    CHECK(n_sparse_records == 10 + 10 * 2);
    CHECK(n_dense_records == 6 + 6 + (2 * 6) * 2);
    CHECK(n_online_rounds == (10 + 12) * 2);
}

TEST_CASE("masked-only expert batches zero out the unmasked task") {
    dataset ds = small_dataset(15, 4, 12);
    model   m  = small_model(8);

    train_config cfg;
    cfg.warmup_epochs = 0;
    cfg.expert_epochs = 2;
    cfg.online_epochs = 0;
    cfg.batch_size    = 6;
    cfg.seed          = 99;
    cfg.expert_loss_masked_only = true;

    int64_t masked_det = 0, masked_reason = 0;
    run_training(m, ds, cfg, "", "", [&](const sample_loss & sl) {
        REQUIRE(std::string(sl.phase) == "expert");
        // exactly one of the two task losses is active per sample
        if (sl.bce_weight == 1.0) {
            CHECK(sl.ntp_weight == 0.0);
            CHECK(sl.ntp == 0.0);
            masked_det += 1;
        } else {
            CHECK(sl.bce_weight == 0.0);
            CHECK(sl.ntp_weight == 1.0);
            masked_reason += 1;
        }
    });
    CHECK(masked_det + masked_reason == 24);
    CHECK(masked_det > 0);       // uniform mask draw hits both branches
    CHECK(masked_reason > 0);
}

TEST_CASE("per-sample decomposition reproduces the logged batch loss") {
    dataset ds = small_dataset(17, 6, 4);
    model   m  = small_model(10);

    train_config cfg;
    cfg.warmup_epochs = 1;
    cfg.expert_epochs = 0;
    cfg.online_epochs = 1;
    cfg.rollout_rounds = 2;
    cfg.batch_size    = 5;
    cfg.seed          = 3;

    std::vector<sample_loss> batch_samples;
    std::vector<double> recomposed;
    run_training(m, ds, cfg, "", "",
        [&](const sample_loss & sl) {
            sample_loss copy = sl;  // pointers stay valid, values copied
            batch_samples.push_back(copy);
        },
        [&](const step_stats & ss) {
            // the batch loss is the weighted per-sample sum divided by the
            // batch size; online steps emit one record per sample per round
            // and sum the rounds before the division
            const int rounds = std::string(ss.phase) == "online" ? cfg.rollout_rounds : 1;
            const double b   = (double) batch_samples.size() / rounds;
            double acc = 0.0;
            for (const auto & sl : batch_samples) {
                acc += sl.bce_weight * sl.bce + sl.ntp_weight * sl.ntp;
            }
            recomposed.push_back(std::fabs(acc / b - ss.loss));
            batch_samples.clear();
        });
    for (double diff : recomposed) CHECK(diff < 1e-9);
}

TEST_CASE("the jsonl log captures schedule and phase progression") {
    dataset ds = small_dataset(19, 8, 8);
    model   m  = small_model(12);
    tmpdir  dir("armor_train_log");

    train_config cfg;
    cfg.warmup_epochs = 2;
    cfg.expert_epochs = 1;
    cfg.online_epochs = 1;
    cfg.rollout_rounds = 2;
    cfg.batch_size    = 8;
    cfg.seed          = 55;

    const std::string log_path = dir.path + "/train_log.jsonl";
    run_training(m, ds, cfg, log_path, "");

    std::ifstream in(log_path);
    REQUIRE(in.good());
    std::string line;
    int64_t step_expect = 1;
    std::vector<std::string> phases;
    std::vector<double> lrs;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.at("step").get<int64_t>() == step_expect);
        step_expect += 1;
        phases.push_back(j.at("phase").get<std::string>());
        lrs.push_back(j.at("lr").get<double>());
        CHECK(j.at("loss").get<double>() ==
              doctest::Approx(j.at("loss_bce").get<double>() +
                              j.at("loss_ntp").get<double>()).epsilon(1e-12));
        double df = j.at("dense_fraction").get<double>();
        CHECK(df >= 0.0);
        CHECK(df <= 1.0);
        CHECK(j.at("grad_norm").get<double>() >= 0.0);
    }
    // union 16 -> 2 steps/epoch x2; dense 8 -> 1 step; online 8+16=24 -> 3
    REQUIRE(step_expect - 1 == 4 + 1 + 3);
    for (int i = 0; i < 4; ++i) CHECK(phases[(size_t) i] == "warmup");
    CHECK(phases[4] == "expert");
    for (int i = 5; i < 8; ++i) CHECK(phases[(size_t) i] == "online");

    CHECK(lrs[0] == 0.0);  // schedule multiplier is zero at step zero
    CHECK(*std::max_element(lrs.begin(), lrs.end()) <= cfg.lr_heads);
    CHECK(lrs.back() < *std::max_element(lrs.begin(), lrs.end()));
}

TEST_CASE("stage checkpoints match the executed stages") {
    dataset ds = small_dataset(23, 6, 6);

    train_config cfg;
    cfg.warmup_epochs = 1;
    cfg.expert_epochs = 1;
    cfg.online_epochs = 1;
    cfg.batch_size    = 6;
    cfg.rollout_rounds = 2;

    {
        tmpdir dir("armor_train_full");
        model  m = small_model(14);
        run_training(m, ds, cfg, "", dir.path);
        CHECK(std::filesystem::exists(dir.path + "/warmup.ckpt"));
        CHECK(std::filesystem::exists(dir.path + "/expert.ckpt"));
        CHECK(std::filesystem::exists(dir.path + "/final.ckpt"));
    }
    {
        tmpdir dir("armor_train_mt");
        cfg.ablation = ablation_t::multitask_only;
        cfg.warmup_epochs = 1;  // keep the run small: total 3 epochs of warmup
        cfg.expert_epochs = 1;
        cfg.online_epochs = 1;
        model m = small_model(14);
        run_training(m, ds, cfg, "", dir.path);
        CHECK(std::filesystem::exists(dir.path + "/warmup.ckpt"));
        CHECK(!std::filesystem::exists(dir.path + "/expert.ckpt"));
        CHECK(std::filesystem::exists(dir.path + "/final.ckpt"));
    }
    {
        tmpdir dir("armor_train_on");
        cfg.ablation = ablation_t::online_only;
        model m = small_model(14);
        run_training(m, ds, cfg, "", dir.path);
        CHECK(!std::filesystem::exists(dir.path + "/warmup.ckpt"));
        CHECK(!std::filesystem::exists(dir.path + "/expert.ckpt"));
        CHECK(std::filesystem::exists(dir.path + "/final.ckpt"));
    }
}

TEST_CASE("invalid training configurations are rejected") {
    dataset ds = small_dataset(25, 4, 4);
    model   m  = small_model(16);

    train_config cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(run_training(m, ds, cfg), error);

    cfg = {};
    cfg.lr_heads = 0.0;
    CHECK_THROWS_AS(run_training(m, ds, cfg), error);

    cfg = {};
    cfg.rollout_rounds = 0;
    CHECK_THROWS_AS(run_training(m, ds, cfg), error);

    cfg = {};
    cfg.warmup_epochs = 0;
    cfg.expert_epochs = 0;
    cfg.online_epochs = 0;
    CHECK_THROWS_AS(run_training(m, ds, cfg), error);

    cfg = {};
    dataset no_dense = small_dataset(27, 4, 2);
    no_dense.dense.clear();
    CHECK_THROWS_AS(run_training(m, no_dense, cfg), error);  // expert needs dense
}
