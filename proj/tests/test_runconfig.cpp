#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "runconfig.hpp"

#include "common.hpp"

#include <cstdlib>
#include <fstream>

using namespace armor;

static void clear_env() { unsetenv("ARMOR_SEED"); }

TEST_CASE("empty object yields defaults with derived section seeds") {
    clear_env();
    run_config c = config_from_json("{}");
    CHECK(c.schema_version == 1);
    CHECK(c.seed == 1);
    CHECK(c.data.seed == seed_stream(1, { 100 }));
    CHECK(c.model_init_seed == seed_stream(1, { 101 }));
    CHECK(c.train.seed == seed_stream(1, { 102 }));
    CHECK(c.eval.seed == seed_stream(1, { 103 }));
    CHECK(c.model.hidden == 64);
    CHECK(c.train.ablation == ablation_t::full);
    CHECK(c.eval.refine.rounds == 4);
    CHECK(c.grid_variants.size() == 5);
    CHECK(c.grid_seeds == std::vector<uint64_t>{ 1, 2, 3, 4 });
    CHECK(c.grid_threads == 0);
    CHECK(c.judge_command.empty());
    // benchmark split sizes are the out-of-the-box dataset shape
    CHECK(c.data.count_sparse == 2000);
    CHECK(c.data.count_dense == 200);
    CHECK(c.data.count_test == 300);
}

TEST_CASE("top-level seed drives every derived stream") {
    clear_env();
    run_config c = config_from_json(R"({"seed": 42})");
    CHECK(c.seed == 42);
    CHECK(c.data.seed == seed_stream(42, { 100 }));
    CHECK(c.model_init_seed == seed_stream(42, { 101 }));
    CHECK(c.train.seed == seed_stream(42, { 102 }));
    CHECK(c.eval.seed == seed_stream(42, { 103 }));
}

TEST_CASE("explicit section seeds win over derivation") {
    clear_env();
    run_config c = config_from_json(
        R"({"seed": 42, "data": {"seed": 7}, "model": {"init_seed": 8},
            "train": {"seed": 9}, "eval": {"seed": 10}})");
    CHECK(c.data.seed == 7);
    CHECK(c.model_init_seed == 8);
    CHECK(c.train.seed == 9);
    CHECK(c.eval.seed == 10);
}

TEST_CASE("section values parse into the right fields") {
    clear_env();
    run_config c = config_from_json(R"({
        "data":  {"count_sparse": 50, "count_dense": 5, "count_test": 10},
        "model": {"hidden": 32, "dropout": 0.0},
        "train": {"warmup_epochs": 2, "ablation": "offline_only", "lr_heads": 0.001},
        "eval":  {"rounds": 2, "num_traj": 1, "temperature": 0.5},
        "paths": {"report_dir": "r"},
        "judge": {"command": "cat", "timeout_ms": 500}
    })");
    CHECK(c.data.count_sparse == 50);
    CHECK(c.model.hidden == 32);
    CHECK(c.model.dropout == 0.0);
    CHECK(c.train.warmup_epochs == 2);
    CHECK(c.train.ablation == ablation_t::offline_only);
    CHECK(c.train.lr_heads == 0.001);
    CHECK(c.eval.refine.rounds == 2);
    CHECK(c.eval.refine.num_traj == 1);
    CHECK(c.eval.refine.temperature == 0.5);
    CHECK(c.paths.report_dir == "r");
    CHECK(c.judge_command == "cat");
    CHECK(c.judge_timeout_ms == 500);
}

TEST_CASE("unknown keys are rejected with their path") {
    clear_env();
    CHECK_THROWS_WITH_AS(config_from_json(R"({"sede": 1})"),
                         doctest::Contains("unknown key 'sede'"), error);
    CHECK_THROWS_WITH_AS(config_from_json(R"({"train": {"lr": 0.1}})"),
                         doctest::Contains("unknown key 'train.lr'"), error);
    CHECK_THROWS_WITH_AS(config_from_json(R"({"eval": {"lambda_": 0.1}})"),
                         doctest::Contains("unknown key 'eval.lambda_'"), error);
}

TEST_CASE("malformed json, wrong types and bad enums fail with parse errors") {
    clear_env();
    CHECK_THROWS_AS(config_from_json("not json"), error);
    CHECK_THROWS_AS(config_from_json("[1,2]"), error);
    CHECK_THROWS_AS(config_from_json(R"({"seed": "high"})"), error);
    CHECK_THROWS_AS(config_from_json(R"({"schema_version": 2})"), error);
    CHECK_THROWS_AS(config_from_json(R"({"train": {"ablation": "none_of_these"}})"), error);
    CHECK_THROWS_AS(config_from_json(R"({"judge": {"timeout_ms": 0}})"), error);
}

TEST_CASE("ARMOR_SEED overrides the top-level seed before derivation") {
    clear_env();
    setenv("ARMOR_SEED", "99", 1);
    run_config c = config_from_json(R"({"seed": 42, "train": {"seed": 5}})");
    CHECK(c.seed == 99);
    CHECK(c.data.seed == seed_stream(99, { 100 }));
    CHECK(c.train.seed == 5);  // explicit section seed still wins

    setenv("ARMOR_SEED", "12x", 1);
    CHECK_THROWS_AS(config_from_json("{}"), error);
    setenv("ARMOR_SEED", "", 1);
    CHECK_THROWS_AS(config_from_json("{}"), error);
    clear_env();
}

TEST_CASE("overrides beat the file and the environment") {
    clear_env();
    run_config c = config_from_json(R"({"seed": 42})", { "train.lr_heads=0.5" });
    CHECK(c.seed == 42);
    CHECK(c.train.lr_heads == 0.5);

    // sections missing from the document are created on the way down
    c = config_from_json("{}", { "judge.command=cat -", "grid.threads=3" });
    CHECK(c.judge_command == "cat -");  // not valid json -> plain string
    CHECK(c.grid_threads == 3);

    setenv("ARMOR_SEED", "99", 1);
    c = config_from_json(R"({"seed": 42})", { "seed=7" });
    CHECK(c.seed == 7);  // explicit override wins over ARMOR_SEED
    CHECK(c.data.seed == seed_stream(7, { 100 }));
    clear_env();

    // json-typed values: arrays and quoted strings
    c = config_from_json("{}", { "grid.seeds=[5,6]", "train.ablation=\"online_only\"" });
    CHECK(c.grid_seeds == std::vector<uint64_t>{ 5, 6 });
    CHECK(c.train.ablation == ablation_t::online_only);
}

TEST_CASE("bad overrides fail with actionable errors") {
    clear_env();
    CHECK_THROWS_WITH_AS(config_from_json("{}", { "no_equals" }),
                         doctest::Contains("key=value"), error);
    CHECK_THROWS_WITH_AS(config_from_json("{}", { "=5" }),
                         doctest::Contains("key=value"), error);
    CHECK_THROWS_WITH_AS(config_from_json("{}", { "train..lr_heads=1" }),
                         doctest::Contains("empty key segment"), error);
    // a scalar in the path cannot be treated as a section
    CHECK_THROWS_WITH_AS(config_from_json(R"({"seed": 1})", { "seed.x=2" }),
                         doctest::Contains("not a section"), error);
    // overrides still go through unknown-key validation
    CHECK_THROWS_WITH_AS(config_from_json("{}", { "trian.lr_heads=1" }),
                         doctest::Contains("unknown key 'trian'"), error);
    CHECK_THROWS_AS(config_from_json("{}", { "grid.threads=-1" }), error);
}

TEST_CASE("echo is fully resolved and round-trips exactly") {
    clear_env();
    run_config a = config_from_json(
        R"({"seed": 17, "data": {"count_sparse": 30, "count_dense": 3, "count_test": 8},
            "train": {"online_epochs": 4}, "grid": {"variants": ["full", "online_only"],
            "seeds": [3], "ratios": [2, 10], "sweep_ratios": false}})");
    std::string echo = config_to_json(a);
    run_config  b    = config_from_json(echo);
    CHECK(config_to_json(b) == echo);
    CHECK(b.data.seed == a.data.seed);
    CHECK(b.model_init_seed == a.model_init_seed);
    CHECK(b.grid_variants == std::vector<ablation_t>{ ablation_t::full, ablation_t::online_only });
    CHECK(b.grid_seeds == std::vector<uint64_t>{ 3 });
    CHECK(b.grid_ratios == std::vector<int64_t>{ 2, 10 });
    CHECK(b.sweep_ratios == false);
    // the echo pins derived seeds, so it reproduces under a different env seed
    setenv("ARMOR_SEED", "1000", 1);
    run_config e = config_from_json(echo);
    CHECK(e.data.seed == a.data.seed);
    CHECK(e.train.seed == a.train.seed);
    CHECK(e.seed == 1000);  // only the (already-applied) top seed moves
    clear_env();
}

TEST_CASE("load_config reads files and reports io errors") {
    clear_env();
    CHECK_THROWS_AS(load_config("/nonexistent/armor.json"), error);
    const char * path = "runconfig_test_tmp.json";
    {
        std::ofstream out(path);
        out << R"({"seed": 5})";
    }
    run_config c = load_config(path);
    CHECK(c.seed == 5);
    std::remove(path);
}

TEST_CASE("grid_from_config copies sections and lists") {
    clear_env();
    run_config c = config_from_json(
        R"({"data": {"count_sparse": 40, "count_dense": 4, "count_test": 6},
            "grid": {"variants": ["multitask_only"], "seeds": [7, 8], "ratios": [5],
                     "sweep_ratios": false}})");
    grid_config g = grid_from_config(c);
    CHECK(g.data.count_sparse == 40);
    CHECK(g.variants == std::vector<ablation_t>{ ablation_t::multitask_only });
    CHECK(g.seeds == std::vector<uint64_t>{ 7, 8 });
    CHECK(g.ratios == std::vector<int64_t>{ 5 });
    CHECK(g.sweep_ratios == false);
    CHECK(g.model.hidden == c.model.hidden);
    CHECK(g.train.seed == c.train.seed);
    CHECK(g.eval.seed == c.eval.seed);
}
