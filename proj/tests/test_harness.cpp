#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "lossmat/harness.hpp"

using namespace lossmat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("lossmat_harness_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

nlohmann::json minimal_config() {
    return nlohmann::json{
        {"schema_version", 1},
        {"stream",
         {{"kind", "blob"},
          {"num_tasks", 2},
          {"classes_per_task", 2},
          {"centers", "ring"},
          {"feature_dim", 2},
          {"scale", 0.5},
          {"train_per_class", 20},
          {"test_per_class", 10}}},
        {"strategies", nlohmann::json::array({{{"name", "none"}}, {{"name", "slda"}}})},
        {"train", {{"learning_rate", 0.1}, {"iterations", 60}, {"batch_size", 16}}},
        {"repeats", 2},
        {"base_seed", 4242},
    };
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(static_cast<bool>(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// recursive byte comparison of two output trees
void check_trees_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel_a;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
    std::sort(rel_a.begin(), rel_a.end());
    std::vector<fs::path> rel_b;
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b));
    std::sort(rel_b.begin(), rel_b.end());
    REQUIRE(rel_a == rel_b);
    for (const auto& rel : rel_a) CHECK(slurp(a / rel) == slurp(b / rel));
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("minimal config round trips with defaults") {
        ExperimentConfig cfg = parse_config(minimal_config());
        CHECK(cfg.stream.num_tasks == 2);
        CHECK(cfg.strategies.size() == 2);
        CHECK(cfg.strategies[1].kind == StrategyKind::slda);
        CHECK(cfg.arch == "mlp");
        CHECK(cfg.repeats == 2);
        CHECK(cfg.base_seed == 4242);
        CHECK(cfg.train.iterations == 60);
        CHECK(cfg.config_hash != 0);
    }
    SUBCASE("hyperparameters are picked up per strategy") {
        auto j = minimal_config();
        j["strategies"] = nlohmann::json::array(
            {{{"name", "ewc"}, {"hyper", {{"ewc_lambda", 7.5}, {"fisher_draws", 3}}}},
             {{"name", "gen_replay"}, {"hyper", {{"surrogate", "biased"}, {"replay_ratio", 0.25}}}}});
        ExperimentConfig cfg = parse_config(j);
        CHECK(cfg.strategies[0].hyper.ewc_lambda == 7.5);
        CHECK(cfg.strategies[0].hyper.fisher_draws == 3);
        CHECK(cfg.strategies[1].hyper.surrogate == ReplaySurrogate::biased);
        CHECK(cfg.strategies[1].hyper.replay_ratio == 0.25);
    }
    SUBCASE("rejections") {
        auto base = minimal_config();
        {
            auto j = base;
            j.erase("schema_version");
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["schema_version"] = 99;
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["strategies"] = nlohmann::json::array({{{"name", "nope"}}});
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["strategies"] = nlohmann::json::array();
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["stream"]["kind"] = "sqlite";
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["strategies"] = nlohmann::json::array(
                {{{"name", "gen_replay"}, {"hyper", {{"surrogate", "psychic"}}}}});
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["model"] = {{"arch", "mlp"}, {"hidden", 1000}};
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
        {
            auto j = base;
            j["train"]["iterations"] = 0;
            CHECK_THROWS_AS(parse_config(j), ConfigError);
        }
    }
    SUBCASE("explicit centers") {
        auto j = minimal_config();
        j["stream"]["num_tasks"] = 1;
        j["stream"]["centers"] = {{-2.0, 0.0}, {2.0, 0.0}};
        ExperimentConfig cfg = parse_config(j);
        CHECK(cfg.stream.centers == "explicit");
        TaskStream stream = build_stream(cfg.stream, 1);
        CHECK(stream.num_classes() == 2);
        CHECK(stream.feature_dim == 2);
    }
    SUBCASE("missing file and malformed json report as config errors") {
        CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
        TempDir tmp;
        std::ofstream(tmp.file("broken.json")) << "{not json";
        CHECK_THROWS_AS(load_config(tmp.file("broken.json")), ConfigError);
    }
}

TEST_CASE("run_config end to end") {
    TempDir tmp;
    auto j = minimal_config();
    std::ofstream(tmp.file("cfg.json")) << j.dump(2);

    SUBCASE("produces the expected output tree and exit code") {
        int rc = run_config(tmp.file("cfg.json"), 1, std::nullopt, tmp.file("out"));
        CHECK(rc == 0);
        fs::path out(tmp.file("out"));
        CHECK(fs::exists(out / "results.csv"));
        CHECK(fs::exists(out / "summary.csv"));
        CHECK(fs::exists(out / "results.json"));
        // one record per strategy x repeat
        CHECK(fs::exists(out / "runs" / "run_s0_none_rep0.json"));
        CHECK(fs::exists(out / "runs" / "run_s0_none_rep1.json"));
        CHECK(fs::exists(out / "runs" / "run_s1_slda_rep1.json"));
        CHECK(fs::exists(out / "matrices" / "heatmap_partition_s0_none_rep0.csv"));
        CHECK(fs::exists(out / "curves" / "curves_s1_slda_rep0.csv"));
        // rows: header + strategies * repeats
        std::string table = slurp(out / "results.csv");
        CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 4);
        // record json parses and carries the seeds
        auto rec = nlohmann::json::parse(slurp(out / "runs" / "run_s0_none_rep0.json"));
        CHECK(rec.at("strategy") == "none");
        CHECK(rec.at("timeline").size() == 2);
        CHECK(rec.at("aborted") == false);
    }
    SUBCASE("reruns are byte-identical, also across worker counts") {
        CHECK(run_config(tmp.file("cfg.json"), 1, std::nullopt, tmp.file("out_a")) == 0);
        CHECK(run_config(tmp.file("cfg.json"), 1, std::nullopt, tmp.file("out_b")) == 0);
        CHECK(run_config(tmp.file("cfg.json"), 3, std::nullopt, tmp.file("out_c")) == 0);
        check_trees_identical(tmp.file("out_a"), tmp.file("out_b"));
        check_trees_identical(tmp.file("out_a"), tmp.file("out_c"));
    }
    SUBCASE("seed override changes results") {
        CHECK(run_config(tmp.file("cfg.json"), 1, std::nullopt, tmp.file("out_a")) == 0);
        CHECK(run_config(tmp.file("cfg.json"), 1, 777, tmp.file("out_d")) == 0);
        CHECK(slurp(fs::path(tmp.file("out_a")) / "results.csv") !=
              slurp(fs::path(tmp.file("out_d")) / "results.csv"));
    }
    SUBCASE("invalid config exits 2 without touching the output dir") {
        std::ofstream(tmp.file("bad.json")) << "{\"schema_version\":1}";
        CHECK(run_config(tmp.file("bad.json"), 1, std::nullopt, tmp.file("out_bad")) == 2);
        CHECK(!fs::exists(tmp.file("out_bad")));
    }
}

TEST_CASE("digit fixture") {
    TempDir tmp;
    write_digit_fixture(tmp.file("imgs"), tmp.file("lbls"), 12, 5);
    SUBCASE("loads through the idx reader into a 5x2 stream") {
        TaskStream stream = load_idx_stream(tmp.file("imgs"), tmp.file("lbls"), 5, 2, 8);
        CHECK(stream.num_tasks == 5);
        CHECK(stream.feature_dim == 28 * 28);
        for (const auto& task : stream.tasks) {
            CHECK(task.train.size() == 16);  // 8 per class, 2 classes
            CHECK(task.test.size() == 8);    // remaining 4 per class
        }
    }
    SUBCASE("classes are template-separable") {
        TaskStream stream = load_idx_stream(tmp.file("imgs"), tmp.file("lbls"), 5, 2, 8);
        // nearest-train-mean classification should be near perfect
        std::vector<std::vector<double>> means(10, std::vector<double>(stream.feature_dim, 0.0));
        std::vector<double> counts(10, 0.0);
        for (const auto& task : stream.tasks)
            for (const auto& s : task.train) {
                counts[s.label] += 1.0;
                for (int j = 0; j < stream.feature_dim; ++j) means[s.label][j] += s.features[j];
            }
        for (int c = 0; c < 10; ++c)
            for (int j = 0; j < stream.feature_dim; ++j) means[c][j] /= counts[c];
        std::size_t correct = 0, total = 0;
        for (const auto& s : all_test_samples(stream)) {
            int best = -1;
            double best_d = 0.0;
            for (int c = 0; c < 10; ++c) {
                double dist = 0.0;
                for (int j = 0; j < stream.feature_dim; ++j) {
                    double delta = s.features[j] - means[c][j];
                    dist += delta * delta;
                }
                if (best < 0 || dist < best_d) {
                    best = c;
                    best_d = dist;
                }
            }
            correct += best == s.label ? 1 : 0;
            ++total;
        }
        CHECK(static_cast<double>(correct) / total > 0.95);
    }
    SUBCASE("regeneration is byte-identical") {
        write_digit_fixture(tmp.file("imgs2"), tmp.file("lbls2"), 12, 5);
        CHECK(slurp(tmp.file("imgs")) == slurp(tmp.file("imgs2")));
        CHECK(slurp(tmp.file("lbls")) == slurp(tmp.file("lbls2")));
    }
}
