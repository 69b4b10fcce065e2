#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lossmat/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"class-incremental learning testbed: loss-matrix measurement harness"};
    app.require_subcommand(1);

    // run
    std::string config_path;
    int workers = 1;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    auto* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("config", config_path, "path to experiment config (JSON)")->required();
    run->add_option("--workers", workers, "concurrent runs");
    std::uint64_t seed_value = 0;
    auto* seed_opt = run->add_option("--seed", seed_value, "override the base seed");
    std::string out_value;
    auto* out_opt = run->add_option("--out", out_value, "override the output directory");

    // verify
    auto* verify = app.add_subcommand("verify", "run the built-in theory checks");
    std::string verify_json;
    verify->add_option("--json", verify_json, "also write the report to this path");
    bool sabotage = false;
    verify->add_flag("--sabotage-skip-offdiag", sabotage, "negative control: skip off-diagonal evaluation")
        ->group("");  // hidden

    // inspect
    std::string record_path;
    auto* inspect = app.add_subcommand("inspect", "summarize a run record");
    inspect->add_option("record", record_path, "path to a run-record JSON file")->required();

    // make-fixture
    auto* fixture = app.add_subcommand("make-fixture", "write a synthetic 10-class IDX image set");
    std::string fx_images, fx_labels;
    int fx_per_class = 600;
    std::uint64_t fx_seed = 99;
    fixture->add_option("images", fx_images, "output images path")->required();
    fixture->add_option("labels", fx_labels, "output labels path")->required();
    fixture->add_option("--per-class", fx_per_class, "samples per class");
    fixture->add_option("--seed", fx_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (seed_opt->count()) seed_override = seed_value;
            if (out_opt->count()) out_override = out_value;
            return lossmat::run_config(config_path, workers, seed_override, out_override);
        }
        if (verify->parsed()) {
            lossmat::TheoryReport report = lossmat::verify_theory(sabotage);
            for (const auto& c : report.checks)
                std::printf("%-28s %s  %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL",
                            c.detail.c_str());
            if (!verify_json.empty()) {
                std::ofstream out(verify_json);
                out << report.to_json() << "\n";
            }
            if (!report.all_pass()) {
                for (const auto& c : report.checks)
                    if (!c.pass) std::fprintf(stderr, "failed check: %s\n", c.name.c_str());
                return 1;
            }
            return 0;
        }
        if (inspect->parsed()) {
            std::ifstream in(record_path);
            if (!in) {
                std::fprintf(stderr, "cannot open %s\n", record_path.c_str());
                return 2;
            }
            nlohmann::json j;
            in >> j;
            std::printf("strategy:       %s\n", j.value("strategy", std::string("?")).c_str());
            std::printf("aborted:        %s\n", j.value("aborted", false) ? "yes" : "no");
            std::printf("final class-IL: %.4f\n", j.value("final_class_il", 0.0));
            std::printf("final task-IL:  %.4f\n", j.value("final_task_il", 0.0));
            std::printf("tc score:       %.6g\n", j.value("tc_score", 0.0));
            std::printf("sum CF deltas:  %.6g\n", j.value("cf_delta_sum", 0.0));
            if (j.contains("cf"))
                for (const auto& r : j.at("cf"))
                    std::printf("  task %d: %.6g -> %.6g (delta %.6g)\n", r.value("task", 0),
                                r.value("before", 0.0), r.value("after", 0.0), r.value("delta", 0.0));
            return 0;
        }
        if (fixture->parsed()) {
            lossmat::write_digit_fixture(fx_images, fx_labels, fx_per_class, fx_seed);
            std::printf("wrote %s and %s (%d per class)\n", fx_images.c_str(), fx_labels.c_str(),
                        fx_per_class);
            return 0;
        }
    } catch (const lossmat::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}
