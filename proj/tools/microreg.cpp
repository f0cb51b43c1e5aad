// Copyright 2026 The microreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// microreg: train, sweep, and inspect micro-batch regularization experiments.
//
//   microreg run <config>
//   microreg grid <gridspec>
//   microreg plot <csv> --cols a,b --out plot.svg
//   microreg record-schedule <config> [--out norms.csv]
//   microreg verify <run-dir>
//   microreg preset <name> [--run]
//
// Exit codes: 0 success, 1 validation error, 2 runtime abort.

#include "microreg/errors.hpp"
#include "microreg/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

int report_run(const microreg::RunResult& r)
{
    std::cout << r.name << ": " << (r.ok ? "ok" : "aborted") << " steps=" << r.steps_completed
              << " final_test_acc=" << r.final_test_acc << " best_val_acc=" << r.best_val_acc
              << " dir=" << r.dir.string() << '\n';
    if (!r.ok) {
        std::cerr << "error: " << r.error << '\n';
        return kRuntime;
    }
    return kOk;
}

int report_grid(const microreg::GridReport& g)
{
    std::size_t failed = 0;
    for (const auto& r : g.runs) {
        failed += r.ok ? 0 : 1;
    }
    std::cout << g.runs.size() << " runs, " << failed << " failed; summary: " << g.summary.string() << '\n';
    return failed == 0 ? kOk : kRuntime;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Micro-batch gradient-norm regularization experiments"};
    app.require_subcommand(1);

    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    std::string config_path;
    std::size_t threads = 0;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run one experiment from a config file");
    run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--threads", threads, "Override train.threads");
    run->add_option("--out", out_dir, "Override run.output_dir");

    std::string grid_path;
    auto* grid = app.add_subcommand("grid", "Run every cell of a grid spec");
    grid->add_option("gridspec", grid_path, "Grid spec file")->required()->check(CLI::ExistingFile);

    std::string csv_path, svg_path, title;
    std::vector<std::string> columns;
    std::size_t window = 25;
    auto* plot = app.add_subcommand("plot", "Render CSV columns as an SVG line plot");
    plot->add_option("csv", csv_path, "Telemetry CSV")->required()->check(CLI::ExistingFile);
    plot->add_option("--cols", columns, "Columns to plot")->required()->delimiter(',');
    plot->add_option("--out", svg_path, "Output SVG")->required();
    plot->add_option("--window", window, "Moving-average window (1 = raw)")->check(CLI::PositiveNumber);
    plot->add_option("--title", title, "Plot title");

    std::string schedule_config, schedule_out;
    auto* record = app.add_subcommand("record-schedule", "Run a donor config and write its step,grad_norm schedule");
    record->add_option("config", schedule_config, "Donor config")->required()->check(CLI::ExistingFile);
    record->add_option("--out", schedule_out, "Schedule CSV (default <output_dir>/norm_schedule.csv)");

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify", "Check a run directory for completeness");
    verify->add_option("run-dir", verify_dir, "Run directory")->required();

    std::string preset_name;
    bool preset_run = false;
    bool preset_list = false;
    auto* preset = app.add_subcommand("preset", "Print or run a named experiment grid");
    preset->add_option("name", preset_name, "Preset name");
    preset->add_flag("--run", preset_run, "Run the grid instead of printing it");
    preset->add_flag("--list", preset_list, "List preset names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    microreg::RunOptions options;
    options.quiet = quiet;

    try {
        if (*run) {
            auto cfg = microreg::load_config(config_path);
            if (threads > 0) {
                cfg.threads = threads;
            }
            if (!out_dir.empty()) {
                cfg.output_dir = out_dir;
            }
            return report_run(microreg::run_experiment(cfg, options));
        }
        if (*grid) {
            const auto spec = microreg::parse_grid(microreg::read_text(grid_path));
            return report_grid(microreg::run_grid(spec, options));
        }
        if (*plot) {
            microreg::PlotOptions po;
            po.window = window;
            po.title = title;
            microreg::emit_line_plot(csv_path, columns, svg_path, po);
            std::cout << "wrote " << svg_path << '\n';
            return kOk;
        }
        if (*record) {
            const auto cfg = microreg::load_config(schedule_config);
            const auto r = microreg::run_experiment(cfg, options);
            if (!schedule_out.empty()) {
                std::vector<std::uint64_t> steps(r.step_grad_norms.size());
                for (std::size_t i = 0; i < steps.size(); ++i) {
                    steps[i] = i;
                }
                microreg::write_norm_schedule(steps, r.step_grad_norms, schedule_out);
            }
            std::cout << "schedule: "
                      << (schedule_out.empty() ? (r.dir / "norm_schedule.csv").string() : schedule_out) << " ("
                      << r.step_grad_norms.size() << " steps)\n";
            return r.ok ? kOk : kRuntime;
        }
        if (*verify) {
            const auto report = microreg::verify_run_dir(verify_dir);
            for (const auto& p : report.problems) {
                std::cout << "problem: " << p << '\n';
            }
            std::cout << verify_dir << ": " << (report.ok ? "complete" : "incomplete") << '\n';
            return report.ok ? kOk : kValidation;
        }
        if (*preset) {
            if (preset_list || preset_name.empty()) {
                for (const auto& n : microreg::preset_names()) {
                    std::cout << n << '\n';
                }
                return kOk;
            }
            const std::string text = microreg::preset_text(preset_name);
            if (!preset_run) {
                std::cout << text;
                return kOk;
            }
            return report_grid(microreg::run_grid(microreg::parse_grid(text), options));
        }
    } catch (const microreg::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
