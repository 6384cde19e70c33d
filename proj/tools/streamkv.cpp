#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamkv/core/config.hpp"
#include "streamkv/errors.hpp"
#include "streamkv/harness/harness.hpp"
#include "streamkv/scoresrc/trace.hpp"

namespace {

using namespace streamkv;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTrace = 3;
constexpr int kExitPipeline = 4;

void print_summary(const harness::RunReport& rep) {
    std::printf("%-8s %-12s %-10s %-10s %-10s %-12s\n", "frames",
                "peak_tokens", "evicted", "merged", "absorbed", "fingerprint");
    std::printf("%-8zu %-12zu %-10zu %-10zu %-10.3f %016llx\n",
                rep.per_frame.size(), rep.peak_cache_tokens, rep.total_evicted,
                rep.total_merged, rep.mean_absorbed_per_target,
                static_cast<unsigned long long>(rep.seed_fingerprint));
}

void print_sweep_table(const std::vector<harness::SweepCell>& cells) {
    std::printf("%-28s %-12s %-10s %-10s %-10s\n", "cell", "peak_tokens",
                "evicted", "merged", "absorbed");
    for (const auto& c : cells)
        std::printf("%-28s %-12zu %-10zu %-10zu %-10.3f\n", c.label.c_str(),
                    c.report.peak_cache_tokens, c.report.total_evicted,
                    c.report.total_merged, c.report.mean_absorbed_per_target);
}

core::PipelineConfig load_cfg(const std::string& path, int seed_override) {
    auto cfg = core::load_config_file(path);
    if (seed_override >= 0)
        cfg.rng_seed = static_cast<std::uint64_t>(seed_override);
    core::require_valid(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streamkv: bounded-memory KV-cache compression simulator"};
    app.require_subcommand(1);

    std::string config_path, trace_path, out_path, csv_path, axis_name, out_dir;
    std::vector<double> axis_values;
    int frames = 20;
    int seed = -1;

    auto* cmd_run = app.add_subcommand("run", "simulate a stream");
    cmd_run->add_option("--config", config_path)->required();
    cmd_run->add_option("--trace", trace_path);
    cmd_run->add_option("--frames", frames);
    cmd_run->add_option("--seed", seed);
    cmd_run->add_option("--out", out_path);
    cmd_run->add_option("--csv", csv_path);

    auto* cmd_sweep = app.add_subcommand("sweep", "ablation sweep");
    cmd_sweep->add_option("--config", config_path)->required();
    cmd_sweep->add_option("--axis", axis_name)->required()->check(
        CLI::IsMember({"lambda", "window", "merge-ratio", "components"}));
    cmd_sweep->add_option("--values", axis_values)->delimiter(',');
    cmd_sweep->add_option("--frames", frames);
    cmd_sweep->add_option("--seed", seed);
    cmd_sweep->add_option("--out", out_dir);

    auto* cmd_record = app.add_subcommand("record", "record a toy trace");
    cmd_record->add_option("--config", config_path)->required();
    cmd_record->add_option("--frames", frames)->required();
    cmd_record->add_option("--seed", seed);
    cmd_record->add_option("--out", out_path)->required();

    auto* cmd_replay = app.add_subcommand("replay", "replay a recorded trace");
    cmd_replay->add_option("--trace", trace_path)->required();
    cmd_replay->add_option("--config", config_path)->required();
    cmd_replay->add_option("--out", out_path);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_run) {
            const auto cfg = load_cfg(config_path, seed);
            const auto rep = trace_path.empty()
                                 ? harness::run_toy(cfg, frames)
                                 : harness::run_trace(cfg, trace_path);
            print_summary(rep);
            if (!out_path.empty()) harness::write_report_json(rep, out_path);
            if (!csv_path.empty()) harness::write_report_csv(rep, csv_path);
        } else if (*cmd_sweep) {
            const auto cfg = load_cfg(config_path, seed);
            harness::SweepAxis axis;
            if (axis_name == "lambda") axis = harness::SweepAxis::Lambda;
            else if (axis_name == "window") axis = harness::SweepAxis::Window;
            else if (axis_name == "merge-ratio") axis = harness::SweepAxis::MergeRatio;
            else axis = harness::SweepAxis::Components;
            const auto cells = harness::sweep(cfg, axis, axis_values, frames);
            print_sweep_table(cells);
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                int i = 0;
                for (const auto& c : cells)
                    harness::write_report_json(
                        c.report, out_dir + "/cell_" + std::to_string(i++) +
                                      ".json");
            }
        } else if (*cmd_record) {
            const auto cfg = load_cfg(config_path, seed);
            scoresrc::save_trace(harness::generate_stream(cfg, frames),
                                 out_path);
            std::printf("recorded %d frames to %s\n", frames,
                        out_path.c_str());
        } else if (*cmd_replay) {
            const auto cfg = load_cfg(config_path, seed);
            const auto rep = harness::run_trace(cfg, trace_path);
            print_summary(rep);
            if (!out_path.empty()) harness::write_report_json(rep, out_path);
        }
    } catch (const InvalidConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TraceFormatError& e) {
        std::cerr << "trace error: " << e.what() << "\n";
        return kExitTrace;
    } catch (const Error& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitOk;
}
