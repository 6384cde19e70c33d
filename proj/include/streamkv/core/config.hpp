#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "streamkv/errors.hpp"

namespace streamkv::core {

struct PipelineConfig {
    int window_size = 5;            // W
    double consistency_weight = 0.5;  // lambda
    double merge_ratio = 0.15;      // r_m
    std::uint64_t budget_total = 200000;  // B
    double smoothing_alpha = 0.5;   // alpha
    double hybrid_beta = 0.5;       // beta
    double dap_tau = 0.2;
    double dap_eta = 0.05;
    int dap_kmax = 3;
    int num_layers = 8;             // L
    int tokens_per_frame = 64;      // M
    std::uint64_t rng_seed = 0;

    // Programmatic override for per-layer budgets; bypasses the uniform
    // floor(B/L) split when set. Not part of the file format.
    std::optional<std::vector<std::size_t>> layer_budget_override;

    bool operator==(const PipelineConfig& o) const {
        return window_size == o.window_size &&
               consistency_weight == o.consistency_weight &&
               merge_ratio == o.merge_ratio && budget_total == o.budget_total &&
               smoothing_alpha == o.smoothing_alpha &&
               hybrid_beta == o.hybrid_beta && dap_tau == o.dap_tau &&
               dap_eta == o.dap_eta && dap_kmax == o.dap_kmax &&
               num_layers == o.num_layers &&
               tokens_per_frame == o.tokens_per_frame &&
               rng_seed == o.rng_seed &&
               layer_budget_override == o.layer_budget_override;
    }
};

// Returns one entry per violated constraint; empty means valid.
inline std::vector<std::string> validate_config(const PipelineConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.window_size < 1) errs.push_back("window_size: must be >= 1");
    if (cfg.consistency_weight < 0.0)
        errs.push_back("consistency_weight: must be >= 0");
    if (cfg.merge_ratio < 0.0 || cfg.merge_ratio > 1.0)
        errs.push_back("merge_ratio: must be in [0, 1]");
    if (cfg.smoothing_alpha < 0.0 || cfg.smoothing_alpha > 1.0)
        errs.push_back("smoothing_alpha: must be in [0, 1]");
    if (cfg.hybrid_beta < 0.0 || cfg.hybrid_beta > 1.0)
        errs.push_back("hybrid_beta: must be in [0, 1]");
    if (cfg.dap_eta < 0.0 || cfg.dap_eta > 1.0)
        errs.push_back("dap_eta: must be in [0, 1]");
    if (cfg.dap_kmax < 0) errs.push_back("dap_kmax: must be >= 0");
    if (cfg.num_layers < 1) errs.push_back("num_layers: must be >= 1");
    if (cfg.tokens_per_frame < 1)
        errs.push_back("tokens_per_frame: must be >= 1");
    if (cfg.budget_total == 0)
        errs.push_back("budget_total: must be positive");
    else if (cfg.budget_total <
             static_cast<std::uint64_t>(cfg.tokens_per_frame))
        errs.push_back("budget_total: a single frame must fit");
    else if (!cfg.layer_budget_override && cfg.num_layers >= 1 &&
             cfg.tokens_per_frame >= 1 &&
             cfg.budget_total / static_cast<std::uint64_t>(cfg.num_layers) <
                 static_cast<std::uint64_t>(cfg.tokens_per_frame))
        errs.push_back("budget_total: per-layer budget below tokens_per_frame");
    if (cfg.layer_budget_override)
        for (std::size_t b : *cfg.layer_budget_override)
            if (b < static_cast<std::size_t>(cfg.tokens_per_frame)) {
                errs.push_back("layer_budget_override: a single frame must fit");
                break;
            }
    if (cfg.layer_budget_override &&
        cfg.layer_budget_override->size() !=
            static_cast<std::size_t>(cfg.num_layers))
        errs.push_back("layer_budget_override: needs num_layers entries");
    return errs;
}

inline void require_valid(const PipelineConfig& cfg) {
    auto errs = validate_config(cfg);
    if (!errs.empty()) throw InvalidConfigError(std::move(errs));
}

// B^(l) = floor(B/L), remainder to the earliest layers.
inline std::vector<std::size_t> per_layer_budgets(const PipelineConfig& cfg) {
    if (cfg.layer_budget_override) return *cfg.layer_budget_override;
    const auto L = static_cast<std::size_t>(cfg.num_layers);
    std::vector<std::size_t> out(L, cfg.budget_total / L);
    const std::size_t rem = cfg.budget_total % L;
    for (std::size_t l = 0; l < rem; ++l) out[l] += 1;
    return out;
}

// Flat key=value text format; '#' starts a comment; unknown keys fail loud.
inline std::string serialize_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "window_size = " << cfg.window_size << "\n"
       << "consistency_weight = " << cfg.consistency_weight << "\n"
       << "merge_ratio = " << cfg.merge_ratio << "\n"
       << "budget_total = " << cfg.budget_total << "\n"
       << "smoothing_alpha = " << cfg.smoothing_alpha << "\n"
       << "hybrid_beta = " << cfg.hybrid_beta << "\n"
       << "dap_tau = " << cfg.dap_tau << "\n"
       << "dap_eta = " << cfg.dap_eta << "\n"
       << "dap_kmax = " << cfg.dap_kmax << "\n"
       << "num_layers = " << cfg.num_layers << "\n"
       << "tokens_per_frame = " << cfg.tokens_per_frame << "\n"
       << "rng_seed = " << cfg.rng_seed << "\n";
    return os.str();
}

inline PipelineConfig parse_config(std::istream& in) {
    PipelineConfig cfg;
    std::vector<std::string> errs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errs.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "window_size") cfg.window_size = std::stoi(val);
            else if (key == "consistency_weight") cfg.consistency_weight = std::stod(val);
            else if (key == "merge_ratio") cfg.merge_ratio = std::stod(val);
            else if (key == "budget_total") cfg.budget_total = std::stoull(val);
            else if (key == "smoothing_alpha") cfg.smoothing_alpha = std::stod(val);
            else if (key == "hybrid_beta") cfg.hybrid_beta = std::stod(val);
            else if (key == "dap_tau") cfg.dap_tau = std::stod(val);
            else if (key == "dap_eta") cfg.dap_eta = std::stod(val);
            else if (key == "dap_kmax") cfg.dap_kmax = std::stoi(val);
            else if (key == "num_layers") cfg.num_layers = std::stoi(val);
            else if (key == "tokens_per_frame") cfg.tokens_per_frame = std::stoi(val);
            else if (key == "rng_seed") cfg.rng_seed = std::stoull(val);
            else errs.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const std::exception&) {
            errs.push_back("line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    if (!errs.empty()) throw InvalidConfigError(std::move(errs));
    return cfg;
}

inline PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse_config(in);
}

}  // namespace streamkv::core
