#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "streamkv/core/config.hpp"
#include "streamkv/errors.hpp"
#include "streamkv/pipeline/pipeline.hpp"
#include "streamkv/scoresrc/toy_model.hpp"
#include "streamkv/scoresrc/trace.hpp"

namespace streamkv::harness {

enum class StreamRegime { Plain, Structured };

// Deterministic synthetic activation stream from the toy block stack. The
// generator keeps its own uncompressed KV history, so the stream is
// independent of any downstream cache policy (record/replay identical).
class StreamGenerator {
public:
    StreamGenerator(const core::PipelineConfig& cfg, int frames,
                    StreamRegime regime = StreamRegime::Plain)
        : cfg_(cfg),
          frames_(frames),
          regime_(regime),
          model_(cfg.rng_seed, cfg.num_layers),
          layout_(pipeline::FrameLayout::for_tokens(cfg.tokens_per_frame)),
          history_(cfg.num_layers) {
        core::require_valid(cfg);
        for (int l = 0; l < cfg.num_layers; ++l)
            history_[l].layer_index = l;
    }

    int frames() const { return frames_; }

    // All layers of one frame; call with t = 0, 1, ... frames-1.
    std::vector<scoresrc::FrameActivations> next_frame() {
        const int t = frame_;
        Matrix h = model_.initial_hidden(t, cfg_.tokens_per_frame);
        std::vector<scoresrc::FrameActivations> out;
        out.reserve(cfg_.num_layers);
        for (int l = 0; l < cfg_.num_layers; ++l) {
            auto acts = scoresrc::toy_block_forward(h, history_[l],
                                                    model_.block(l), t, l);
            if (regime_ == StreamRegime::Structured) shape_scores(acts);
            for (int i = 0; i < cfg_.tokens_per_frame; ++i) {
                core::TokenRecord tok;
                tok.token_id = history_[l].entries.size();
                tok.frame_index = t;
                tok.kind = layout_.kind_of(i);
                tok.grid_pos = layout_.grid_of(i);
                tok.key = acts.keys.row(i);
                tok.value = acts.values.row(i);
                tok.raw_score = acts.raw_scores[i];
                tok.enhanced_score = acts.raw_scores[i];
                history_[l].entries.push_back(std::move(tok));
            }
            for (int i = 0; i < cfg_.tokens_per_frame; ++i)
                h.set_row(i, model_.advance_hidden_row(acts.hidden.row(i), l));
            out.push_back(std::move(acts));
        }
        ++frame_;
        return out;
    }

    // Flat block: the top-left grid quadrant, uniformly suppressed.
    // Textured block: the bottom-right quadrant, amplified with
    // deterministic per-frame jitter for high score variance.
    void shape_scores(scoresrc::FrameActivations& acts) const {
        const int rows = layout_.rows, cols = layout_.cols;
        if (rows < 2 || cols < 2) return;
        std::mt19937_64 rng(cfg_.rng_seed * 1000003ull +
                            static_cast<std::uint64_t>(acts.frame_index) * 31ull +
                            static_cast<std::uint64_t>(acts.layer_index));
        std::uniform_real_distribution<double> jitter(0.5, 4.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const int i = r * cols + c;
                if (r < rows / 2 && c < cols / 2)
                    acts.raw_scores[i] *= 0.1;
                else if (r >= rows - rows / 2 && c >= cols - cols / 2)
                    acts.raw_scores[i] *= jitter(rng);
            }
    }

    static bool in_flat_block(const pipeline::FrameLayout& layout, int token) {
        if (token >= layout.patch_count()) return false;
        const int r = token / layout.cols, c = token % layout.cols;
        return r < layout.rows / 2 && c < layout.cols / 2;
    }

private:
    core::PipelineConfig cfg_;
    int frames_;
    StreamRegime regime_;
    scoresrc::ToyModel model_;
    pipeline::FrameLayout layout_;
    std::vector<core::LayerCache> history_;
    int frame_ = 0;
};

inline std::vector<scoresrc::FrameActivations> generate_stream(
    const core::PipelineConfig& cfg, int frames,
    StreamRegime regime = StreamRegime::Plain) {
    StreamGenerator gen(cfg, frames, regime);
    std::vector<scoresrc::FrameActivations> out;
    for (int t = 0; t < frames; ++t)
        for (auto& acts : gen.next_frame()) out.push_back(std::move(acts));
    return out;
}

struct RunReport {
    core::PipelineConfig config_echo;
    std::vector<pipeline::FrameDiagnostics> per_frame;
    std::size_t peak_cache_tokens = 0;
    std::size_t total_evicted = 0;
    std::size_t total_merged = 0;
    double mean_absorbed_per_target = 0.0;
    double wall_time_sec = 0.0;  // excluded from equality
    std::uint64_t seed_fingerprint = 0;

    bool same_outcome(const RunReport& o) const {
        if (!(config_echo == o.config_echo)) return false;
        if (peak_cache_tokens != o.peak_cache_tokens ||
            total_evicted != o.total_evicted ||
            total_merged != o.total_merged ||
            mean_absorbed_per_target != o.mean_absorbed_per_target ||
            seed_fingerprint != o.seed_fingerprint)
            return false;
        if (per_frame.size() != o.per_frame.size()) return false;
        for (std::size_t f = 0; f < per_frame.size(); ++f) {
            const auto& a = per_frame[f];
            const auto& b = o.per_frame[f];
            if (a.frame != b.frame || a.layers.size() != b.layers.size())
                return false;
            for (std::size_t l = 0; l < a.layers.size(); ++l) {
                const auto& x = a.layers[l];
                const auto& y = b.layers[l];
                if (x.cache_size != y.cache_size || x.n_retain != y.n_retain ||
                    x.n_merge != y.n_merge || x.n_evict != y.n_evict ||
                    x.n_protected != y.n_protected ||
                    x.merge_demotions != y.merge_demotions ||
                    x.mean_consistency != y.mean_consistency)
                    return false;
            }
        }
        return true;
    }
};

inline std::uint64_t fnv1a_mix(std::uint64_t h, const void* data,
                               std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fingerprint_activations(
    std::uint64_t h, const scoresrc::FrameActivations& a) {
    h = fnv1a_mix(h, a.hidden.data().data(), a.hidden.data().size() * 8);
    h = fnv1a_mix(h, a.keys.data().data(), a.keys.data().size() * 8);
    h = fnv1a_mix(h, a.values.data().data(), a.values.data().size() * 8);
    h = fnv1a_mix(h, a.raw_scores.data(), a.raw_scores.size() * 8);
    return h;
}

// Runs the pipeline over a frame source. FrameSource yields all layers of
// one frame per call, or an empty vector when exhausted.
template <typename FrameSource>
inline RunReport run_stream(const core::PipelineConfig& cfg,
                            FrameSource&& source,
                            pipeline::StreamState* final_state = nullptr) {
    core::require_valid(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    auto state = pipeline::StreamState::create(cfg);
    RunReport rep;
    rep.config_echo = cfg;
    std::uint64_t fp = 1469598103934665603ull;

    while (true) {
        std::vector<scoresrc::FrameActivations> frame = source();
        if (frame.empty()) break;
        for (const auto& a : frame) fp = fingerprint_activations(fp, a);
        try {
            pipeline::process_frame(state, frame, cfg);
        } catch (const Error& e) {
            throw PipelineError("frame " + std::to_string(state.frame_counter) +
                                ": " + e.what());
        }
        rep.peak_cache_tokens =
            std::max(rep.peak_cache_tokens, state.total_cached());
    }

    rep.per_frame = state.diagnostics;
    rep.total_evicted = state.total_evicted;
    rep.total_merged = state.total_merged;
    std::size_t targets = 0, absorbed = 0;
    for (const auto& c : state.caches)
        for (const auto& e : c.entries)
            if (e.absorbed_count > 0) {
                ++targets;
                absorbed += e.absorbed_count;
            }
    rep.mean_absorbed_per_target =
        targets ? static_cast<double>(absorbed) / static_cast<double>(targets)
                : 0.0;
    rep.seed_fingerprint = fp;
    rep.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (final_state) *final_state = std::move(state);
    return rep;
}

inline RunReport run_toy(const core::PipelineConfig& cfg, int frames,
                         StreamRegime regime = StreamRegime::Plain,
                         pipeline::StreamState* final_state = nullptr) {
    StreamGenerator gen(cfg, frames, regime);
    int t = 0;
    return run_stream(cfg,
                      [&]() -> std::vector<scoresrc::FrameActivations> {
                          if (t++ >= frames) return {};
                          return gen.next_frame();
                      },
                      final_state);
}

inline RunReport run_trace(const core::PipelineConfig& cfg,
                           const std::string& trace_path,
                           pipeline::StreamState* final_state = nullptr) {
    scoresrc::TraceReader reader(trace_path);
    const auto& hdr = reader.header();
    if (static_cast<int>(hdr.num_layers) != cfg.num_layers ||
        static_cast<int>(hdr.tokens_per_frame) != cfg.tokens_per_frame)
        throw TraceFormatError("trace dimensions disagree with config", 8);
    return run_stream(
        cfg,
        [&]() -> std::vector<scoresrc::FrameActivations> {
            std::vector<scoresrc::FrameActivations> frame;
            for (std::uint32_t l = 0; l < hdr.num_layers; ++l) {
                auto rec = reader.next();
                if (!rec) {
                    if (l != 0)
                        throw TraceFormatError("trace ends mid-frame", 0);
                    return {};
                }
                frame.push_back(std::move(*rec));
            }
            return frame;
        },
        final_state);
}

// ---- report serialization -------------------------------------------------

inline nlohmann::json config_to_json(const core::PipelineConfig& c) {
    return {{"window_size", c.window_size},
            {"consistency_weight", c.consistency_weight},
            {"merge_ratio", c.merge_ratio},
            {"budget_total", c.budget_total},
            {"smoothing_alpha", c.smoothing_alpha},
            {"hybrid_beta", c.hybrid_beta},
            {"dap_tau", c.dap_tau},
            {"dap_eta", c.dap_eta},
            {"dap_kmax", c.dap_kmax},
            {"num_layers", c.num_layers},
            {"tokens_per_frame", c.tokens_per_frame},
            {"rng_seed", c.rng_seed}};
}

inline nlohmann::json report_to_json(const RunReport& rep) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : rep.per_frame) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : f.layers)
            layers.push_back({{"cache_size", l.cache_size},
                              {"n_retain", l.n_retain},
                              {"n_merge", l.n_merge},
                              {"n_evict", l.n_evict},
                              {"n_protected", l.n_protected},
                              {"merge_demotions", l.merge_demotions},
                              {"mean_consistency", l.mean_consistency}});
        frames.push_back({{"frame", f.frame}, {"layers", layers}});
    }
    char fp[32];
    std::snprintf(fp, sizeof fp, "%016llx",
                  static_cast<unsigned long long>(rep.seed_fingerprint));
    return {{"config", config_to_json(rep.config_echo)},
            {"per_frame", frames},
            {"summary",
             {{"peak_cache_tokens", rep.peak_cache_tokens},
              {"total_evicted", rep.total_evicted},
              {"total_merged", rep.total_merged},
              {"mean_absorbed_per_target", rep.mean_absorbed_per_target},
              {"wall_time_sec", rep.wall_time_sec}}},
            {"seed_fingerprint", fp}};
}

inline void write_report_json(const RunReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << report_to_json(rep).dump(2) << "\n";
}

inline void write_report_csv(const RunReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write csv: " + path);
    out << "frame,layer,cache_size,n_retain,n_merge,n_evict,n_protected,"
           "merge_demotions,mean_consistency\n";
    for (const auto& f : rep.per_frame)
        for (std::size_t l = 0; l < f.layers.size(); ++l) {
            const auto& d = f.layers[l];
            out << f.frame << ',' << l << ',' << d.cache_size << ','
                << d.n_retain << ',' << d.n_merge << ',' << d.n_evict << ','
                << d.n_protected << ',' << d.merge_demotions << ','
                << d.mean_consistency << '\n';
        }
}

// ---- sweeps ---------------------------------------------------------------

enum class SweepAxis { Lambda, Window, MergeRatio, Components };

inline std::vector<double> default_axis_values(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Lambda: return {0.0, 0.25, 0.5, 0.75, 1.0};
        case SweepAxis::Window: return {3, 5, 7, 10};
        case SweepAxis::MergeRatio: return {0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
        case SweepAxis::Components: return {0, 1, 2, 3};
    }
    return {};
}

struct SweepCell {
    std::string label;
    core::PipelineConfig config;
    RunReport report;
};

inline std::vector<SweepCell> sweep(const core::PipelineConfig& base,
                                    SweepAxis axis,
                                    std::vector<double> values, int frames,
                                    StreamRegime regime = StreamRegime::Plain) {
    if (values.empty()) values = default_axis_values(axis);
    std::vector<SweepCell> cells;
    for (double v : values) {
        SweepCell cell;
        cell.config = base;
        switch (axis) {
            case SweepAxis::Lambda:
                cell.config.consistency_weight = v;
                cell.label = "lambda=" + std::to_string(v);
                break;
            case SweepAxis::Window:
                cell.config.window_size = static_cast<int>(v);
                cell.label = "window=" + std::to_string(static_cast<int>(v));
                break;
            case SweepAxis::MergeRatio:
                cell.config.merge_ratio = v;
                cell.label = "merge_ratio=" + std::to_string(v);
                break;
            case SweepAxis::Components: {
                const int code = static_cast<int>(v);
                const bool clces_on = (code & 2) != 0;
                const bool hcc_on = (code & 1) != 0;
                cell.config.consistency_weight =
                    clces_on ? base.consistency_weight : 0.0;
                cell.config.merge_ratio = hcc_on ? base.merge_ratio : 0.0;
                cell.label = std::string("clces=") + (clces_on ? "on" : "off") +
                             ",hcc=" + (hcc_on ? "on" : "off");
                break;
            }
        }
        core::require_valid(cell.config);
        cell.report = run_toy(cell.config, frames, regime);
        cells.push_back(std::move(cell));
    }
    return cells;
}

}  // namespace streamkv::harness
