#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "streamkv/clces/clces.hpp"
#include "streamkv/core/config.hpp"
#include "streamkv/core/types.hpp"
#include "streamkv/errors.hpp"
#include "streamkv/hcc/hcc.hpp"
#include "streamkv/pipeline/layout.hpp"
#include "streamkv/pipeline/scoring.hpp"
#include "streamkv/scoresrc/toy_model.hpp"

namespace streamkv::pipeline {

struct LayerFrameDiag {
    std::size_t cache_size = 0;
    std::size_t n_retain = 0;
    std::size_t n_merge = 0;
    std::size_t n_evict = 0;
    std::size_t n_protected = 0;
    std::size_t merge_demotions = 0;
    double mean_consistency = 0.0;
};

struct FrameDiagnostics {
    int frame = 0;
    std::vector<LayerFrameDiag> layers;
};

// Simplified anchor-protection policy: frame-0 tokens are permanent
// anchors; among later tokens, the most diverse (vs. the anchors on the
// key manifold) earn temporary protection, drawn from at most kmax
// distinct historical frames and never below the tau diversity floor.
// Swappable for a faithful reimplementation of the upstream policy.
class AnchorProtectionPolicy;

struct StreamState {
    std::vector<core::LayerCache> caches;
    std::unordered_set<core::TokenId> protected_ids;  // P = P_init + P_hist
    std::unordered_set<core::TokenId> init_ids;       // P_init
    int frame_counter = 0;
    core::TokenIdAllocator ids;
    std::vector<FrameDiagnostics> diagnostics;
    std::size_t total_merged = 0;
    std::size_t total_evicted = 0;

    static StreamState create(const core::PipelineConfig& cfg) {
        core::require_valid(cfg);
        StreamState st;
        const auto budgets = core::per_layer_budgets(cfg);
        st.caches.resize(cfg.num_layers);
        for (int l = 0; l < cfg.num_layers; ++l) {
            st.caches[l].layer_index = l;
            st.caches[l].budget = budgets[l];
        }
        return st;
    }

    std::size_t total_cached() const {
        std::size_t n = 0;
        for (const auto& c : caches) n += c.entries.size();
        return n;
    }
};

class AnchorProtectionPolicy {
public:
    virtual ~AnchorProtectionPolicy() = default;
    virtual void update(StreamState& state,
                        const core::PipelineConfig& cfg) const = 0;
};

class DefaultAnchorProtection final : public AnchorProtectionPolicy {
public:
    void update(StreamState& state,
                const core::PipelineConfig& cfg) const override {
        // Historical protection is recomputed each frame; only the
        // initial-frame anchors are permanent.
        state.protected_ids = state.init_ids;

        struct Candidate {
            core::TokenId id;
            int frame;
            double diversity;
        };
        std::vector<Candidate> candidates;
        std::size_t n_non_init = 0;
        for (auto& cache : state.caches) {
            std::vector<Vec> anchor_keys;
            for (const auto& e : cache.entries)
                if (state.init_ids.count(e.token_id))
                    anchor_keys.push_back(e.key);
            for (const auto& e : cache.entries) {
                if (state.init_ids.count(e.token_id)) continue;
                ++n_non_init;
                double best = -1.0;
                for (const auto& ref : anchor_keys)
                    best = std::max(best, cosine_similarity(e.key, ref));
                const double div = anchor_keys.empty() ? 1.0 : 1.0 - best;
                if (div >= cfg.dap_tau)
                    candidates.push_back({e.token_id, e.frame_index, div});
            }
        }

        const auto quota = static_cast<std::size_t>(
            cfg.dap_eta * static_cast<double>(n_non_init));
        if (quota == 0 || cfg.dap_kmax == 0) {
            apply_flags(state);
            return;
        }
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& a, const Candidate& b) {
                      if (a.diversity != b.diversity)
                          return a.diversity > b.diversity;
                      return a.id < b.id;
                  });
        std::unordered_set<int> frames_used;
        std::size_t taken = 0;
        for (const auto& c : candidates) {
            if (taken == quota) break;
            if (!frames_used.count(c.frame)) {
                if (frames_used.size() ==
                    static_cast<std::size_t>(cfg.dap_kmax))
                    continue;
                frames_used.insert(c.frame);
            }
            state.protected_ids.insert(c.id);
            ++taken;
        }
        apply_flags(state);
    }

private:
    static void apply_flags(StreamState& state) {
        for (auto& cache : state.caches)
            for (auto& e : cache.entries)
                e.protected_flag = state.protected_ids.count(e.token_id) > 0;
    }
};

inline void dap_protect(StreamState& state, const core::PipelineConfig& cfg,
                        const AnchorProtectionPolicy& policy =
                            DefaultAnchorProtection{}) {
    policy.update(state, cfg);
}

inline unsigned resolve_thread_count() {
    const char* env = std::getenv("STREAMKV_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 0) return 1;
    if (v == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : hw;
    }
    return static_cast<unsigned>(v);
}

// One frame through the five-step pipeline. Transactional: any error
// leaves the input state untouched.
inline void process_frame(
    StreamState& state,
    const std::vector<scoresrc::FrameActivations>& layer_acts,
    const core::PipelineConfig& cfg,
    const AnchorProtectionPolicy& dap = DefaultAnchorProtection{}) {
    if (layer_acts.size() != static_cast<std::size_t>(cfg.num_layers))
        throw DimensionMismatchError("one FrameActivations per layer expected");
    const int m = cfg.tokens_per_frame;
    for (const auto& a : layer_acts) {
        if (static_cast<int>(a.raw_scores.size()) != m ||
            static_cast<int>(a.keys.rows()) != m)
            throw DimensionMismatchError("activations vs tokens_per_frame");
        for (double s : a.raw_scores)
            if (!std::isfinite(s))
                throw NonFiniteActivationError("raw score not finite, layer " +
                                               std::to_string(a.layer_index));
        if (!a.keys.all_finite() || !a.values.all_finite())
            throw NonFiniteActivationError("kv not finite, layer " +
                                           std::to_string(a.layer_index));
    }

    StreamState next = state;  // copy-on-write snapshot
    const FrameLayout layout = FrameLayout::for_tokens(m);
    const int L = cfg.num_layers;
    const int t = next.frame_counter;

    // Steps 1-3 are sequential across layers: the rank window chains
    // layer-to-layer within the frame and resets at frame start.
    clces::RankWindow window(static_cast<std::size_t>(cfg.window_size));
    std::vector<Vec> triage_base(L);  // smoothed CLCES scores, current frame
    std::vector<Vec> enhanced(L);
    std::vector<double> mean_cons(L, 0.0);
    for (int l = 0; l < L; ++l) {
        const Vec& raw = layer_acts[l].raw_scores;
        window.push_layer(clces::normalize_ranks(clces::compute_ranks(raw)));
        const auto rep = window.consistency();
        enhanced[l] =
            clces::enhance_scores(raw, rep.consistency, cfg.consistency_weight);
        triage_base[l] = gaussian_smooth(enhanced[l], layout,
                                         cfg.smoothing_alpha);
        mean_cons[l] =
            std::accumulate(rep.consistency.begin(), rep.consistency.end(),
                            0.0) /
            static_cast<double>(rep.consistency.size());
    }

    // Token ids are allocated up front so per-layer work is independent.
    std::vector<core::TokenId> base_ids(L);
    for (int l = 0; l < L; ++l)
        for (int i = 0; i < m; ++i) {
            const core::TokenId id = next.ids.next();
            if (i == 0) base_ids[l] = id;
            if (t == 0) {
                next.init_ids.insert(id);
                next.protected_ids.insert(id);
            }
        }

    std::vector<LayerFrameDiag> diags(L);
    std::vector<std::size_t> merged_per_layer(L, 0), evicted_per_layer(L, 0);

    auto run_layer = [&](int l) {
        auto& cache = next.caches[l];
        for (int i = 0; i < m; ++i) {
            core::TokenRecord tok;
            tok.token_id = base_ids[l] + static_cast<core::TokenId>(i);
            tok.frame_index = t;
            tok.kind = layout.kind_of(i);
            tok.grid_pos = layout.grid_of(i);
            tok.key = layer_acts[l].keys.row(i);
            tok.value = layer_acts[l].values.row(i);
            tok.raw_score = layer_acts[l].raw_scores[i];
            tok.enhanced_score = enhanced[l][i];
            tok.protected_flag = next.protected_ids.count(tok.token_id) > 0;
            cache.entries.push_back(std::move(tok));
        }

        // Evictable pool: everything not protected, historical and new.
        std::vector<std::size_t> evictable_pos;
        Vec activation;
        std::vector<Vec> evictable_keys, reference_keys;
        const std::size_t n_hist = cache.entries.size() - m;
        for (std::size_t p = 0; p < cache.entries.size(); ++p) {
            const auto& e = cache.entries[p];
            if (e.protected_flag) {
                reference_keys.push_back(e.key);
                continue;
            }
            evictable_pos.push_back(p);
            activation.push_back(p < n_hist
                                     ? e.enhanced_score
                                     : triage_base[l][p - n_hist]);
            evictable_keys.push_back(e.key);
        }
        const Vec scores = hybrid_score(activation, evictable_keys,
                                        reference_keys, cfg.hybrid_beta);
        auto [plan, stats] =
            hcc::compress_layer(cache, evictable_pos, scores, cfg.merge_ratio);
        if (!cache.within_budget())
            throw PipelineError("budget violated after compression, layer " +
                                std::to_string(l));

        auto& d = diags[l];
        d.cache_size = cache.entries.size();
        d.n_retain = plan.tri.retain.size();
        d.n_merge = plan.tri.merge.size();
        d.n_evict = plan.tri.evict.size();
        d.n_protected = reference_keys.size();
        d.merge_demotions =
            stats.zero_score_demotions + stats.no_target_demotions;
        d.mean_consistency = mean_cons[l];
        merged_per_layer[l] = stats.merged;
        evicted_per_layer[l] =
            stats.evicted + stats.zero_score_demotions + stats.no_target_demotions;
    };

    const unsigned n_threads = std::min<unsigned>(
        resolve_thread_count(), static_cast<unsigned>(L));
    if (n_threads <= 1) {
        for (int l = 0; l < L; ++l) run_layer(l);
    } else {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(n_threads);
        for (unsigned w = 0; w < n_threads; ++w)
            workers.emplace_back([&, w] {
                try {
                    for (int l = static_cast<int>(w); l < L;
                         l += static_cast<int>(n_threads))
                        run_layer(l);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : workers) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    dap_protect(next, cfg, dap);

    next.frame_counter = t + 1;
    FrameDiagnostics fd;
    fd.frame = t;
    fd.layers = std::move(diags);
    next.diagnostics.push_back(std::move(fd));
    for (int l = 0; l < L; ++l) {
        next.total_merged += merged_per_layer[l];
        next.total_evicted += evicted_per_layer[l];
    }

    state = std::move(next);  // commit
}

}  // namespace streamkv::pipeline
