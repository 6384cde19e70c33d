#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "streamkv/core/types.hpp"
#include "streamkv/errors.hpp"
#include "streamkv/matrix.hpp"

namespace streamkv::hcc {

// Three-tier partition of the evictable set. Indices refer to positions in
// the score vector handed to triage(); assignment[j] is the position of
// merge[j]'s target in the target array handed to nn_assign().
struct TriageResult {
    std::vector<std::size_t> retain;
    std::vector<std::size_t> merge;
    std::vector<std::size_t> evict;
    double tau_merge = 0.0;
    double tau_evict = 0.0;
    std::vector<std::size_t> assignment;
};

// Count-based triage: the budget headroom fixes |retain|, the merge ratio
// fixes |merge| = ceil(r_m * n_rest), thresholds fall out as order
// statistics. Ties go to the lower token index.
inline TriageResult triage(const Vec& scores, std::size_t protected_count,
                           std::size_t budget, double merge_ratio) {
    if (budget < protected_count)
        throw BudgetTooSmallError("budget " + std::to_string(budget) +
                                  " < protected " +
                                  std::to_string(protected_count));
    for (double s : scores)
        if (!(s >= 0.0) || !std::isfinite(s))
            throw NegativeInputError("triage scores must be finite and >= 0");

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return scores[a] > scores[b];
                     });

    TriageResult out;
    const std::size_t n_retain = std::min<std::size_t>(n, budget - protected_count);
    const std::size_t n_rest = n - n_retain;
    const std::size_t n_merge = static_cast<std::size_t>(
        std::ceil(merge_ratio * static_cast<double>(n_rest)));

    out.retain.assign(order.begin(), order.begin() + n_retain);
    out.merge.assign(order.begin() + n_retain,
                     order.begin() + n_retain + n_merge);
    out.evict.assign(order.begin() + n_retain + n_merge, order.end());
    std::sort(out.retain.begin(), out.retain.end());
    std::sort(out.merge.begin(), out.merge.end());
    std::sort(out.evict.begin(), out.evict.end());

    out.tau_evict = n_retain > 0 ? scores[order[n_retain - 1]]
                                 : std::numeric_limits<double>::infinity();
    out.tau_merge = n_merge > 0 ? scores[order[n_retain + n_merge - 1]]
                                : out.tau_evict;
    return out;
}

// Nearest neighbor on the key manifold under cosine similarity. Ties break
// toward the lower target index; zero-norm keys never win an argmax.
inline std::vector<std::size_t> nn_assign(
    const std::vector<Vec>& merge_keys, const std::vector<Vec>& target_keys) {
    if (target_keys.empty()) throw NoMergeTargetsError();
    std::vector<std::size_t> out;
    out.reserve(merge_keys.size());
    for (const auto& k : merge_keys) {
        std::size_t best = 0;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < target_keys.size(); ++j) {
            const double sim = cosine_similarity(k, target_keys[j]);
            if (sim > best_sim) {
                best_sim = sim;
                best = j;
            }
        }
        out.push_back(best);
    }
    return out;
}

// Wiring of a TriageResult back onto cache entry positions.
struct TriagePlan {
    std::vector<std::size_t> evictable_pos;  // cache positions of U, score order
    std::vector<std::size_t> target_pos;     // cache positions of R + P
    TriageResult tri;                        // indices into evictable_pos
};

struct FuseStats {
    std::size_t merged = 0;
    std::size_t evicted = 0;
    std::size_t zero_score_demotions = 0;
    std::size_t no_target_demotions = 0;
};

// Score-proportional sequential fusion. Candidates are folded into their
// targets in descending enhanced-score order; the accumulation rule
// s_target += s_candidate makes the result order-independent in exact
// arithmetic. Evicted and merged entries are removed, survivor order kept.
inline FuseStats fuse(core::LayerCache& cache, const TriagePlan& plan) {
    FuseStats stats;
    const std::size_t n_entries = cache.entries.size();
    for (std::size_t p : plan.evictable_pos)
        if (p >= n_entries) throw MissingTokenError("evictable position out of range");
    for (std::size_t p : plan.target_pos)
        if (p >= n_entries) throw MissingTokenError("target position out of range");
    if (plan.tri.assignment.size() != plan.tri.merge.size() &&
        !plan.tri.merge.empty() && !plan.target_pos.empty())
        throw MissingTokenError("assignment incomplete");

    std::vector<char> drop(n_entries, 0);
    for (std::size_t i : plan.tri.evict) drop[plan.evictable_pos[i]] = 1;
    stats.evicted = plan.tri.evict.size();

    // Descending stored enhanced score, ties by cache position.
    std::vector<std::size_t> merge_order(plan.tri.merge.size());
    std::iota(merge_order.begin(), merge_order.end(), 0);
    std::stable_sort(merge_order.begin(), merge_order.end(),
                     [&](std::size_t a, std::size_t b) {
                         const auto& ea =
                             cache.entries[plan.evictable_pos[plan.tri.merge[a]]];
                         const auto& eb =
                             cache.entries[plan.evictable_pos[plan.tri.merge[b]]];
                         return ea.enhanced_score > eb.enhanced_score;
                     });

    for (std::size_t j : merge_order) {
        const std::size_t cand_pos = plan.evictable_pos[plan.tri.merge[j]];
        auto& cand = cache.entries[cand_pos];
        if (plan.target_pos.empty()) {
            drop[cand_pos] = 1;
            ++stats.no_target_demotions;
            continue;
        }
        auto& target = cache.entries[plan.target_pos[plan.tri.assignment[j]]];
        const double denom = target.enhanced_score + cand.enhanced_score;
        if (denom <= 0.0) {
            drop[cand_pos] = 1;
            ++stats.zero_score_demotions;
            continue;
        }
        if (target.key.size() != cand.key.size())
            throw DimensionMismatchError("fuse key dimensions");
        const double wt = target.enhanced_score / denom;
        const double wc = cand.enhanced_score / denom;
        for (std::size_t d = 0; d < target.key.size(); ++d) {
            target.key[d] = wt * target.key[d] + wc * cand.key[d];
            target.value[d] = wt * target.value[d] + wc * cand.value[d];
        }
        target.enhanced_score += cand.enhanced_score;
        target.absorbed_count += 1;
        drop[cand_pos] = 1;
        ++stats.merged;
    }

    std::vector<core::TokenRecord> survivors;
    survivors.reserve(n_entries);
    for (std::size_t p = 0; p < n_entries; ++p)
        if (!drop[p]) survivors.push_back(std::move(cache.entries[p]));
    cache.entries = std::move(survivors);
    return stats;
}

// Triage + NN assignment + fusion for one layer. evictable_pos lists the
// cache positions of U; triage_scores aligns with it. Everything not in
// evictable_pos is treated as protected.
inline std::pair<TriagePlan, FuseStats> compress_layer(
    core::LayerCache& cache, const std::vector<std::size_t>& evictable_pos,
    const Vec& triage_scores, double merge_ratio) {
    if (evictable_pos.size() != triage_scores.size())
        throw DimensionMismatchError("evictable/score size mismatch");
    std::vector<char> is_evictable(cache.entries.size(), 0);
    for (std::size_t p : evictable_pos) is_evictable[p] = 1;
    std::vector<std::size_t> protected_pos;
    for (std::size_t p = 0; p < cache.entries.size(); ++p)
        if (!is_evictable[p]) protected_pos.push_back(p);

    TriagePlan plan;
    plan.evictable_pos = evictable_pos;
    plan.tri = triage(triage_scores, protected_pos.size(), cache.budget,
                      merge_ratio);

    for (std::size_t i : plan.tri.retain)
        plan.target_pos.push_back(evictable_pos[i]);
    plan.target_pos.insert(plan.target_pos.end(), protected_pos.begin(),
                           protected_pos.end());
    std::sort(plan.target_pos.begin(), plan.target_pos.end());

    if (!plan.tri.merge.empty() && !plan.target_pos.empty()) {
        std::vector<Vec> merge_keys, target_keys;
        merge_keys.reserve(plan.tri.merge.size());
        for (std::size_t i : plan.tri.merge)
            merge_keys.push_back(cache.entries[evictable_pos[i]].key);
        target_keys.reserve(plan.target_pos.size());
        for (std::size_t p : plan.target_pos)
            target_keys.push_back(cache.entries[p].key);
        plan.tri.assignment = nn_assign(merge_keys, target_keys);
    }
    FuseStats stats = fuse(cache, plan);
    return {std::move(plan), stats};
}

}  // namespace streamkv::hcc
