#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <vector>

#include "streamkv/errors.hpp"
#include "streamkv/matrix.hpp"

namespace streamkv::clces {

// Ascending ranks: lowest score -> rank 0. Ties resolved by lower token
// index getting the lower rank (stable sort). O(N log N).
inline std::vector<std::size_t> compute_ranks(const Vec& scores) {
    const std::size_t n = scores.size();
    if (n == 0) throw EmptyInputError("compute_ranks on empty score vector");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return scores[a] < scores[b];
                     });
    std::vector<std::size_t> ranks(n);
    for (std::size_t pos = 0; pos < n; ++pos) ranks[order[pos]] = pos;
    return ranks;
}

// R / (N-1) onto [0, 1]; the N = 1 degenerate case maps to the midpoint.
inline Vec normalize_ranks(const std::vector<std::size_t>& ranks) {
    const std::size_t n = ranks.size();
    if (n == 1) return {0.5};
    Vec out(n);
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<double>(ranks[i]) / denom;
    return out;
}

struct ConsistencyReport {
    Vec mean_ranks;
    Vec std_ranks;
    Vec consistency;
};

inline constexpr double kSigmaMaxInv = 3.4641016151377543864;  // sqrt(12)

// Ring buffer of the W most recent per-layer normalized rank columns for
// one frame. Single writer per frame stream.
class RankWindow {
public:
    explicit RankWindow(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t filled() const { return columns_.size(); }
    bool empty() const { return columns_.empty(); }

    void push_layer(Vec normalized_ranks) {
        if (!columns_.empty() &&
            normalized_ranks.size() != columns_.front().size())
            throw DimensionMismatchError("rank column length changed mid-frame");
        if (columns_.size() == capacity_) columns_.pop_front();
        columns_.push_back(std::move(normalized_ranks));
    }

    void reset() { columns_.clear(); }

    // Per-token mean / sample std over the filled columns, then
    // Cons_i = max(0, 1 - sigma_i * sqrt(12)). A single column carries no
    // variance evidence, so Cons = 0 there.
    ConsistencyReport consistency() const {
        if (columns_.empty()) throw EmptyWindowError();
        const std::size_t n = columns_.front().size();
        const std::size_t w = columns_.size();
        ConsistencyReport rep;
        rep.mean_ranks.assign(n, 0.0);
        rep.std_ranks.assign(n, 0.0);
        rep.consistency.assign(n, 0.0);
        for (const auto& col : columns_)
            for (std::size_t i = 0; i < n; ++i) rep.mean_ranks[i] += col[i];
        for (std::size_t i = 0; i < n; ++i)
            rep.mean_ranks[i] /= static_cast<double>(w);
        if (w < 2) return rep;  // consistency stays 0
        for (const auto& col : columns_)
            for (std::size_t i = 0; i < n; ++i) {
                const double d = col[i] - rep.mean_ranks[i];
                rep.std_ranks[i] += d * d;
            }
        for (std::size_t i = 0; i < n; ++i) {
            rep.std_ranks[i] =
                std::sqrt(rep.std_ranks[i] / static_cast<double>(w - 1));
            rep.consistency[i] = std::clamp(
                1.0 - rep.std_ranks[i] * kSigmaMaxInv, 0.0, 1.0);
        }
        return rep;
    }

private:
    std::size_t capacity_;
    std::deque<Vec> columns_;
};

// s_hat = s * (1 + lambda * Cons). Multiplicative, so zero raw scores stay
// zero and the output never falls below the raw score for lambda >= 0.
inline Vec enhance_scores(const Vec& raw, const Vec& cons, double lambda) {
    if (raw.size() != cons.size())
        throw DimensionMismatchError("enhance_scores length mismatch");
    if (lambda < 0.0) throw NegativeInputError("lambda must be >= 0");
    Vec out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] < 0.0) throw NegativeInputError("raw score < 0");
        if (cons[i] < 0.0 || cons[i] > 1.0)
            throw NegativeInputError("consistency outside [0, 1]");
        out[i] = raw[i] * (1.0 + lambda * cons[i]);
    }
    return out;
}

}  // namespace streamkv::clces
