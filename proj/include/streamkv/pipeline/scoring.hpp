#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "streamkv/errors.hpp"
#include "streamkv/matrix.hpp"
#include "streamkv/pipeline/layout.hpp"

namespace streamkv::pipeline {

// (1 - alpha) * s + alpha * (G (*) s) over the patch grid with a normalized
// 3x3 Gaussian (sigma = 1) and edge-replication padding. Camera and
// register tokens pass through untouched.
inline Vec gaussian_smooth(const Vec& scores, const FrameLayout& layout,
                           double alpha) {
    if (static_cast<int>(scores.size()) != layout.total())
        throw GridMismatchError("score length vs layout");
    Vec out = scores;
    if (alpha == 0.0 || layout.patch_count() == 0) return out;

    static const std::array<std::array<double, 3>, 3> kKernel = [] {
        std::array<std::array<double, 3>, 3> k{};
        double sum = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                k[dy + 1][dx + 1] = std::exp(-(dx * dx + dy * dy) / 2.0);
                sum += k[dy + 1][dx + 1];
            }
        for (auto& row : k)
            for (auto& v : row) v /= sum;
        return k;
    }();

    const int rows = layout.rows;
    const int cols = layout.cols;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int rr = std::clamp(r + dy, 0, rows - 1);
                    const int cc = std::clamp(c + dx, 0, cols - 1);
                    acc += kKernel[dy + 1][dx + 1] * scores[rr * cols + cc];
                }
            out[r * cols + c] =
                (1.0 - alpha) * scores[r * cols + c] + alpha * acc;
        }
    return out;
}

inline Vec min_max_normalize(const Vec& v) {
    if (v.empty()) return {};
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    Vec out(v.size(), 0.5);
    if (*mx > *mn)
        for (std::size_t i = 0; i < v.size(); ++i)
            out[i] = (v[i] - *mn) / (*mx - *mn);
    return out;
}

// Per-token diversity against a reference key set: 1 - max cosine
// similarity, 1 when the reference set is empty.
inline Vec diversity_scores(const std::vector<Vec>& keys,
                            const std::vector<Vec>& reference_keys) {
    Vec out(keys.size(), 1.0);
    if (reference_keys.empty()) return out;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        double best = -1.0;
        for (const auto& ref : reference_keys)
            best = std::max(best, cosine_similarity(keys[i], ref));
        out[i] = 1.0 - best;
    }
    return out;
}

// beta * activation_norm + (1 - beta) * diversity_norm, both min-max
// normalized over the evictable pool (constant vectors map to 0.5).
inline Vec hybrid_score(const Vec& activation, const std::vector<Vec>& keys,
                        const std::vector<Vec>& reference_keys, double beta) {
    const Vec act_norm = min_max_normalize(activation);
    const Vec div_norm = min_max_normalize(diversity_scores(keys, reference_keys));
    Vec out(activation.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = beta * act_norm[i] + (1.0 - beta) * div_norm[i];
    return out;
}

}  // namespace streamkv::pipeline
