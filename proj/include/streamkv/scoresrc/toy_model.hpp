#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "streamkv/core/types.hpp"
#include "streamkv/errors.hpp"
#include "streamkv/matrix.hpp"

namespace streamkv::scoresrc {

// Per-frame, per-layer activations handed to the compression pipeline.
struct FrameActivations {
    int frame_index = 0;
    int layer_index = 0;
    Matrix hidden;      // M x d_model, post-attention
    Matrix keys;        // M x d
    Matrix values;      // M x d
    Vec raw_scores;     // length M

    bool operator==(const FrameActivations&) const = default;
};

struct ToyBlockParams {
    Vec ln_gain;      // d_model
    Vec ln_bias;      // d_model
    Matrix ffn_w1;    // d_model x d_ff
    Matrix ffn_w2;    // d_ff x d_model
    double lambda2 = 1.0;
    Matrix wq, wk, wv;  // d_model x d
};

struct ToyDims {
    int d_model = 32;
    int d = 16;
    int d_ff = 64;
};

inline double gelu_tanh(double x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

inline Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias) {
    const std::size_t d = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    constexpr double kEps = 1e-5;
    const double inv = 1.0 / std::sqrt(var + kEps);
    Vec out(d);
    for (std::size_t i = 0; i < d; ++i)
        out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
    return out;
}

// lambda2 * FFN(LN(h)) with FFN(x) = W2 * gelu(W1 * x).
inline Vec ffn_residual(const Vec& hidden_row, const ToyBlockParams& p) {
    if (hidden_row.size() != p.ln_gain.size())
        throw DimensionMismatchError("hidden row vs ln_gain");
    const Vec normed = layer_norm(hidden_row, p.ln_gain, p.ln_bias);
    const std::size_t d_ff = p.ffn_w1.cols();
    const std::size_t d_model = p.ffn_w2.cols();
    Vec mid(d_ff, 0.0);
    for (std::size_t i = 0; i < normed.size(); ++i) {
        const double v = normed[i];
        if (v == 0.0) continue;
        for (std::size_t j = 0; j < d_ff; ++j) mid[j] += v * p.ffn_w1(i, j);
    }
    for (double& v : mid) v = gelu_tanh(v);
    Vec out(d_model, 0.0);
    for (std::size_t i = 0; i < d_ff; ++i) {
        const double v = mid[i];
        if (v == 0.0) continue;
        for (std::size_t j = 0; j < d_model; ++j) out[j] += v * p.ffn_w2(i, j);
    }
    for (double& v : out) v *= p.lambda2;
    return out;
}

// ||lambda2 * FFN(LN(h))||_2, the raw importance score.
inline double ffn_residual_score(const Vec& hidden_row,
                                 const ToyBlockParams& p) {
    for (double v : hidden_row)
        if (!std::isfinite(v))
            throw NonFiniteActivationError("hidden row");
    const Vec res = ffn_residual(hidden_row, p);
    double s = 0.0;
    for (double v : res) {
        if (!std::isfinite(v)) throw NonFiniteActivationError("ffn residual");
        s += v * v;
    }
    return std::sqrt(s);
}

// One causal block step: frame queries attend over [cached KV ; frame KV],
// bidirectional within the frame, causal across frames. Scores come from
// the post-attention hidden state.
inline FrameActivations toy_block_forward(const Matrix& frame_hidden,
                                          const core::LayerCache& cache,
                                          const ToyBlockParams& p,
                                          int frame_index, int layer_index) {
    const std::size_t m = frame_hidden.rows();
    const std::size_t d_model = frame_hidden.cols();
    const std::size_t d = p.wq.cols();
    if (d_model != p.wq.rows())
        throw DimensionMismatchError("frame hidden vs projections");
    for (const auto& e : cache.entries)
        if (e.key.size() != d)
            throw DimensionMismatchError("cached key dim vs params");

    const Matrix q = frame_hidden.matmul(p.wq);
    const Matrix k = frame_hidden.matmul(p.wk);
    const Matrix v = frame_hidden.matmul(p.wv);

    const std::size_t n_cache = cache.entries.size();
    const std::size_t n_ctx = n_cache + m;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    Matrix ctx(m, d);
    std::vector<double> logits(n_ctx);
    for (std::size_t i = 0; i < m; ++i) {
        double max_logit = -1e300;
        for (std::size_t j = 0; j < n_ctx; ++j) {
            double s = 0.0;
            if (j < n_cache) {
                const auto& key = cache.entries[j].key;
                for (std::size_t c = 0; c < d; ++c) s += q(i, c) * key[c];
            } else {
                for (std::size_t c = 0; c < d; ++c)
                    s += q(i, c) * k(j - n_cache, c);
            }
            logits[j] = s * scale;
            max_logit = std::max(max_logit, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n_ctx; ++j) {
            logits[j] = std::exp(logits[j] - max_logit);
            denom += logits[j];
        }
        for (std::size_t j = 0; j < n_ctx; ++j) {
            const double w = logits[j] / denom;
            if (j < n_cache) {
                const auto& val = cache.entries[j].value;
                for (std::size_t c = 0; c < d; ++c) ctx(i, c) += w * val[c];
            } else {
                for (std::size_t c = 0; c < d; ++c)
                    ctx(i, c) += w * v(j - n_cache, c);
            }
        }
    }

    // Project the attention context back with wv^T; the block has no
    // separate output projection.
    FrameActivations out;
    out.frame_index = frame_index;
    out.layer_index = layer_index;
    out.hidden = Matrix(m, d_model);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d_model; ++j) {
            double s = frame_hidden(i, j);
            for (std::size_t c = 0; c < d; ++c) s += ctx(i, c) * p.wv(j, c);
            out.hidden(i, j) = s;
        }
    out.keys = k;
    out.values = v;
    out.raw_scores.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        out.raw_scores[i] = ffn_residual_score(out.hidden.row(i), p);
    if (!out.hidden.all_finite())
        throw NonFiniteActivationError("toy block output");
    return out;
}

// Deterministic stack of L toy blocks. Parameters are drawn once from the
// seed with variance 1/d_model.
class ToyModel {
public:
    ToyModel(std::uint64_t seed, int num_layers, ToyDims dims = {})
        : dims_(dims), seed_(seed) {
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
        std::normal_distribution<double> dist(
            0.0, 1.0 / std::sqrt(static_cast<double>(dims.d_model)));
        auto fill = [&](Matrix& mat, std::size_t r, std::size_t c) {
            mat = Matrix(r, c);
            for (auto& v : mat.data()) v = dist(rng);
        };
        blocks_.resize(num_layers);
        for (auto& b : blocks_) {
            b.ln_gain.assign(dims.d_model, 1.0);
            b.ln_bias.assign(dims.d_model, 0.0);
            fill(b.ffn_w1, dims.d_model, dims.d_ff);
            fill(b.ffn_w2, dims.d_ff, dims.d_model);
            b.lambda2 = 1.0;
            fill(b.wq, dims.d_model, dims.d);
            fill(b.wk, dims.d_model, dims.d);
            fill(b.wv, dims.d_model, dims.d);
        }
    }

    const ToyDims& dims() const { return dims_; }
    int num_layers() const { return static_cast<int>(blocks_.size()); }
    const ToyBlockParams& block(int l) const { return blocks_.at(l); }

    // Frame embedding: i.i.d. standard normal, keyed on (seed, frame).
    Matrix initial_hidden(int frame_index, int tokens_per_frame) const {
        std::mt19937_64 rng(seed_ * 0x100000001b3ull +
                            static_cast<std::uint64_t>(frame_index) + 1);
        std::normal_distribution<double> dist(0.0, 1.0);
        Matrix h(tokens_per_frame, dims_.d_model);
        for (auto& v : h.data()) v = dist(rng);
        return h;
    }

    // Hidden state entering the next block.
    Vec advance_hidden_row(const Vec& post_attention, int layer) const {
        const Vec res = ffn_residual(post_attention, blocks_.at(layer));
        Vec out = post_attention;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += res[i];
        return out;
    }

private:
    ToyDims dims_;
    std::uint64_t seed_;
    std::vector<ToyBlockParams> blocks_;
};

}  // namespace streamkv::scoresrc
