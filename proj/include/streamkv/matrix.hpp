#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "streamkv/errors.hpp"

namespace streamkv {

using Vec = std::vector<double>;

// Dense row-major matrix. Desk-scale dimensions only, no BLAS needed.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) {
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        return data_[r * cols_ + c];
    }

    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }

    Vec row(std::size_t r) const {
        return Vec(row_ptr(r), row_ptr(r) + cols_);
    }
    void set_row(std::size_t r, const Vec& v) {
        if (v.size() != cols_)
            throw DimensionMismatchError("set_row length != cols");
        for (std::size_t c = 0; c < cols_; ++c) (*this)(r, c) = v[c];
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool operator==(const Matrix& o) const = default;

    // out = this (m x k) * other (k x n)
    Matrix matmul(const Matrix& other) const {
        if (cols_ != other.rows_)
            throw DimensionMismatchError("matmul inner dimensions");
        Matrix out(rows_, other.cols_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t k = 0; k < cols_; ++k) {
                const double a = (*this)(i, k);
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < other.cols_; ++j)
                    out(i, j) += a * other(k, j);
            }
        }
        return out;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const Vec& a) { return std::sqrt(dot(a, a)); }

// Cosine similarity; zero-norm vectors contribute no direction and score 0.
inline double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw DimensionMismatchError("cosine_similarity lengths");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    constexpr double kZeroNorm = 1e-12;
    if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace streamkv
