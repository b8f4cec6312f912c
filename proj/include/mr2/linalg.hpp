#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mr2/errors.hpp"

namespace mr2 {

using Vector = std::vector<double>;
using Label = std::uint16_t;

inline constexpr double kInfNorm = std::numeric_limits<double>::infinity();

// Dense row-major matrix. Rows are contiguous, so a row doubles as a
// feature vector or a head weight vector.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("squared_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

// ||a||_p for p in [1, inf]; p = kInfNorm gives the max-abs coordinate.
inline double lp_norm(std::span<const double> a, double p) {
    if (!(p >= 1.0)) throw InputError("lp_norm: p must be >= 1");
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : a) m = std::max(m, std::abs(v));
        return m;
    }
    if (p == 2.0) return std::sqrt(squared_norm(a));
    if (p == 1.0) {
        double s = 0.0;
        for (double v : a) s += std::abs(v);
        return s;
    }
    // Scale by the max-abs entry so large coordinates do not overflow pow().
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    if (m == 0.0) return 0.0;
    double s = 0.0;
    for (double v : a) s += std::pow(std::abs(v) / m, p);
    return m * std::pow(s, 1.0 / p);
}

// Max-shifted log(sum(exp(x))). Empty input gives -inf.
inline double log_sum_exp(std::span<const double> x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(x.begin(), x.end());
    if (std::isinf(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

// Softmax written into `out`; returns log-sum-exp of the input.
inline double softmax(std::span<const double> x, std::span<double> out) {
    const double lse = log_sum_exp(x);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i] - lse);
    return lse;
}

// Recursive pairwise summation; the result depends only on the order of
// the input, never on how the terms were produced.
inline double pairwise_sum(std::span<const double> x) {
    if (x.size() <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = x.size() / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// Lowest index of the maximum entry.
inline std::size_t argmax(std::span<const double> x) {
    return static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
}

}  // namespace mr2
