#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mr2/binary_io.hpp"
#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"

namespace mr2 {

// ||v||_p^2 per sample; p = kInfNorm squares the max-abs coordinate.
inline double lp_squared_norm(std::span<const double> v, double p) {
    if (p == 2.0) return squared_norm(v);
    const double n = lp_norm(v, p);
    return n * n;
}

struct ClassBatchStats {
    std::size_t class_id = 0;
    std::size_t count = 0;
    double mu_sq = 0.0;   // ||mean||_2^2
    double s_sq = 0.0;    // mean ||x - mean||_2^2
    double r_sq_p = 0.0;  // mean ||x||_p^2
};

struct BatchStats {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    double p = 2.0;
    std::vector<ClassBatchStats> present;  // ascending class_id
};

// Batch-local per-class statistics for every class with at least one member.
inline BatchStats batch_stats(const Matrix& features, std::span<const Label> labels,
                              std::size_t num_classes, double p = 2.0) {
    if (features.rows() == 0) throw InputError("batch_stats: empty batch");
    if (labels.size() != features.rows()) throw InputError("batch_stats: label count mismatch");
    if (!(p >= 1.0)) throw InputError("batch_stats: p must be >= 1");
    const std::size_t d = features.cols();

    std::vector<std::size_t> counts(num_classes, 0);
    Matrix sums(num_classes, d);
    std::vector<double> r_sums(num_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t k = labels[i];
        if (k >= num_classes) throw InputError("batch_stats: label out of range");
        ++counts[k];
        auto row = features.row(i);
        auto acc = sums.row(k);
        for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
        r_sums[k] += lp_squared_norm(row, p);
    }

    BatchStats out{num_classes, d, p, {}};
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (counts[k] == 0) continue;
        const double inv = 1.0 / static_cast<double>(counts[k]);
        Vector mean(d);
        for (std::size_t j = 0; j < d; ++j) mean[j] = sums(k, j) * inv;
        double dev = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == k) dev += squared_distance(features.row(i), mean);
        out.present.push_back({k, counts[k], squared_norm(mean), dev * inv, r_sums[k] * inv});
    }
    return out;
}

// Per-class exponential moving averages of ||mu_k||^2, ||s_k||^2 and r_{k,p}^2.
// The first observation of a class seeds its averages; classes absent from
// a batch keep their values.
class ClassStats {
public:
    static constexpr std::uint32_t kVersion = 1;

    ClassStats() = default;
    ClassStats(std::size_t num_classes, std::size_t feature_dim, double p = 2.0, double decay = 0.9)
        : num_classes_(num_classes),
          feature_dim_(feature_dim),
          p_(p),
          decay_(decay),
          mu_sq_(num_classes, 0.0),
          s_sq_(num_classes, 0.0),
          r_sq_p_(num_classes, 0.0),
          initialized_(num_classes, false) {
        if (num_classes == 0 || feature_dim == 0) throw InputError("ClassStats: K and d must be positive");
        if (!(p >= 1.0)) throw InputError("ClassStats: p must be >= 1");
        if (!(decay >= 0.0 && decay < 1.0)) throw InputError("ClassStats: decay must be in [0, 1)");
    }

    void update(const BatchStats& batch) {
        if (batch.num_classes != num_classes_ || batch.feature_dim != feature_dim_ || batch.p != p_)
            throw InputError("ClassStats::update: batch dimensions do not match");
        for (const auto& c : batch.present) {
            const std::size_t k = c.class_id;
            if (!initialized_[k]) {
                mu_sq_[k] = c.mu_sq;
                s_sq_[k] = c.s_sq;
                r_sq_p_[k] = c.r_sq_p;
                initialized_[k] = true;
                continue;
            }
            mu_sq_[k] = blend(mu_sq_[k], c.mu_sq);
            s_sq_[k] = blend(s_sq_[k], c.s_sq);
            r_sq_p_[k] = blend(r_sq_p_[k], c.r_sq_p);
        }
    }

    // s-bar: average of ||s_k||^2 over initialized classes.
    double mean_deviation() const {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < num_classes_; ++k) {
            if (!initialized_[k]) continue;
            sum += s_sq_[k];
            ++n;
        }
        if (n == 0) throw StateError("mean_deviation: no class has been observed");
        return sum / static_cast<double>(n);
    }

    // ||mu_k||^2 + ||s_k||^2 per class, the L2 input of the margin schedule.
    Vector alpha() const {
        Vector a(num_classes_);
        for (std::size_t k = 0; k < num_classes_; ++k) a[k] = mu_sq_[k] + s_sq_[k];
        return a;
    }

    bool any_initialized() const {
        for (bool b : initialized_)
            if (b) return true;
        return false;
    }

    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    double p() const noexcept { return p_; }
    double decay() const noexcept { return decay_; }
    const Vector& mu_sq() const noexcept { return mu_sq_; }
    const Vector& s_sq() const noexcept { return s_sq_; }
    const Vector& r_sq_p() const noexcept { return r_sq_p_; }
    const std::vector<bool>& initialized() const noexcept { return initialized_; }

    // Section layout: "CSTS", u32 version, u32 K, u32 d, f64 p, f64 decay,
    // f64[K] mu_sq, f64[K] s_sq, f64[K] r_sq_p, u8[K] initialized.
    void serialize(io::ByteWriter& w) const {
        w.put_magic("CSTS");
        w.put<std::uint32_t>(kVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(num_classes_));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(feature_dim_));
        w.put<double>(p_);
        w.put<double>(decay_);
        w.put_array<double>(mu_sq_);
        w.put_array<double>(s_sq_);
        w.put_array<double>(r_sq_p_);
        for (bool b : initialized_) w.put<std::uint8_t>(b ? 1 : 0);
    }

    static ClassStats deserialize(io::ByteReader& r) {
        r.expect_magic("CSTS");
        if (r.get<std::uint32_t>() != kVersion) throw FormatError("ClassStats: unsupported version");
        const std::size_t k = r.get<std::uint32_t>();
        const std::size_t d = r.get<std::uint32_t>();
        const double p = r.get<double>();
        const double decay = r.get<double>();
        ClassStats s;
        try {
            s = ClassStats(k, d, p, decay);
        } catch (const InputError& e) {
            throw FormatError(std::string("ClassStats: ") + e.what());
        }
        s.mu_sq_ = r.get_array<double>(k);
        s.s_sq_ = r.get_array<double>(k);
        s.r_sq_p_ = r.get_array<double>(k);
        const auto flags = r.get_array<std::uint8_t>(k);
        for (std::size_t i = 0; i < k; ++i) {
            if (flags[i] > 1) throw FormatError("ClassStats: bad initialized flag");
            s.initialized_[i] = flags[i] == 1;
            if (s.mu_sq_[i] < 0.0 || s.s_sq_[i] < 0.0 || s.r_sq_p_[i] < 0.0)
                throw FormatError("ClassStats: negative statistic");
        }
        return s;
    }

    friend bool operator==(const ClassStats&, const ClassStats&) = default;

private:
    double blend(double old_v, double new_v) const { return decay_ * old_v + (1.0 - decay_) * new_v; }

    std::size_t num_classes_ = 0;
    std::size_t feature_dim_ = 0;
    double p_ = 2.0;
    double decay_ = 0.9;
    Vector mu_sq_;
    Vector s_sq_;
    Vector r_sq_p_;
    std::vector<bool> initialized_;
};

}  // namespace mr2
