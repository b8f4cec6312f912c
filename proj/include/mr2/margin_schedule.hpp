#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mr2/errors.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/linalg.hpp"

namespace mr2 {

// Per-class margins with mean equal to the budget c-bar.
struct MarginVector {
    Vector gamma;
    double budget = 1.0;
    double p = 2.0;

    std::size_t size() const noexcept { return gamma.size(); }
    double operator[](std::size_t k) const { return gamma[k]; }
};

inline constexpr double kAlphaFloor = 1e-12;

inline MarginVector uniform_margins(std::size_t num_classes, double budget) {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw InputError("margin budget must be positive");
    return {Vector(num_classes, budget), budget, 2.0};
}

namespace detail {

inline MarginVector cube_root_allocation(std::span<const double> weight, double budget, double p) {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw InputError("margin budget must be positive");
    if (weight.empty()) throw InputError("margin schedule needs at least one class");
    bool any_zero = false;
    bool all_zero = true;
    for (double a : weight) {
        if (!(a >= 0.0) || !std::isfinite(a)) throw InputError("class statistics must be finite and non-negative");
        any_zero = any_zero || a == 0.0;
        all_zero = all_zero && a == 0.0;
    }
    const std::size_t k = weight.size();
    if (all_zero) return {Vector(k, budget), budget, p};

    const double floor = any_zero ? kAlphaFloor : 0.0;
    Vector roots(k);
    for (std::size_t i = 0; i < k; ++i) roots[i] = std::cbrt(weight[i] + floor);
    const double total = std::accumulate(roots.begin(), roots.end(), 0.0);
    MarginVector out{Vector(k), budget, p};
    const double scale = budget * static_cast<double>(k) / total;
    for (std::size_t i = 0; i < k; ++i) out.gamma[i] = scale * roots[i];
    return out;
}

}  // namespace detail

/// Margins minimizing sum_k alpha_k / gamma_k^2 subject to mean(gamma) = budget:
/// gamma_y = budget * K * alpha_y^(1/3) / sum_k alpha_k^(1/3),
/// with alpha_k = ||mu_k||^2 + ||s_k||^2.
///
/// All-zero alpha gives uniform margins; a partially zero alpha gets a 1e-12
/// floor so every margin stays strictly positive.
inline MarginVector compute_gamma(std::span<const double> alpha, double budget) {
    return detail::cube_root_allocation(alpha, budget, 2.0);
}

/// Same allocation driven by the average squared L_p feature norm r_{k,p}^2.
inline MarginVector compute_gamma_lp(std::span<const double> r_sq_p, double budget, double p) {
    if (!(p >= 1.0)) throw InputError("compute_gamma_lp: p must be >= 1");
    return detail::cube_root_allocation(r_sq_p, budget, p);
}

/// Margins from running statistics. Classes that have not been observed yet
/// get the budget itself; the observed classes share the rest of the total
/// budget * K via the cube-root rule.
inline MarginVector gamma_from_stats(const ClassStats& stats, double budget) {
    const std::size_t k = stats.num_classes();
    const Vector source = stats.p() == 2.0 ? stats.alpha() : stats.r_sq_p();
    const auto& init = stats.initialized();

    Vector observed;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < k; ++i) {
        if (!init[i]) continue;
        observed.push_back(source[i]);
        index.push_back(i);
    }
    MarginVector out = uniform_margins(k, budget);
    out.p = stats.p();
    if (observed.empty()) return out;
    const MarginVector part = detail::cube_root_allocation(observed, budget, stats.p());
    for (std::size_t j = 0; j < index.size(); ++j) out.gamma[index[j]] = part.gamma[j];
    return out;
}

// Complexity term sum_k alpha_k / gamma_k^2 that the allocation minimizes.
inline double margin_complexity(std::span<const double> alpha, std::span<const double> gamma) {
    if (alpha.size() != gamma.size()) throw InputError("margin_complexity: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] / (gamma[i] * gamma[i]);
    return s;
}

// Prior-based logit margins of the Delta-margin cross-entropy family.
enum class DeltaKind { LDAM, EQL, BalancedSoftmax, LogitAdjustment };

inline std::string_view to_string(DeltaKind kind) {
    switch (kind) {
        case DeltaKind::LDAM: return "ldam";
        case DeltaKind::EQL: return "eql";
        case DeltaKind::BalancedSoftmax: return "balanced_softmax";
        case DeltaKind::LogitAdjustment: return "logit_adjustment";
    }
    return "?";
}

inline DeltaKind parse_delta_kind(std::string_view s) {
    if (s == "ldam") return DeltaKind::LDAM;
    if (s == "eql") return DeltaKind::EQL;
    if (s == "balanced_softmax") return DeltaKind::BalancedSoftmax;
    if (s == "logit_adjustment") return DeltaKind::LogitAdjustment;
    throw InputError("unknown delta-margin kind: " + std::string(s));
}

struct DeltaMargins {
    DeltaKind kind = DeltaKind::LDAM;
    Vector priors;
    double tau = 1.0;
};

// Delta(y, y') for true class y (row) and competitor y' (column).
inline Matrix delta_margins(const DeltaMargins& spec) {
    const std::size_t k = spec.priors.size();
    if (k == 0) throw InputError("delta_margins: empty priors");
    double total = 0.0;
    for (double q : spec.priors) {
        if (!(q >= 0.0) || !std::isfinite(q)) throw InputError("delta_margins: priors must be non-negative");
        total += q;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("delta_margins: priors must sum to 1");

    const bool logarithmic = spec.kind == DeltaKind::BalancedSoftmax ||
                             spec.kind == DeltaKind::LogitAdjustment || spec.kind == DeltaKind::LDAM;
    if (logarithmic)
        for (double q : spec.priors)
            if (q == 0.0) throw InputError("delta_margins: zero prior with " + std::string(to_string(spec.kind)));

    Matrix delta(k, k);
    for (std::size_t y = 0; y < k; ++y) {
        for (std::size_t yp = 0; yp < k; ++yp) {
            const double py = spec.priors[y];
            const double pyp = spec.priors[yp];
            switch (spec.kind) {
                case DeltaKind::LDAM: delta(y, yp) = std::pow(py, -0.25); break;
                case DeltaKind::EQL: delta(y, yp) = pyp; break;
                case DeltaKind::BalancedSoftmax: delta(y, yp) = std::log(pyp / py); break;
                case DeltaKind::LogitAdjustment: delta(y, yp) = spec.tau * std::log(pyp / py); break;
            }
        }
    }
    return delta;
}

}  // namespace mr2
