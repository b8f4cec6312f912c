#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "mr2/errors.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/linalg.hpp"
#include "mr2/losses.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/rng.hpp"

namespace mr2 {

namespace detail {

inline void check_margins(std::span<const double> gamma) {
    for (double g : gamma)
        if (!(g > 0.0) || !std::isfinite(g)) throw InputError("margins must be positive");
}

inline void check_sample_count(double n) {
    if (!(n > 0.0)) throw InputError("sample count must be positive");
}

}  // namespace detail

// Holder conjugate of p: 1 <-> inf, 2 <-> 2.
inline double conjugate_exponent(double p) {
    if (!(p >= 1.0)) throw InputError("conjugate_exponent: p must be >= 1");
    if (p == 1.0) return kInfNorm;
    if (std::isinf(p)) return 1.0;
    return p / (p - 1.0);
}

/// Norm-dependent constant of the general margin-complexity bound:
/// 1 for p <= 2, 2^(p/2) Gamma((p+1)/2) / sqrt(pi) for 2 < p < inf and
/// sqrt(2 ln d) at p = inf.
inline double c_p_constant(double p, double feature_dim) {
    if (!(p >= 1.0)) throw InputError("c_p_constant: p must be >= 1");
    if (std::isinf(p)) {
        if (!(feature_dim >= 1.0)) throw InputError("c_p_constant: feature dimension must be >= 1");
        return std::sqrt(2.0 * std::log(feature_dim));
    }
    if (p <= 2.0) return 1.0;
    return std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
}

// Mean of the ramp loss Phi_{gamma_y}(margin) over a labelled logit matrix.
inline double empirical_margin_risk(const Matrix& logits, std::span<const Label> labels, const MarginVector& gamma) {
    if (labels.empty()) throw InputError("empirical_margin_risk: empty dataset");
    if (logits.rows() != labels.size()) throw InputError("empirical_margin_risk: size mismatch");
    Vector v(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) v[i] = gamma_ramp_loss(logits.row(i), labels[i], gamma[labels[i]]);
    return pairwise_sum(v) / static_cast<double>(v.size());
}

// Mean gamma-margin cross-entropy over a labelled logit matrix.
inline double surrogate_risk(const Matrix& logits, std::span<const Label> labels, const MarginVector& gamma) {
    if (labels.empty()) throw InputError("surrogate_risk: empty dataset");
    if (logits.rows() != labels.size()) throw InputError("surrogate_risk: size mismatch");
    Vector v(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) v[i] = logit_margin_ce(logits.row(i), labels[i], gamma[labels[i]]).value;
    return pairwise_sum(v) / static_cast<double>(v.size());
}

// Fraction misclassified; an argmax tie with the true class counts as an error.
inline double zero_one_risk(const Matrix& logits, std::span<const Label> labels) {
    if (labels.empty()) throw InputError("zero_one_risk: empty dataset");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) wrong += logit_margin(logits.row(i), labels[i]) <= 0.0;
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

/// Lambda sqrt(K/N) sqrt(sum_k (||mu_k||^2 + ||s_k||^2) / gamma_k^2).
inline double rademacher_bound_l2(std::span<const double> mu_sq, std::span<const double> s_sq,
                                  std::span<const double> gamma, double lambda, double n, double k) {
    if (mu_sq.size() != gamma.size() || s_sq.size() != gamma.size())
        throw InputError("rademacher_bound_l2: size mismatch");
    detail::check_margins(gamma);
    detail::check_sample_count(n);
    if (!(lambda >= 0.0)) throw InputError("rademacher_bound_l2: Lambda must be >= 0");
    double s = 0.0;
    for (std::size_t i = 0; i < gamma.size(); ++i) s += (mu_sq[i] + s_sq[i]) / (gamma[i] * gamma[i]);
    return lambda * std::sqrt(k / n) * std::sqrt(s);
}

/// C(p) Lambda_q sqrt(K/N) sqrt(sum_k r_{k,p}^2 / gamma_k^2).
inline double rademacher_bound_lp(std::span<const double> r_sq_p, std::span<const double> gamma, double lambda_q,
                                  double n, double k, double p, double feature_dim) {
    if (r_sq_p.size() != gamma.size()) throw InputError("rademacher_bound_lp: size mismatch");
    detail::check_margins(gamma);
    detail::check_sample_count(n);
    if (!(lambda_q >= 0.0)) throw InputError("rademacher_bound_lp: Lambda must be >= 0");
    double s = 0.0;
    for (std::size_t i = 0; i < gamma.size(); ++i) s += r_sq_p[i] / (gamma[i] * gamma[i]);
    return c_p_constant(p, feature_dim) * lambda_q * std::sqrt(k / n) * std::sqrt(s);
}

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

namespace detail {

// (Lambda / N) sum_y ||sum_k sum_{i in I_k} eps_{iy} phi(x_i) / gamma_k||_p for
// one sign matrix; `signs` holds eps row-major as N x K in class-block order.
inline double rademacher_objective(std::span<const Matrix> classes, std::span<const double> gamma, double lambda,
                                   double p, std::span<const std::int8_t> signs, std::size_t n_total,
                                   std::size_t n_labels, Vector& scratch) {
    const std::size_t d = scratch.size();
    double total = 0.0;
    for (std::size_t y = 0; y < n_labels; ++y) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        std::size_t i = 0;
        for (std::size_t k = 0; k < classes.size(); ++k) {
            const double inv_g = 1.0 / gamma[k];
            for (std::size_t r = 0; r < classes[k].rows(); ++r, ++i) {
                const double e = signs[i * n_labels + y] * inv_g;
                auto row = classes[k].row(r);
                for (std::size_t c = 0; c < d; ++c) scratch[c] += e * row[c];
            }
        }
        total += lp_norm(scratch, p);
    }
    return lambda * total / static_cast<double>(n_total);
}

inline void check_classes(std::span<const Matrix> classes, std::span<const double> gamma, std::size_t& n_total,
                          std::size_t& d) {
    if (classes.empty() || classes.size() != gamma.size()) throw InputError("rademacher: one margin per class required");
    check_margins(gamma);
    n_total = 0;
    d = 0;
    for (const auto& c : classes) {
        if (c.rows() == 0) continue;
        if (d == 0) d = c.cols();
        if (c.cols() != d) throw InputError("rademacher: feature dimension mismatch");
        n_total += c.rows();
    }
    if (n_total == 0 || d == 0) throw InputError("rademacher: empty dataset");
}

}  // namespace detail

/// Monte-Carlo estimate of the empirical gamma-margin Rademacher complexity
/// for the head class {||w_y||_q <= Lambda}. The inner supremum is exact via
/// the dual norm: sup w.v = Lambda ||v||_p. Each draw has its own seed and
/// the per-draw values are reduced by pairwise summation, so the result does
/// not depend on `threads`.
inline McEstimate rademacher_mc(std::span<const Matrix> classes, std::span<const double> gamma, double lambda,
                                std::size_t num_draws, std::uint64_t seed, double p = 2.0, unsigned threads = 1) {
    if (num_draws < 2) throw InputError("rademacher_mc: need at least two draws");
    if (!(p >= 1.0)) throw InputError("rademacher_mc: p must be >= 1");
    std::size_t n_total = 0, d = 0;
    detail::check_classes(classes, gamma, n_total, d);
    const std::size_t n_labels = classes.size();

    Vector values(num_draws);
    auto work = [&](std::size_t begin, std::size_t end) {
        Vector scratch(d);
        std::vector<std::int8_t> signs(n_total * n_labels);
        for (std::size_t t = begin; t < end; ++t) {
            std::mt19937_64 rng(derive_seed(seed, {t}));
            for (auto& s : signs) s = (rng() >> 63) ? 1 : -1;
            values[t] = detail::rademacher_objective(classes, gamma, lambda, p, signs, n_total, n_labels, scratch);
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(num_draws)));
    if (threads == 1) {
        work(0, num_draws);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (num_draws + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t b = w * chunk, e = std::min(num_draws, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }

    McEstimate out;
    out.mean = pairwise_sum(values) / static_cast<double>(num_draws);
    Vector sq(num_draws);
    for (std::size_t t = 0; t < num_draws; ++t) sq[t] = (values[t] - out.mean) * (values[t] - out.mean);
    const double var = pairwise_sum(sq) / static_cast<double>(num_draws - 1);
    out.std_error = std::sqrt(var / static_cast<double>(num_draws));
    return out;
}

/// Exact expectation by enumerating all 2^(N K) sign matrices.
inline double rademacher_exact(std::span<const Matrix> classes, std::span<const double> gamma, double lambda,
                               double p = 2.0) {
    std::size_t n_total = 0, d = 0;
    detail::check_classes(classes, gamma, n_total, d);
    const std::size_t n_labels = classes.size();
    const std::size_t bits = n_total * n_labels;
    if (bits > 24) throw InputError("rademacher_exact: too many sign variables to enumerate");
    const std::uint64_t count = std::uint64_t{1} << bits;
    Vector values(count);
    Vector scratch(d);
    std::vector<std::int8_t> signs(bits);
    for (std::uint64_t m = 0; m < count; ++m) {
        for (std::size_t b = 0; b < bits; ++b) signs[b] = ((m >> b) & 1u) ? 1 : -1;
        values[m] = detail::rademacher_objective(classes, gamma, lambda, p, signs, n_total, n_labels, scratch);
    }
    return pairwise_sum(values) / static_cast<double>(count);
}

// 3 sqrt(ln(2/delta) / (2N)).
inline double confidence_term(double n, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must be in (0, 1)");
    detail::check_sample_count(n);
    return 3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * n));
}

/// Margin risk bound: R_hat^gamma + 4 sqrt(2K) Rademacher + 3 sqrt(ln(2/delta)/2N).
inline double lemma1_rhs(double margin_risk, double rademacher, double k, double n, double delta) {
    return margin_risk + 4.0 * std::sqrt(2.0 * k) * rademacher + confidence_term(n, delta);
}

/// Composite bound for margin cross-entropy:
/// R_hat^{gamma,ce} / ln 2 + (4 sqrt(2) Lambda K / sqrt(N)) sqrt(sum_k alpha_k / gamma_k^2)
/// + 3 sqrt(ln(2/delta) / 2N).
inline double prop1_rhs(double surrogate, std::span<const double> mu_sq, std::span<const double> s_sq,
                        std::span<const double> gamma, double lambda, double n, double k, double delta) {
    if (mu_sq.size() != gamma.size() || s_sq.size() != gamma.size()) throw InputError("prop1_rhs: size mismatch");
    detail::check_margins(gamma);
    detail::check_sample_count(n);
    const double low_order = confidence_term(n, delta);
    double s = 0.0;
    for (std::size_t i = 0; i < gamma.size(); ++i) s += (mu_sq[i] + s_sq[i]) / (gamma[i] * gamma[i]);
    return surrogate / std::numbers::ln2 + 4.0 * std::numbers::sqrt2 * lambda * k / std::sqrt(n) * std::sqrt(s) +
           low_order;
}

// Class-restricted complexity (Lambda / sqrt(N_k)) sqrt(||mu_k||^2 + ||s_k||^2).
inline double per_class_complexity(double mu_sq, double s_sq, double lambda, double n_k) {
    if (!(n_k >= 1.0)) throw InputError("per-class bound: empty class");
    return lambda / std::sqrt(n_k) * std::sqrt(mu_sq + s_sq);
}

/// Per-class bound: R_hat^{gamma,ce}_{D_k} / ln 2 + (4 / gamma_k) R_k
/// + 3 sqrt(ln(2/delta) / 2 N_k).
inline double per_class_rhs(double class_surrogate, double mu_sq, double s_sq, double gamma_k, double lambda,
                            double n_k, double delta) {
    if (!(gamma_k > 0.0)) throw InputError("per_class_rhs: margin must be positive");
    const double complexity = per_class_complexity(mu_sq, s_sq, lambda, n_k);
    return class_surrogate / std::numbers::ln2 + 4.0 / gamma_k * complexity + confidence_term(n_k, delta);
}

}  // namespace mr2
