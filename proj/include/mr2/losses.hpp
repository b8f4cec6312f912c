#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"

namespace mr2 {

// Loss value plus whichever gradients were requested.
struct LossGrad {
    double value = 0.0;
    std::optional<Vector> grad_logits;
    std::optional<Vector> grad_anchor;
    std::optional<std::vector<Vector>> grad_positives;
};

namespace detail {

inline void check_logits(std::span<const double> z, std::size_t y, const char* who) {
    if (z.empty()) throw InputError(std::string(who) + ": empty logits");
    if (y >= z.size()) throw InputError(std::string(who) + ": label out of range");
    if (!all_finite(z)) throw InputError(std::string(who) + ": non-finite logits");
}

inline void check_gamma(double gamma_y, const char* who) {
    if (!(gamma_y > 0.0) || !std::isfinite(gamma_y))
        throw InputError(std::string(who) + ": gamma must be positive and finite");
}

}  // namespace detail

/// Gamma-margin cross-entropy: -log softmax(z / gamma_y)[y].
/// Gradient w.r.t. z is (softmax(z / gamma_y) - onehot(y)) / gamma_y.
inline LossGrad logit_margin_ce(std::span<const double> z, std::size_t y, double gamma_y, bool want_grad = false) {
    detail::check_logits(z, y, "logit_margin_ce");
    detail::check_gamma(gamma_y, "logit_margin_ce");
    Vector scaled(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) scaled[k] = z[k] / gamma_y;
    LossGrad out;
    if (!want_grad) {
        out.value = log_sum_exp(scaled) - scaled[y];
    } else {
        Vector prob(z.size());
        out.value = softmax(scaled, prob) - scaled[y];
        prob[y] -= 1.0;
        for (double& g : prob) g /= gamma_y;
        out.grad_logits = std::move(prob);
    }
    out.value = std::max(out.value, 0.0);
    return out;
}

inline LossGrad cross_entropy(std::span<const double> z, std::size_t y, bool want_grad = false) {
    return logit_margin_ce(z, y, 1.0, want_grad);
}

/// Representation margin loss log(1 + sum_j exp(||a - p_j||^2 - 2 s_bar)).
inline LossGrad rep_margin_loss(std::span<const double> anchor, std::span<const std::span<const double>> positives,
                                double s_bar, bool want_grad = false) {
    if (!(s_bar >= 0.0) || !std::isfinite(s_bar)) throw InputError("rep_margin_loss: s_bar must be >= 0");
    const std::size_t d = anchor.size();
    Vector terms(positives.size() + 1, 0.0);  // terms[0] is the constant 1 inside the log
    for (std::size_t j = 0; j < positives.size(); ++j) {
        if (positives[j].size() != d) throw InputError("rep_margin_loss: dimension mismatch");
        terms[j + 1] = squared_distance(anchor, positives[j]) - 2.0 * s_bar;
    }
    LossGrad out;
    const double lse = log_sum_exp(terms);
    out.value = std::max(lse, 0.0);
    if (!want_grad) return out;

    Vector ga(d, 0.0);
    std::vector<Vector> gp(positives.size(), Vector(d, 0.0));
    for (std::size_t j = 0; j < positives.size(); ++j) {
        const double w = std::exp(terms[j + 1] - lse);
        for (std::size_t i = 0; i < d; ++i) {
            const double g = 2.0 * w * (anchor[i] - positives[j][i]);
            ga[i] += g;
            gp[j][i] = -g;
        }
    }
    out.grad_anchor = std::move(ga);
    out.grad_positives = std::move(gp);
    return out;
}

/// Hard variant: max(0, max_j ||a - p_j||^2 - 2 s_bar).
inline double rep_margin_loss_hard(std::span<const double> anchor, std::span<const std::span<const double>> positives,
                                   double s_bar) {
    if (!(s_bar >= 0.0) || !std::isfinite(s_bar)) throw InputError("rep_margin_loss_hard: s_bar must be >= 0");
    double worst = 0.0;
    for (const auto& p : positives) {
        if (p.size() != anchor.size()) throw InputError("rep_margin_loss_hard: dimension mismatch");
        worst = std::max(worst, squared_distance(anchor, p) - 2.0 * s_bar);
    }
    return worst;
}

// Phi_gamma(u) = min(1, max(0, 1 - u / gamma)).
inline double ramp(double u, double gamma) {
    detail::check_gamma(gamma, "ramp");
    return std::min(1.0, std::max(0.0, 1.0 - u / gamma));
}

// z[y] - max_{k != y} z[k]. A tie with the runner-up is a zero margin.
inline double logit_margin(std::span<const double> z, std::size_t y) {
    detail::check_logits(z, y, "logit_margin");
    if (z.size() < 2) throw InputError("logit_margin: needs at least two classes");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < z.size(); ++k)
        if (k != y) best = std::max(best, z[k]);
    return z[y] - best;
}

inline double gamma_ramp_loss(std::span<const double> z, std::size_t y, double gamma_y) {
    detail::check_gamma(gamma_y, "gamma_ramp_loss");
    return ramp(logit_margin(z, y), gamma_y);
}

/// Delta-margin cross-entropy log(1 + sum_{k != y} exp(delta(y,k) + z[k] - z[y])).
/// Gradient w.r.t. z is softmax(a) - onehot(y) where a[y] = 0 and
/// a[k] = delta(y,k) + z[k] - z[y] otherwise.
inline LossGrad delta_margin_ce(std::span<const double> z, std::size_t y, const Matrix& delta, bool want_grad = false) {
    detail::check_logits(z, y, "delta_margin_ce");
    if (delta.rows() != z.size() || delta.cols() != z.size()) throw InputError("delta_margin_ce: delta must be K x K");
    Vector a(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) a[k] = k == y ? 0.0 : delta(y, k) + z[k] - z[y];
    if (!all_finite(a)) throw InputError("delta_margin_ce: non-finite margins");
    LossGrad out;
    if (!want_grad) {
        out.value = std::max(log_sum_exp(a), 0.0);
        return out;
    }
    Vector prob(z.size());
    out.value = std::max(softmax(a, prob), 0.0);
    prob[y] -= 1.0;
    out.grad_logits = std::move(prob);
    return out;
}

}  // namespace mr2
