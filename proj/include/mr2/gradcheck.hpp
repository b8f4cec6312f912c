#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mr2/linalg.hpp"
#include "mr2/losses.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/model.hpp"
#include "mr2/objective.hpp"
#include "mr2/rng.hpp"

namespace mr2 {

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradientTolerance = 1e-5;

// ||a - b||_2 / max(||a||_2, ||b||_2); zero when both vanish.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    const double diff = std::sqrt(squared_distance(analytic, numeric));
    const double scale = std::max(std::sqrt(squared_norm(analytic)), std::sqrt(squared_norm(numeric)));
    return scale == 0.0 ? 0.0 : diff / scale;
}

// Central differences of f at x, one coordinate at a time.
inline Vector numeric_gradient(const std::function<double(std::span<const double>)>& f, Vector x,
                               double step = kFiniteDifferenceStep) {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double up = f(x);
        x[i] = orig - step;
        const double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline Vector flatten(const std::vector<Matrix>& blocks) {
    Vector out;
    for (const auto& b : blocks) out.insert(out.end(), b.flat().begin(), b.flat().end());
    return out;
}

inline void unflatten(std::span<const double> flat, std::vector<Matrix>& blocks) {
    std::size_t pos = 0;
    for (auto& b : blocks) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + b.size()), b.flat().begin());
        pos += b.size();
    }
}

struct GradCheckRow {
    std::string loss;
    std::size_t instance = 0;
    double rel_error = 0.0;
};

namespace gradcheck {

inline double check_logit_margin_ce(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> kdist(2, 8);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::uniform_real_distribution<double> gdist(0.25, 4.0);
    const std::size_t k = kdist(rng);
    Vector z(k);
    for (double& v : z) v = normal(rng);
    const std::size_t y = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    const double gamma = gdist(rng);
    const LossGrad lg = logit_margin_ce(z, y, gamma, true);
    const Vector num = numeric_gradient([&](std::span<const double> zz) { return logit_margin_ce(zz, y, gamma).value; }, z);
    return relative_error(*lg.grad_logits, num);
}

inline double check_delta_margin_ce(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> kdist(2, 6);
    std::normal_distribution<double> normal(0.0, 1.5);
    const std::size_t k = kdist(rng);
    Vector z(k);
    for (double& v : z) v = normal(rng);
    Matrix delta(k, k);
    for (double& v : delta.flat()) v = normal(rng);
    const std::size_t y = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
    const LossGrad lg = delta_margin_ce(z, y, delta, true);
    const Vector num = numeric_gradient([&](std::span<const double> zz) { return delta_margin_ce(zz, y, delta).value; }, z);
    return relative_error(*lg.grad_logits, num);
}

// Gradient w.r.t. the anchor and all positives, stacked.
inline double check_rep_margin_loss(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> ddist(1, 8), mdist(1, 6);
    std::normal_distribution<double> normal(0.0, 0.7);
    std::uniform_real_distribution<double> sdist(0.0, 3.0);
    const std::size_t d = ddist(rng), m = mdist(rng);
    Vector packed((m + 1) * d);
    for (double& v : packed) v = normal(rng);
    const double s_bar = sdist(rng);
    auto eval = [d, m, s_bar](std::span<const double> x, bool grad) {
        std::vector<std::span<const double>> pos;
        for (std::size_t j = 0; j < m; ++j) pos.push_back(x.subspan((j + 1) * d, d));
        return rep_margin_loss(x.first(d), pos, s_bar, grad);
    };
    const LossGrad lg = eval(packed, true);
    Vector analytic(*lg.grad_anchor);
    for (const auto& g : *lg.grad_positives) analytic.insert(analytic.end(), g.begin(), g.end());
    const Vector num = numeric_gradient([&](std::span<const double> x) { return eval(x, false).value; }, packed);
    return relative_error(analytic, num);
}

// Full objective w.r.t. every model parameter, cycling through all
// encoder/head combinations.
inline double check_combined_objective(std::mt19937_64& rng, std::size_t instance) {
    Architecture a;
    a.encoder = static_cast<EncoderKind>(instance % 3);
    a.head = static_cast<HeadKind>((instance / 3) % 2);
    a.activation = static_cast<Activation>((instance / 6) % 2);
    a.num_classes = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    a.input_dim = std::uniform_int_distribution<std::size_t>(2, 5)(rng);
    a.hidden_dim = a.encoder == EncoderKind::Mlp ? std::uniform_int_distribution<std::size_t>(2, 6)(rng) : 0;
    a.feature_dim = a.encoder == EncoderKind::Identity ? a.input_dim : std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    ModelParams params = init_params(a, rng());

    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 10)(rng);
    Matrix x(n, a.input_dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : x.flat()) v = normal(rng);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<Label>(i % a.num_classes);
    std::shuffle(y.begin(), y.end(), rng);

    std::uniform_real_distribution<double> gdist(0.5, 3.0), ldist(0.0, 1.0), sdist(0.0, 1.0);
    Vector gamma(a.num_classes);
    for (double& g : gamma) g = gdist(rng);
    const LogitTerm term = LogitTerm::margin({gamma, 1.0, 2.0});
    const double lambda = ldist(rng);
    const double s_bar = sdist(rng);

    const ObjectiveResult res = combined_objective(params, x, y, term, s_bar, lambda, true);
    const Vector analytic = flatten(res.grads);
    ModelParams probe = params;
    const Vector num = numeric_gradient(
        [&](std::span<const double> theta) {
            unflatten(theta, probe.blocks);
            return combined_objective(probe, x, y, term, s_bar, lambda, false).value;
        },
        flatten(params.blocks));
    return relative_error(analytic, num);
}

}  // namespace gradcheck

/// Finite-difference suite: `instances` random cases for each of the
/// margin cross-entropy, Delta-margin cross-entropy, representation margin
/// loss and the combined objective.
inline std::vector<GradCheckRow> run_gradcheck_suite(std::size_t instances, std::uint64_t seed) {
    std::vector<GradCheckRow> rows;
    std::mt19937_64 rng_ce(derive_seed(seed, {1})), rng_delta(derive_seed(seed, {2})), rng_rep(derive_seed(seed, {3})),
        rng_obj(derive_seed(seed, {4}));
    for (std::size_t i = 0; i < instances; ++i) rows.push_back({"logit_margin_ce", i, gradcheck::check_logit_margin_ce(rng_ce)});
    for (std::size_t i = 0; i < instances; ++i) rows.push_back({"delta_margin_ce", i, gradcheck::check_delta_margin_ce(rng_delta)});
    for (std::size_t i = 0; i < instances; ++i) rows.push_back({"rep_margin_loss", i, gradcheck::check_rep_margin_loss(rng_rep)});
    for (std::size_t i = 0; i < instances; ++i)
        rows.push_back({"combined_objective", i, gradcheck::check_combined_objective(rng_obj, i)});
    return rows;
}

}  // namespace mr2
