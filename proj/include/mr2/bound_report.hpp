#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mr2/bounds.hpp"
#include "mr2/datagen.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/model.hpp"

namespace mr2 {

struct BoundOptions {
    double delta = 0.05;
    double p = 2.0;
    std::size_t draws = 4096;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    double c_bar = 2.0;
};

struct BoundReport {
    double empirical_margin_risk = 0.0;
    double surrogate_risk = 0.0;
    double zero_one_risk = 0.0;
    double rademacher_bound = 0.0;  // at the configured p
    McEstimate rademacher_mc;
    double lemma1_rhs = 0.0;
    double prop1_rhs = 0.0;
    Vector per_class_rhs;
    Vector gamma;
    double delta = 0.05;
    double p = 2.0;
    double c_p = 1.0;
    double lambda = 0.0;  // head norm bound in the conjugate norm
    std::size_t n = 0;
    std::size_t k = 0;

    std::string to_csv() const {
        std::ostringstream os;
        os << std::setprecision(12);
        os << "quantity,value\n"
           << "N," << n << "\nK," << k << "\np," << p
           << "\ndelta," << delta << "\nc_p," << c_p << "\nLambda," << lambda
           << "\nzero_one_risk," << zero_one_risk << "\nempirical_margin_risk," << empirical_margin_risk
           << "\nsurrogate_risk," << surrogate_risk << "\nrademacher_bound," << rademacher_bound
           << "\nrademacher_mc," << rademacher_mc.mean << "\nrademacher_mc_stderr," << rademacher_mc.std_error
           << "\nlemma1_rhs," << lemma1_rhs << "\nprop1_rhs," << prop1_rhs << '\n';
        for (std::size_t c = 0; c < per_class_rhs.size(); ++c) os << "per_class_rhs_" << c << ',' << per_class_rhs[c] << '\n';
        for (std::size_t c = 0; c < gamma.size(); ++c) os << "gamma_" << c << ',' << gamma[c] << '\n';
        return os.str();
    }
};

/// Evaluates every bound term for a model on a dataset. Margins follow the
/// cube-root rule on the dataset's own feature statistics at norm p.
inline BoundReport bound_report(const ModelParams& model, const Dataset& data, const BoundOptions& opt) {
    if (data.size() == 0) throw InputError("bounds: empty dataset");
    const ForwardCache c = forward(model, data.features);
    const std::size_t k = data.num_classes;
    const BatchStats l2 = batch_stats(c.features, data.labels, k, 2.0);
    const BatchStats lp = opt.p == 2.0 ? l2 : batch_stats(c.features, data.labels, k, opt.p);
    Vector mu(k, 0.0), s(k, 0.0), r(k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (const auto& cs : l2.present) {
        mu[cs.class_id] = cs.mu_sq;
        s[cs.class_id] = cs.s_sq;
        counts[cs.class_id] = cs.count;
    }
    for (const auto& cs : lp.present) r[cs.class_id] = cs.r_sq_p;
    for (std::size_t i = 0; i < k; ++i)
        if (counts[i] == 0) throw InputError("bounds: class " + std::to_string(i) + " has no samples");

    BoundReport rep;
    rep.n = data.size();
    rep.k = k;
    rep.delta = opt.delta;
    rep.p = opt.p;
    rep.c_p = c_p_constant(opt.p, static_cast<double>(model.arch.feature_dim));
    Vector alpha(k);
    for (std::size_t i = 0; i < k; ++i) alpha[i] = mu[i] + s[i];
    const MarginVector gamma = opt.p == 2.0 ? compute_gamma(alpha, opt.c_bar) : compute_gamma_lp(r, opt.c_bar, opt.p);
    rep.gamma = gamma.gamma;
    rep.lambda = head_norm_bound(model, conjugate_exponent(opt.p));
    const double lambda2 = head_norm_bound(model, 2.0);
    const double n = static_cast<double>(rep.n);
    const double kk = static_cast<double>(k);

    rep.zero_one_risk = zero_one_risk(c.logits, data.labels);
    rep.empirical_margin_risk = empirical_margin_risk(c.logits, data.labels, gamma);
    rep.surrogate_risk = surrogate_risk(c.logits, data.labels, gamma);
    rep.rademacher_bound = rademacher_bound_lp(r, gamma.gamma, rep.lambda, n, kk, opt.p, static_cast<double>(model.arch.feature_dim));

    std::vector<Matrix> classes;
    for (std::size_t i = 0; i < k; ++i) {
        Matrix m(counts[i], model.arch.feature_dim);
        std::size_t row = 0;
        for (std::size_t j = 0; j < data.size(); ++j) {
            if (data.labels[j] != i) continue;
            auto src = c.features.row(j);
            std::copy(src.begin(), src.end(), m.row(row++).begin());
        }
        classes.push_back(std::move(m));
    }
    rep.rademacher_mc = rademacher_mc(classes, gamma.gamma, rep.lambda, opt.draws, opt.seed, opt.p, opt.threads);
    rep.lemma1_rhs = lemma1_rhs(rep.empirical_margin_risk, rep.rademacher_bound, kk, n, opt.delta);
    rep.prop1_rhs = prop1_rhs(rep.surrogate_risk, mu, s, gamma.gamma, lambda2, n, kk, opt.delta);

    rep.per_class_rhs.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        Vector losses;
        for (std::size_t j = 0; j < data.size(); ++j)
            if (data.labels[j] == i) losses.push_back(logit_margin_ce(c.logits.row(j), i, gamma[i]).value);
        const double class_surrogate = pairwise_sum(losses) / static_cast<double>(losses.size());
        rep.per_class_rhs[i] = per_class_rhs(class_surrogate, mu[i], s[i], gamma[i], lambda2,
                                             static_cast<double>(counts[i]), opt.delta);
    }
    return rep;
}

}  // namespace mr2
