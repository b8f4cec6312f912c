#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "mr2/bound_report.hpp"
#include "mr2/bounds.hpp"
#include "mr2/errors.hpp"
#include "oracles.hpp"

using namespace mr2;

namespace {

// Balanced classes: every class holds n_per rows of d features.
struct Instance {
    std::vector<Matrix> classes;
    Vector gamma;
    double lambda = 1.0;
    Vector mu_sq, s_sq;
    std::size_t n = 0;
};

Instance random_instance(std::mt19937_64& rng, std::size_t k, std::size_t n_per, std::size_t d) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    Instance in;
    in.lambda = u(rng);
    for (std::size_t c = 0; c < k; ++c) {
        Matrix m(n_per, d);
        Vector offset(d);
        for (double& v : offset) v = 2.0 * nd(rng);
        for (std::size_t i = 0; i < n_per; ++i)
            for (std::size_t j = 0; j < d; ++j) m(i, j) = offset[j] + nd(rng);
        std::vector<Label> y(n_per, 0);
        const auto st = batch_stats(m, y, 1);
        in.mu_sq.push_back(st.present[0].mu_sq);
        in.s_sq.push_back(st.present[0].s_sq);
        in.gamma.push_back(u(rng));
        in.classes.push_back(std::move(m));
        in.n += n_per;
    }
    return in;
}

}  // namespace

TEST(CpConstant, Values) {
    EXPECT_EQ(c_p_constant(2.0, 8), 1.0);
    EXPECT_EQ(c_p_constant(1.0, 8), 1.0);
    EXPECT_NEAR(c_p_constant(4.0, 8), 3.0, 1e-9);
    EXPECT_NEAR(c_p_constant(2.0 + 1e-12, 8), 1.0, 1e-9);
    EXPECT_NEAR(c_p_constant(kInfNorm, std::exp(2.0)), 2.0, 1e-12);
    EXPECT_THROW(c_p_constant(0.5, 8), InputError);
}

TEST(CpConstant, MatchesGammaIdentityAndIsNonDecreasing) {
    // Gamma(5/2) = (3/4) sqrt(pi).
    EXPECT_NEAR(4.0 * 0.75 * std::sqrt(std::numbers::pi) / std::sqrt(std::numbers::pi), c_p_constant(4.0, 1), 1e-12);
    double prev = 1.0;
    for (double p = 2.0; p < 40.0; p += 0.125) {
        const double c = c_p_constant(p, 4);
        EXPECT_GE(c, prev - 1e-12);
        prev = c;
    }
}

TEST(RademacherBoundL2, Examples) {
    const Vector mu{1.0}, s{0.0}, g{1.0};
    EXPECT_DOUBLE_EQ(rademacher_bound_l2(mu, s, g, 1.0, 1.0, 1.0), 1.0);

    const Vector mu3{1.0, 2.0, 0.5}, s3{0.3, 0.0, 1.2}, g3{0.7, 1.1, 2.0};
    const double base = rademacher_bound_l2(mu3, s3, g3, 1.5, 30.0, 3.0);
    EXPECT_NEAR(rademacher_bound_l2(mu3, s3, g3, 3.0, 30.0, 3.0), 2.0 * base, 1e-13);
    Vector g_scaled = g3;
    for (double& v : g_scaled) v *= 4.0;
    EXPECT_NEAR(rademacher_bound_l2(mu3, s3, g_scaled, 1.5, 30.0, 3.0), base / 4.0, 1e-13);

    EXPECT_THROW(rademacher_bound_l2(mu, s, Vector{0.0}, 1.0, 1.0, 1.0), InputError);
    EXPECT_THROW(rademacher_bound_l2(mu, s, g, 1.0, 0.0, 1.0), InputError);
}

TEST(RademacherBoundLp, ReducesToL2AtTwo) {
    const Vector mu{1.0, 2.0}, s{0.5, 0.25}, g{0.8, 1.3};
    const Vector r{1.5, 2.25};
    EXPECT_NEAR(rademacher_bound_lp(r, g, 1.7, 50.0, 2.0, 2.0, 4), rademacher_bound_l2(mu, s, g, 1.7, 50.0, 2.0), 1e-14);
    EXPECT_EQ(rademacher_bound_lp(Vector{0.0, 0.0}, g, 1.7, 50.0, 2.0, kInfNorm, 4), 0.0);
}

TEST(RademacherMc, SinglePointIsExactlyOne) {
    Matrix x(1, 1);
    x(0, 0) = 1.0;
    const std::vector<Matrix> cls{x};
    const Vector g{1.0};
    const auto mc = rademacher_mc(cls, g, 1.0, 64, 3);
    EXPECT_EQ(mc.mean, 1.0);
    EXPECT_EQ(mc.std_error, 0.0);
    EXPECT_EQ(rademacher_exact(cls, g, 1.0), 1.0);
}

TEST(RademacherMc, ZeroFeaturesGiveZero) {
    const std::vector<Matrix> cls{Matrix(3, 2), Matrix(3, 2)};
    const auto mc = rademacher_mc(cls, Vector{1.0, 2.0}, 1.0, 16, 1);
    EXPECT_EQ(mc.mean, 0.0);
    EXPECT_THROW(rademacher_mc(cls, Vector{1.0, 2.0}, 1.0, 1, 1), InputError);
}

TEST(RademacherMc, IndependentOfThreadCount) {
    std::mt19937_64 rng(4);
    const Instance in = random_instance(rng, 3, 5, 4);
    const auto a = rademacher_mc(in.classes, in.gamma, in.lambda, 500, 9, 2.0, 1);
    const auto b = rademacher_mc(in.classes, in.gamma, in.lambda, 500, 9, 2.0, 4);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(RademacherMc, AgreesWithExactEnumeration) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 6; ++t) {
        const std::size_t k = 1 + t % 3;
        const std::size_t n_per = std::max<std::size_t>(1, 12 / (k * k));
        const Instance in = random_instance(rng, k, n_per, 3);
        const double exact = rademacher_exact(in.classes, in.gamma, in.lambda);
        const auto mc = rademacher_mc(in.classes, in.gamma, in.lambda, 8192, 17);
        EXPECT_NEAR(mc.mean, exact, 4.0 * mc.std_error + 1e-12);
    }
}

TEST(RademacherMc, Lemma2HoldsOnBalancedInstances) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> kd(1, 4), nd(1, 12), dd(1, 8);
    for (int t = 0; t < 30; ++t) {
        const Instance in = random_instance(rng, kd(rng), nd(rng), dd(rng));
        const double k = static_cast<double>(in.classes.size());
        const double bound = rademacher_bound_l2(in.mu_sq, in.s_sq, in.gamma, in.lambda, static_cast<double>(in.n), k);
        const auto mc = rademacher_mc(in.classes, in.gamma, in.lambda, 2048, static_cast<std::uint64_t>(t));
        EXPECT_LE(mc.mean, bound * (1 + 1e-9) + 3.0 * mc.std_error) << t;
    }
}

TEST(RademacherExact, RespectsLemma2) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 10; ++t) {
        const std::size_t k = 1 + t % 3;
        const std::size_t n_per = std::max<std::size_t>(1, 12 / (k * k));
        const Instance in = random_instance(rng, k, n_per, 1 + t % 4);
        const double bound = rademacher_bound_l2(in.mu_sq, in.s_sq, in.gamma, in.lambda, static_cast<double>(in.n),
                                                 static_cast<double>(k));
        EXPECT_LE(rademacher_exact(in.classes, in.gamma, in.lambda), bound * (1 + 1e-9)) << t;
    }
}

TEST(Risks, ExamplesAndOrdering) {
    Matrix z(2, 2);
    z(0, 0) = 3.0;
    z(1, 1) = 3.0;
    const std::vector<Label> y{0, 1};
    const auto g = uniform_margins(2, 1.0);
    EXPECT_EQ(empirical_margin_risk(z, y, g), 0.0);
    const std::vector<Label> wrong{1, 0};
    EXPECT_EQ(empirical_margin_risk(z, wrong, g), 1.0);
    EXPECT_EQ(zero_one_risk(z, wrong), 1.0);
    EXPECT_THROW(empirical_margin_risk(Matrix(0, 2), std::vector<Label>{}, g), InputError);

    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (int t = 0; t < 100; ++t) {
        Matrix logits(20, 4);
        for (double& v : logits.flat()) v = n(rng);
        std::vector<Label> labels(20);
        for (auto& l : labels) l = static_cast<Label>(rng() % 4);
        MarginVector gam = uniform_margins(4, 1.0);
        for (double& v : gam.gamma) v = u(rng);
        const double ramp_risk = empirical_margin_risk(logits, labels, gam);
        double direct = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            const auto row = logits.row(i);
            const double m = oracle::margin({row.begin(), row.end()}, labels[i]);
            direct += oracle::ramp(m, gam[labels[i]]);
        }
        EXPECT_NEAR(ramp_risk, direct / 20.0, 1e-12);
        EXPECT_LE(zero_one_risk(logits, labels), ramp_risk + 1e-15);
        EXPECT_LE(ramp_risk, surrogate_risk(logits, labels, gam) / std::numbers::ln2 + 1e-12);
    }
}

TEST(Prop1, TermIsolationAndScaling) {
    const Vector zero{0.0, 0.0}, g{1.0, 2.0};
    const double delta = 0.05;
    const double low = 3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * 100.0));
    EXPECT_NEAR(prop1_rhs(0.0, zero, zero, g, 1.0, 100.0, 2.0, delta), low, 1e-15);
    EXPECT_NEAR(confidence_term(400.0, delta), confidence_term(100.0, delta) / 2.0, 1e-15);
    EXPECT_THROW(prop1_rhs(0.0, zero, zero, g, 1.0, 100.0, 2.0, 1.0), InputError);

    const Vector mu{1.0, 0.5}, s{0.25, 2.0};
    const double sur = 0.7, lam = 1.3, n = 500.0, k = 2.0;
    const double sum = (1.25 / 1.0) + (2.5 / 4.0);
    const double expect = sur / std::log(2.0) + 4.0 * std::sqrt(2.0) * lam * k / std::sqrt(n) * std::sqrt(sum) +
                          3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * n));
    EXPECT_NEAR(prop1_rhs(sur, mu, s, g, lam, n, k, delta), expect, 1e-13);
    EXPECT_NEAR(lemma1_rhs(0.1, 0.2, 4.0, n, delta),
                0.1 + 4.0 * std::sqrt(8.0) * 0.2 + 3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * n)), 1e-13);
}

TEST(PerClass, Examples) {
    EXPECT_NEAR(4.0 / 1.0 * per_class_complexity(1.0, 0.0, 1.0, 1.0), 4.0, 1e-15);
    const double a = per_class_rhs(0.0, 1.0, 0.5, 1.0, 1.0, 10.0, 0.05) - confidence_term(10.0, 0.05);
    const double b = per_class_rhs(0.0, 1.0, 0.5, 2.0, 1.0, 10.0, 0.05) - confidence_term(10.0, 0.05);
    EXPECT_NEAR(b, a / 2.0, 1e-14);
    EXPECT_EQ(per_class_complexity(0.0, 0.0, 1.0, 5.0), 0.0);
    EXPECT_THROW(per_class_complexity(1.0, 0.0, 1.0, 0.0), InputError);
}

TEST(BoundReport, SmokeOnSmallModel) {
    SynthSpec spec;
    spec.num_classes = 3;
    spec.input_dim = 4;
    spec.samples_per_class = 20;
    const auto [train, test] = generate(spec);
    Architecture a;
    a.encoder = EncoderKind::Linear;
    a.input_dim = 4;
    a.feature_dim = 3;
    a.num_classes = 3;
    const ModelParams m = init_params(a, 1);
    for (double p : {2.0, 3.0, kInfNorm}) {
        BoundOptions opt;
        opt.p = p;
        opt.draws = 256;
        const BoundReport r = bound_report(m, test, opt);
        EXPECT_EQ(r.n, 60u);
        for (double v : {r.empirical_margin_risk, r.surrogate_risk, r.rademacher_bound, r.rademacher_mc.mean,
                         r.lemma1_rhs, r.prop1_rhs, r.c_p})
            EXPECT_TRUE(std::isfinite(v) && v >= 0.0);
        EXPECT_LE(r.zero_one_risk, r.empirical_margin_risk + 1e-15);
        EXPECT_GE(r.lemma1_rhs, r.empirical_margin_risk);
        EXPECT_EQ(r.per_class_rhs.size(), 3u);
    }
}
