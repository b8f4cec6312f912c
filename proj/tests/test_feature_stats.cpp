#include <gtest/gtest.h>

#include <random>

#include "mr2/errors.hpp"
#include "mr2/feature_stats.hpp"
#include "oracles.hpp"

using namespace mr2;

namespace {

Matrix rows(const std::vector<Vector>& r) {
    Matrix m(r.size(), r.front().size());
    for (std::size_t i = 0; i < r.size(); ++i) std::copy(r[i].begin(), r[i].end(), m.row(i).begin());
    return m;
}

const ClassBatchStats& find(const BatchStats& b, std::size_t k) {
    for (const auto& c : b.present)
        if (c.class_id == k) return c;
    throw std::runtime_error("class not present");
}

}  // namespace

TEST(BatchStats, SingletonHasZeroDeviation) {
    const std::vector<Label> y{0};
    const auto b = batch_stats(rows({{3.0, 4.0}}), y, 1);
    EXPECT_DOUBLE_EQ(b.present[0].mu_sq, 25.0);
    EXPECT_DOUBLE_EQ(b.present[0].s_sq, 0.0);
}

TEST(BatchStats, SymmetricPair) {
    const std::vector<Label> y{0, 0};
    const auto b = batch_stats(rows({{1.0, 0.0}, {-1.0, 0.0}}), y, 1);
    EXPECT_DOUBLE_EQ(b.present[0].mu_sq, 0.0);
    EXPECT_DOUBLE_EQ(b.present[0].s_sq, 1.0);
}

TEST(BatchStats, NormDecompositionMatchesDirectSum) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Vector> pts(8, Vector(4));
        for (auto& p : pts)
            for (double& v : p) v = n(rng);
        const std::vector<Label> y{0, 1, 0, 2, 1, 0, 2, 2};
        const auto b = batch_stats(rows(pts), y, 3);
        for (std::size_t k = 0; k < 3; ++k) {
            double direct = 0.0;
            int cnt = 0;
            for (std::size_t i = 0; i < 8; ++i)
                if (y[i] == k) {
                    for (double v : pts[i]) direct += v * v;
                    ++cnt;
                }
            direct /= cnt;
            const auto& c = find(b, k);
            EXPECT_NEAR(c.mu_sq + c.s_sq, direct, 1e-12);
            EXPECT_NEAR(c.r_sq_p, direct, 1e-12);
        }
    }
}

TEST(BatchStats, PairwiseDistanceIdentity) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(1.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 2 + trial % 17, d = 1 + trial % 6;
        std::vector<Vector> pts(m, Vector(d));
        for (auto& p : pts)
            for (double& v : p) v = n(rng);
        double pair = 0.0;
        for (const auto& a : pts)
            for (const auto& b : pts) pair += oracle::sq_dist(a, b);
        pair /= static_cast<double>(m * m);
        const std::vector<Label> y(m, 0);
        const auto b = batch_stats(rows(pts), y, 1);
        EXPECT_NEAR(pair, 2.0 * b.present[0].s_sq, 1e-9 * std::max(1.0, pair));
    }
}

TEST(BatchStats, LpNormAverages) {
    const std::vector<Label> y{0, 0};
    const auto b1 = batch_stats(rows({{1.0, -1.0}, {2.0, 0.0}}), y, 1, 1.0);
    EXPECT_DOUBLE_EQ(b1.present[0].r_sq_p, (4.0 + 4.0) / 2.0);
    const auto binf = batch_stats(rows({{1.0, -3.0}, {2.0, 0.0}}), y, 1, kInfNorm);
    EXPECT_DOUBLE_EQ(binf.present[0].r_sq_p, (9.0 + 4.0) / 2.0);
}

TEST(BatchStats, RejectsBadInput) {
    const std::vector<Label> empty;
    EXPECT_THROW(batch_stats(Matrix(0, 2), empty, 2), InputError);
    const std::vector<Label> bad{3};
    EXPECT_THROW(batch_stats(rows({{1.0}}), bad, 2), InputError);
}

TEST(ClassStats, FirstObservationSeedsThenBlends) {
    ClassStats s(1, 1, 2.0, 0.9);
    const std::vector<Label> y{0};
    s.update(batch_stats(rows({{1.0}}), y, 1));
    EXPECT_DOUBLE_EQ(s.mu_sq()[0], 1.0);
    s.update(batch_stats(rows({{std::sqrt(2.0)}}), y, 1));
    EXPECT_NEAR(s.mu_sq()[0], 1.1, 1e-15);

    ClassStats t(1, 1, 2.0, 0.9);
    t.update(batch_stats(rows({{std::sqrt(5.0)}}), y, 1));
    EXPECT_NEAR(t.mu_sq()[0], 5.0, 1e-14);
}

TEST(ClassStats, AbsentClassUnchanged) {
    ClassStats s(2, 1);
    const std::vector<Label> both{0, 1}, only0{0};
    s.update(batch_stats(rows({{1.0}, {2.0}}), both, 2));
    const double before = s.mu_sq()[1];
    s.update(batch_stats(rows({{7.0}}), only0, 2));
    EXPECT_EQ(s.mu_sq()[1], before);
}

TEST(ClassStats, EmaStaysWithinObservedRange) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    ClassStats s(1, 1, 2.0, 0.9);
    const std::vector<Label> y{0};
    double lo = INFINITY, hi = -INFINITY;
    for (int t = 0; t < 200; ++t) {
        const double x = u(rng);
        lo = std::min(lo, x * x);
        hi = std::max(hi, x * x);
        s.update(batch_stats(rows({{x}}), y, 1));
        EXPECT_GE(s.mu_sq()[0], lo - 1e-12);
        EXPECT_LE(s.mu_sq()[0], hi + 1e-12);
    }
}

TEST(ClassStats, MeanDeviationMasksUninitialized) {
    ClassStats s(3, 1);
    EXPECT_THROW((void)s.mean_deviation(), StateError);
    EXPECT_FALSE(s.any_initialized());
    // s_sq of {a-1, a+1} is 1; of {a-2, a+2} is 4... use sqrt to hit 2 and 4.
    const double r2 = std::sqrt(2.0), r4 = 2.0;
    const std::vector<Label> y{0, 0, 1, 1};
    s.update(batch_stats(rows({{-r2}, {r2}, {-r4}, {r4}}), y, 3));
    EXPECT_NEAR(s.mean_deviation(), 3.0, 1e-14);
}

TEST(ClassStats, MeanDeviationIsPlainMeanWhenAllInitialized) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix x(40, 3);
    for (double& v : x.flat()) v = n(rng);
    std::vector<Label> y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<Label>(i % 4);
    ClassStats s(4, 3);
    s.update(batch_stats(x, y, 4));
    double m = 0.0;
    for (double v : s.s_sq()) m += v;
    EXPECT_NEAR(s.mean_deviation(), m / 4.0, 1e-14);
}

TEST(ClassStats, SerializationRoundTrip) {
    ClassStats s(3, 2, 3.0, 0.8);
    const std::vector<Label> y{0, 2, 2};
    s.update(batch_stats(rows({{1.0, 2.0}, {0.5, -1.0}, {2.0, 2.0}}), y, 3, 3.0));
    io::ByteWriter w;
    s.serialize(w);
    io::ByteReader r(w.bytes());
    const ClassStats back = ClassStats::deserialize(r);
    EXPECT_TRUE(r.at_end());
    EXPECT_EQ(back, s);

    auto bytes = w.bytes();
    bytes.resize(bytes.size() - 2);
    io::ByteReader cut(bytes);
    EXPECT_THROW(ClassStats::deserialize(cut), FormatError);
}

TEST(ClassStats, RejectsMismatchedBatch) {
    ClassStats s(2, 3);
    const std::vector<Label> y{0};
    EXPECT_THROW(s.update(batch_stats(rows({{1.0, 2.0}}), y, 2)), InputError);
    EXPECT_THROW(ClassStats(2, 3, 0.5), InputError);
    EXPECT_THROW(ClassStats(2, 3, 2.0, 1.0), InputError);
}
