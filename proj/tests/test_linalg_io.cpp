#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "mr2/binary_io.hpp"
#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"
#include "mr2/rng.hpp"

using namespace mr2;

TEST(Linalg, LpNormMatchesDirectSum) {
    const Vector v{3.0, -4.0, 1.0};
    EXPECT_DOUBLE_EQ(lp_norm(v, 1.0), 8.0);
    EXPECT_NEAR(lp_norm(v, 2.0), std::sqrt(26.0), 1e-15);
    EXPECT_NEAR(lp_norm(v, 3.0), std::cbrt(27.0 + 64.0 + 1.0), 1e-13);
    EXPECT_DOUBLE_EQ(lp_norm(v, kInfNorm), 4.0);
    EXPECT_DOUBLE_EQ(lp_norm(Vector{0.0, 0.0}, 3.0), 0.0);
}

TEST(Linalg, LpNormSurvivesHugeEntries) {
    const Vector v{1e200, 1e200};
    EXPECT_NEAR(lp_norm(v, 4.0) / 1e200, std::pow(2.0, 0.25), 1e-12);
}

TEST(Linalg, LogSumExpIsShiftStable) {
    const Vector a{1000.0, 1000.0};
    EXPECT_NEAR(log_sum_exp(a), 1000.0 + std::log(2.0), 1e-12);
    const Vector b{-1000.0, -1000.0, -1000.0};
    EXPECT_NEAR(log_sum_exp(b), -1000.0 + std::log(3.0), 1e-12);
}

TEST(Linalg, SoftmaxSumsToOne) {
    const Vector z{0.3, -2.0, 5.0, 1.0};
    Vector p(z.size());
    softmax(z, p);
    double s = 0.0;
    for (double v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_EQ(argmax(p), 2u);
}

TEST(Linalg, PairwiseSumAgreesWithLongDouble) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector v(10007);
    long double ref = 0.0L;
    for (double& x : v) ref += (x = u(rng));
    EXPECT_NEAR(pairwise_sum(v), static_cast<double>(ref), 1e-12);
}

TEST(Linalg, ArgmaxPrefersLowestIndexOnTies) { EXPECT_EQ(argmax(Vector{1.0, 3.0, 3.0}), 1u); }

TEST(ByteIo, RoundTripAndTruncation) {
    io::ByteWriter w;
    w.put_magic("ABCD");
    w.put<std::uint32_t>(7);
    const std::vector<double> xs{1.5, -2.25};
    w.put_array<double>(xs);
    const auto bytes = w.bytes();

    io::ByteReader r(bytes);
    r.expect_magic("ABCD");
    EXPECT_EQ(r.get<std::uint32_t>(), 7u);
    EXPECT_EQ(r.get_array<double>(2), xs);
    EXPECT_TRUE(r.at_end());

    std::vector<char> cut(bytes.begin(), bytes.end() - 1);
    io::ByteReader r2(cut);
    r2.expect_magic("ABCD");
    r2.get<std::uint32_t>();
    EXPECT_THROW(r2.get_array<double>(2), FormatError);

    io::ByteReader r3(bytes);
    EXPECT_THROW(r3.expect_magic("ABCE"), FormatError);
}

TEST(ByteIo, AtomicWriteLeavesNoTemporary) {
    const auto dir = std::filesystem::temp_directory_path() / "mr2_io_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "x.bin";
    io::write_text_atomic(path, "hello");
    EXPECT_EQ(io::read_file(path), (std::vector<char>{'h', 'e', 'l', 'l', 'o'}));
    auto tmp = path;
    tmp += ".tmp";
    EXPECT_FALSE(std::filesystem::exists(tmp));
    EXPECT_THROW(io::write_text_atomic(dir / "missing" / "y.bin", "x"), FormatError);
    std::filesystem::remove_all(dir);
}

TEST(Rng, DerivedSeedsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(5, {1, 2}), derive_seed(5, {1, 2}));
    EXPECT_NE(derive_seed(5, {1, 2}), derive_seed(5, {2, 1}));
    EXPECT_NE(derive_seed(5, {1}), derive_seed(6, {1}));
}
