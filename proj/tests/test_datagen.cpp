#include <gtest/gtest.h>

#include <filesystem>

#include "mr2/datagen.hpp"
#include "mr2/errors.hpp"
#include "mr2/eval_metrics.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/model.hpp"

using namespace mr2;

namespace {

SynthSpec small_spec() {
    SynthSpec s;
    s.num_classes = 3;
    s.input_dim = 5;
    s.samples_per_class = 7;
    s.seed = 3;
    return s;
}

// Per-class s_sq and its standard error from per-sample squared deviations.
void spread_with_stderr(const Dataset& d, std::size_t k, double& s_sq, double& se) {
    const Matrix x = d.class_features(k);
    const std::size_t n = x.rows(), dim = x.cols();
    Vector mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += x(i, j) / static_cast<double>(n);
    Vector dev(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) dev[i] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
    s_sq = 0.0;
    for (double v : dev) s_sq += v / static_cast<double>(n);
    double var = 0.0;
    for (double v : dev) var += (v - s_sq) * (v - s_sq) / static_cast<double>(n - 1);
    se = std::sqrt(var / static_cast<double>(n));
}

}  // namespace

TEST(Generate, SharedSpreadMatchesChiSquareExpectation) {
    SynthSpec s;
    s.num_classes = 4;
    s.input_dim = 20;
    s.samples_per_class = 1000;
    s.sigma_min = s.sigma_max = 1.5;
    const auto [train, test] = generate(s);
    const auto st = batch_stats(train.features, train.labels, 4);
    for (const auto& c : st.present) EXPECT_NEAR(c.s_sq, 20.0 * 1.5 * 1.5, 0.1 * 20.0 * 1.5 * 1.5) << c.class_id;
}

TEST(Generate, DeterministicAndBalanced) {
    const auto a = generate(small_spec());
    const auto b = generate(small_spec());
    EXPECT_EQ(encode_dataset(a.first), encode_dataset(b.first));
    EXPECT_EQ(encode_dataset(a.second), encode_dataset(b.second));
    EXPECT_FALSE(a.first == a.second);
    for (auto c : a.first.class_counts()) EXPECT_EQ(c, 7u);
    EXPECT_EQ(a.second.split, Split::Test);
    SynthSpec other = small_spec();
    other.seed = 4;
    EXPECT_NE(encode_dataset(generate(other).first), encode_dataset(a.first));
}

TEST(Generate, SpreadStrictlyIncreasesAlongRamp) {
    SynthSpec s;
    s.samples_per_class = 500;
    const auto [train, test] = generate(s);
    double prev = 0.0, prev_se = 0.0;
    for (std::size_t k = 0; k < s.num_classes; ++k) {
        double v = 0.0, se = 0.0;
        spread_with_stderr(train, k, v, se);
        if (k > 0) {
            EXPECT_GT(v - prev, 3.0 * std::hypot(se, prev_se)) << k;
        }
        prev = v;
        prev_se = se;
    }
}

TEST(Generate, TightClustersAreLinearlySeparable) {
    SynthSpec s;
    s.num_classes = 2;
    s.input_dim = 2;
    s.samples_per_class = 200;
    s.sigma_min = s.sigma_max = 1e-3;
    const auto [train, test] = generate(s);
    // Nearest-mean rule as a linear model: the means are orthogonal with equal norm.
    const Matrix means = class_means(s);
    Architecture a;
    a.encoder = EncoderKind::Identity;
    a.input_dim = a.feature_dim = 2;
    a.num_classes = 2;
    ModelParams m = init_params(a, 1);
    m.head() = means;
    for (double acc : per_class_accuracy(m, test)) EXPECT_EQ(acc, 1.0);
}

TEST(Generate, RejectsBadSpec) {
    SynthSpec s = small_spec();
    s.input_dim = 2;
    EXPECT_THROW(generate(s), InputError);
    s = small_spec();
    s.sigma_min = 4.0;
    EXPECT_THROW(generate(s), InputError);
}

TEST(DatasetFile, RoundTrip) {
    const auto [train, test] = generate(small_spec());
    const auto dir = std::filesystem::temp_directory_path() / "mr2_datagen_test";
    std::filesystem::create_directories(dir);
    write_dataset(dir / "train.mr2d", train);
    EXPECT_EQ(read_dataset(dir / "train.mr2d"), train);
    std::filesystem::remove_all(dir);
}

TEST(DatasetFile, RejectsCorruptInput) {
    const auto [train, test] = generate(small_spec());
    const auto bytes = encode_dataset(train);

    auto cut = bytes;
    cut.resize(cut.size() - 3);
    EXPECT_THROW(decode_dataset(cut), FormatError);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_dataset(bad_magic), FormatError);

    // Labels start after magic, version, N, d_in and K.
    auto bad_label = bytes;
    const std::size_t label_offset = 4 + 4 + 8 + 4 + 4;
    bad_label[label_offset] = 9;
    EXPECT_THROW(decode_dataset(bad_label), FormatError);

    Dataset empty;
    empty.num_classes = 2;
    EXPECT_THROW(encode_dataset(empty), InputError);
}
