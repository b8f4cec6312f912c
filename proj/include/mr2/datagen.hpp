#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mr2/binary_io.hpp"
#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"
#include "mr2/rng.hpp"

namespace mr2 {

enum class Split { Train, Test };

struct Dataset {
    Matrix features;  // N x d_in
    std::vector<Label> labels;
    std::size_t num_classes = 0;
    Split split = Split::Train;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t input_dim() const noexcept { return features.cols(); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(num_classes, 0);
        for (Label y : labels) ++c.at(y);
        return c;
    }

    // Features of one class, in dataset order.
    Matrix class_features(std::size_t k) const {
        std::size_t n = 0;
        for (Label y : labels) n += y == k;
        Matrix out(n, input_dim());
        std::size_t r = 0;
        for (std::size_t i = 0; i < size(); ++i) {
            if (labels[i] != k) continue;
            auto src = features.row(i);
            std::copy(src.begin(), src.end(), out.row(r++).begin());
        }
        return out;
    }

    bool operator==(const Dataset& o) const {
        return features == o.features && labels == o.labels && num_classes == o.num_classes;
    }
};

// Gaussian classes with a linear ramp of per-class spread.
struct SynthSpec {
    std::size_t num_classes = 10;
    std::size_t input_dim = 20;
    std::size_t samples_per_class = 500;
    double sigma_min = 0.5;
    double sigma_max = 3.0;
    double mean_scale = 5.0;
    std::uint64_t seed = 0;
};

inline void validate(const SynthSpec& s) {
    if (s.num_classes == 0 || s.input_dim == 0 || s.samples_per_class == 0)
        throw InputError("synth: K, d_in and samples_per_class must be positive");
    if (s.num_classes > 65535) throw InputError("synth: at most 65535 classes");
    if (!(s.sigma_min > 0.0) || !(s.sigma_max > 0.0) || !(s.mean_scale > 0.0))
        throw InputError("synth: sigma_min, sigma_max and mean_scale must be positive");
    if (s.sigma_min > s.sigma_max) throw InputError("synth: sigma_min must not exceed sigma_max");
    if (s.input_dim < s.num_classes) throw InputError("synth: orthonormal class means need d_in >= K");
}

inline double class_sigma(const SynthSpec& s, std::size_t k) {
    if (s.num_classes == 1) return s.sigma_min;
    const double t = static_cast<double>(k) / static_cast<double>(s.num_classes - 1);
    return s.sigma_min + t * (s.sigma_max - s.sigma_min);
}

// Gram-Schmidt on Gaussian draws, each row scaled to mean_scale.
inline Matrix class_means(const SynthSpec& s) {
    validate(s);
    std::mt19937_64 rng(derive_seed(s.seed, {0x6d65616e}));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix q(s.num_classes, s.input_dim);
    for (std::size_t k = 0; k < s.num_classes; ++k) {
        auto row = q.row(k);
        for (;;) {
            for (double& v : row) v = normal(rng);
            for (std::size_t j = 0; j < k; ++j) {
                const double proj = dot(row, q.row(j));
                auto prev = q.row(j);
                for (std::size_t c = 0; c < s.input_dim; ++c) row[c] -= proj * prev[c];
            }
            const double n = std::sqrt(squared_norm(row));
            if (n < 1e-8) continue;
            for (double& v : row) v /= n;
            break;
        }
    }
    for (double& v : q.flat()) v *= s.mean_scale;
    return q;
}

namespace detail {

inline Dataset sample_split(const SynthSpec& s, const Matrix& means, Split split) {
    const std::size_t n = s.num_classes * s.samples_per_class;
    Dataset d{Matrix(n, s.input_dim), std::vector<Label>(n), s.num_classes, split};
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t r = 0;
    for (std::size_t k = 0; k < s.num_classes; ++k) {
        std::mt19937_64 rng(derive_seed(s.seed, {static_cast<std::uint64_t>(split) + 1, k}));
        const double sigma = class_sigma(s, k);
        for (std::size_t i = 0; i < s.samples_per_class; ++i, ++r) {
            auto row = d.features.row(r);
            for (std::size_t c = 0; c < s.input_dim; ++c)
                // Stored as fp32 on disk; round now so write/read is lossless.
                row[c] = static_cast<double>(static_cast<float>(means(k, c) + sigma * normal(rng)));
            d.labels[r] = static_cast<Label>(k);
        }
    }
    return d;
}

}  // namespace detail

/// Class-balanced train/test pair drawn i.i.d. from the same class
/// conditionals N(mean_k, sigma_k^2 I), sigma_k linear in k.
inline std::pair<Dataset, Dataset> generate(const SynthSpec& spec) {
    validate(spec);
    const Matrix means = class_means(spec);
    return {detail::sample_split(spec, means, Split::Train), detail::sample_split(spec, means, Split::Test)};
}

inline constexpr std::uint32_t kDatasetVersion = 1;

// "MR2D", u32 version, u64 N, u32 d_in, u32 K, u16[N] labels, f32[N*d_in]
// row-major features. Little-endian.
inline std::vector<char> encode_dataset(const Dataset& d) {
    if (d.size() == 0) throw InputError("refusing to write an empty dataset");
    if (d.features.rows() != d.size()) throw InputError("dataset feature/label count mismatch");
    if (d.num_classes == 0 || d.num_classes > 65535) throw InputError("dataset class count out of range");
    for (Label y : d.labels)
        if (y >= d.num_classes) throw InputError("dataset label out of range");
    io::ByteWriter w;
    w.put_magic("MR2D");
    w.put<std::uint32_t>(kDatasetVersion);
    w.put<std::uint64_t>(d.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.input_dim()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.num_classes));
    w.put_array<Label>(d.labels);
    std::vector<float> f(d.features.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(d.features.flat()[i]);
    w.put_array<float>(f);
    return w.bytes();
}

inline Dataset decode_dataset(std::span<const char> bytes, Split split = Split::Train) {
    io::ByteReader r(bytes);
    r.expect_magic("MR2D");
    if (r.get<std::uint32_t>() != kDatasetVersion) throw FormatError("dataset: unsupported version");
    const std::uint64_t n = r.get<std::uint64_t>();
    const std::size_t d_in = r.get<std::uint32_t>();
    const std::size_t k = r.get<std::uint32_t>();
    if (n == 0 || d_in == 0 || k == 0) throw FormatError("dataset: empty header dimensions");
    if (n > r.remaining() / sizeof(Label)) throw FormatError("truncated file");
    Dataset out;
    out.num_classes = k;
    out.split = split;
    out.labels = r.get_array<Label>(n);
    for (Label y : out.labels)
        if (y >= k) throw FormatError("dataset: label >= K");
    if (d_in > r.remaining() / sizeof(float) / n) throw FormatError("truncated file");
    const auto f = r.get_array<float>(n * d_in);
    if (!r.at_end()) throw FormatError("dataset: trailing bytes");
    out.features = Matrix(n, d_in);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) throw FormatError("dataset: non-finite feature");
        out.features.flat()[i] = f[i];
    }
    return out;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& d) {
    const auto bytes = encode_dataset(d);
    io::write_file_atomic(path, bytes);
}

inline Dataset read_dataset(const std::filesystem::path& path, Split split = Split::Train) {
    const auto bytes = io::read_file(path);
    return decode_dataset(bytes, split);
}

}  // namespace mr2
