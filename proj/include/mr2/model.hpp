#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"

namespace mr2 {

enum class EncoderKind : std::uint32_t { Identity = 0, Linear = 1, Mlp = 2 };
enum class HeadKind : std::uint32_t { Linear = 0, Cosine = 1 };
enum class Activation : std::uint32_t { Softplus = 0, Tanh = 1 };

inline constexpr double kCosineEps = 1e-12;

inline std::string_view to_string(EncoderKind e) {
    switch (e) {
        case EncoderKind::Identity: return "identity";
        case EncoderKind::Linear: return "linear";
        case EncoderKind::Mlp: return "mlp";
    }
    return "?";
}
inline std::string_view to_string(HeadKind h) { return h == HeadKind::Linear ? "linear" : "cosine"; }
inline std::string_view to_string(Activation a) { return a == Activation::Softplus ? "softplus" : "tanh"; }

inline EncoderKind parse_encoder(std::string_view s) {
    if (s == "identity") return EncoderKind::Identity;
    if (s == "linear") return EncoderKind::Linear;
    if (s == "mlp") return EncoderKind::Mlp;
    throw InputError("unknown encoder: " + std::string(s));
}
inline HeadKind parse_head(std::string_view s) {
    if (s == "linear") return HeadKind::Linear;
    if (s == "cosine") return HeadKind::Cosine;
    throw InputError("unknown head: " + std::string(s));
}
inline Activation parse_activation(std::string_view s) {
    if (s == "softplus") return Activation::Softplus;
    if (s == "tanh") return Activation::Tanh;
    throw InputError("unknown activation: " + std::string(s));
}

struct Architecture {
    EncoderKind encoder = EncoderKind::Mlp;
    HeadKind head = HeadKind::Linear;
    Activation activation = Activation::Softplus;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;   // Mlp only
    std::size_t feature_dim = 0;  // equals input_dim for Identity
    std::size_t num_classes = 0;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Parameter blocks, in order:
//   Identity: head
//   Linear:   W1 (d x d_in), b1 (1 x d), head
//   Mlp:      W1 (h x d_in), b1 (1 x h), W2 (d x h), b2 (1 x d), head
// The head is K x d with one weight vector w_k per row.
struct ModelParams {
    Architecture arch;
    std::vector<Matrix> blocks;

    Matrix& head() { return blocks.back(); }
    const Matrix& head() const { return blocks.back(); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ModelGrads = std::vector<Matrix>;

inline std::vector<std::pair<std::size_t, std::size_t>> block_shapes(const Architecture& a) {
    switch (a.encoder) {
        case EncoderKind::Identity: return {{a.num_classes, a.feature_dim}};
        case EncoderKind::Linear:
            return {{a.feature_dim, a.input_dim}, {1, a.feature_dim}, {a.num_classes, a.feature_dim}};
        case EncoderKind::Mlp:
            return {{a.hidden_dim, a.input_dim},
                    {1, a.hidden_dim},
                    {a.feature_dim, a.hidden_dim},
                    {1, a.feature_dim},
                    {a.num_classes, a.feature_dim}};
    }
    throw InputError("unknown encoder kind");
}

inline void validate(const Architecture& a) {
    if (a.input_dim == 0 || a.feature_dim == 0 || a.num_classes == 0)
        throw InputError("architecture dimensions must be positive");
    if (a.encoder == EncoderKind::Identity && a.feature_dim != a.input_dim)
        throw InputError("identity encoder requires feature_dim == input_dim");
    if (a.encoder == EncoderKind::Mlp && a.hidden_dim == 0) throw InputError("mlp encoder requires hidden_dim > 0");
}

inline ModelGrads zero_grads(const ModelParams& params) {
    ModelGrads g;
    g.reserve(params.blocks.size());
    for (const auto& b : params.blocks) g.emplace_back(b.rows(), b.cols());
    return g;
}

// Uniform in [-a, a] with a = 1 / sqrt(fan_in); biases use the fan-in of
// their layer.
inline ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
    validate(arch);
    ModelParams p{arch, {}};
    std::mt19937_64 rng(seed);
    const auto shapes = block_shapes(arch);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        auto [r, c] = shapes[i];
        Matrix m(r, c);
        const bool is_bias = arch.encoder != EncoderKind::Identity && (i == 1 || i == 3) && i + 1 < shapes.size();
        const std::size_t fan_in = is_bias ? shapes[i - 1].second : c;
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& v : m.flat()) v = dist(rng);
        p.blocks.push_back(std::move(m));
    }
    return p;
}

inline void check_params(const ModelParams& p) {
    validate(p.arch);
    const auto shapes = block_shapes(p.arch);
    if (shapes.size() != p.blocks.size()) throw InputError("parameter block count does not match architecture");
    for (std::size_t i = 0; i < shapes.size(); ++i)
        if (p.blocks[i].rows() != shapes[i].first || p.blocks[i].cols() != shapes[i].second)
            throw InputError("parameter block shape does not match architecture");
}

namespace detail {

inline double activate(Activation a, double x) {
    if (a == Activation::Tanh) return std::tanh(x);
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double activate_grad(Activation a, double x) {
    if (a == Activation::Tanh) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    return 1.0 / (1.0 + std::exp(-x));
}

// out = W x + b for one sample.
inline void affine(const Matrix& w, std::span<const double> bias, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = bias.empty() ? 0.0 : bias[r];
        auto row = w.row(r);
        for (std::size_t c = 0; c < x.size(); ++c) s += row[c] * x[c];
        out[r] = s;
    }
}

}  // namespace detail

// Activations cached by forward() for backward().
struct ForwardCache {
    Matrix inputs;     // N x d_in
    Matrix pre_hidden; // N x h (Mlp)
    Matrix hidden;     // N x h (Mlp)
    Matrix raw;        // N x d encoder output before cosine normalization
    Matrix features;   // N x d, phi(x); unit-norm rows for the cosine head
    Matrix logits;     // N x K
    Matrix unit_head;  // K x d normalized head rows (cosine)
};

/// Batch forward pass. Features are the vectors the head takes inner
/// products with: logits[k] = w_k . phi(x) for the linear head and
/// (w_k / ||w_k||) . (e(x) / ||e(x)||) for the cosine head, where e is the
/// encoder output.
inline ForwardCache forward(const ModelParams& params, const Matrix& inputs) {
    check_params(params);
    const auto& a = params.arch;
    if (inputs.cols() != a.input_dim) throw InputError("forward: input dimension mismatch");
    if (!all_finite(inputs.flat())) throw NumericError("forward: non-finite input");
    const std::size_t n = inputs.rows();

    ForwardCache c;
    c.inputs = inputs;
    c.raw = Matrix(n, a.feature_dim);
    switch (a.encoder) {
        case EncoderKind::Identity: c.raw = inputs; break;
        case EncoderKind::Linear:
            for (std::size_t i = 0; i < n; ++i)
                detail::affine(params.blocks[0], params.blocks[1].row(0), inputs.row(i), c.raw.row(i));
            break;
        case EncoderKind::Mlp:
            c.pre_hidden = Matrix(n, a.hidden_dim);
            c.hidden = Matrix(n, a.hidden_dim);
            for (std::size_t i = 0; i < n; ++i) {
                detail::affine(params.blocks[0], params.blocks[1].row(0), inputs.row(i), c.pre_hidden.row(i));
                auto pre = c.pre_hidden.row(i);
                auto h = c.hidden.row(i);
                for (std::size_t j = 0; j < a.hidden_dim; ++j) h[j] = detail::activate(a.activation, pre[j]);
                detail::affine(params.blocks[2], params.blocks[3].row(0), h, c.raw.row(i));
            }
            break;
    }

    const Matrix* head = &params.head();
    if (a.head == HeadKind::Cosine) {
        c.features = Matrix(n, a.feature_dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double norm = std::sqrt(squared_norm(c.raw.row(i))) + kCosineEps;
            auto src = c.raw.row(i);
            auto dst = c.features.row(i);
            for (std::size_t j = 0; j < a.feature_dim; ++j) dst[j] = src[j] / norm;
        }
        c.unit_head = Matrix(a.num_classes, a.feature_dim);
        for (std::size_t k = 0; k < a.num_classes; ++k) {
            const double norm = std::sqrt(squared_norm(params.head().row(k))) + kCosineEps;
            auto src = params.head().row(k);
            auto dst = c.unit_head.row(k);
            for (std::size_t j = 0; j < a.feature_dim; ++j) dst[j] = src[j] / norm;
        }
        head = &c.unit_head;
    } else {
        c.features = c.raw;
    }

    c.logits = Matrix(n, a.num_classes);
    for (std::size_t i = 0; i < n; ++i) detail::affine(*head, {}, c.features.row(i), c.logits.row(i));
    if (!all_finite(c.logits.flat()) || !all_finite(c.features.flat()))
        throw NumericError("forward: non-finite activations");
    return c;
}

namespace detail {

// Gradient through v / (||v|| + eps) given the upstream gradient g on the
// normalized vector.
inline void normalize_backward(std::span<const double> v, std::span<const double> g, std::span<double> out) {
    const double n = std::sqrt(squared_norm(v));
    const double denom = n + kCosineEps;
    const double vg = dot(v, g);
    const double coef = n > 0.0 ? vg / (n * denom * denom) : 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) out[j] += g[j] / denom - coef * v[j];
}

}  // namespace detail

/// Parameter gradients given upstream gradients on logits (N x K) and on
/// features (N x d; may be empty when only the logit term is present).
inline ModelGrads backward(const ModelParams& params, const ForwardCache& cache, const Matrix& grad_logits,
                           const Matrix& grad_features) {
    const auto& a = params.arch;
    const std::size_t n = cache.inputs.rows();
    if (grad_logits.rows() != n || grad_logits.cols() != a.num_classes)
        throw InputError("backward: grad_logits shape mismatch");
    const bool has_gf = !grad_features.empty();
    if (has_gf && (grad_features.rows() != n || grad_features.cols() != a.feature_dim))
        throw InputError("backward: grad_features shape mismatch");

    ModelGrads g = zero_grads(params);
    Matrix& g_head = g.back();
    const Matrix& head_used = a.head == HeadKind::Cosine ? cache.unit_head : params.head();

    // logits = head_used * phi
    Matrix g_phi = has_gf ? grad_features : Matrix(n, a.feature_dim);
    Matrix g_head_used(a.num_classes, a.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
        auto gl = grad_logits.row(i);
        auto phi = cache.features.row(i);
        auto gp = g_phi.row(i);
        for (std::size_t k = 0; k < a.num_classes; ++k) {
            if (gl[k] == 0.0) continue;
            auto w = head_used.row(k);
            auto gw = g_head_used.row(k);
            for (std::size_t j = 0; j < a.feature_dim; ++j) {
                gp[j] += gl[k] * w[j];
                gw[j] += gl[k] * phi[j];
            }
        }
    }

    Matrix g_raw;
    if (a.head == HeadKind::Cosine) {
        for (std::size_t k = 0; k < a.num_classes; ++k)
            detail::normalize_backward(params.head().row(k), g_head_used.row(k), g_head.row(k));
        g_raw = Matrix(n, a.feature_dim);
        for (std::size_t i = 0; i < n; ++i) detail::normalize_backward(cache.raw.row(i), g_phi.row(i), g_raw.row(i));
    } else {
        g_head = std::move(g_head_used);
        g_raw = std::move(g_phi);
    }

    auto affine_backward = [n](const Matrix& in, const Matrix& g_out, Matrix& g_w, Matrix& g_b, const Matrix& w,
                               Matrix* g_in) {
        for (std::size_t i = 0; i < n; ++i) {
            auto go = g_out.row(i);
            auto x = in.row(i);
            for (std::size_t r = 0; r < w.rows(); ++r) {
                const double gr = go[r];
                if (gr == 0.0) continue;
                g_b(0, r) += gr;
                auto gw = g_w.row(r);
                for (std::size_t c = 0; c < x.size(); ++c) gw[c] += gr * x[c];
                if (g_in) {
                    auto wr = w.row(r);
                    auto gi = g_in->row(i);
                    for (std::size_t c = 0; c < x.size(); ++c) gi[c] += gr * wr[c];
                }
            }
        }
    };

    switch (a.encoder) {
        case EncoderKind::Identity: break;
        case EncoderKind::Linear: affine_backward(cache.inputs, g_raw, g[0], g[1], params.blocks[0], nullptr); break;
        case EncoderKind::Mlp: {
            Matrix g_hidden(n, a.hidden_dim);
            affine_backward(cache.hidden, g_raw, g[2], g[3], params.blocks[2], &g_hidden);
            for (std::size_t i = 0; i < n; ++i) {
                auto gh = g_hidden.row(i);
                auto pre = cache.pre_hidden.row(i);
                for (std::size_t j = 0; j < a.hidden_dim; ++j) gh[j] *= detail::activate_grad(a.activation, pre[j]);
            }
            affine_backward(cache.inputs, g_hidden, g[0], g[1], params.blocks[0], nullptr);
            break;
        }
    }
    return g;
}

/// Lambda = max_k ||w_k||_q (q = 2 by default). Cosine heads use the
/// normalized rows, so the L2 bound is 1.
inline double head_norm_bound(const ModelParams& params, double q = 2.0) {
    const Matrix& h = params.head();
    double best = 0.0;
    for (std::size_t k = 0; k < h.rows(); ++k) {
        double norm = lp_norm(h.row(k), q);
        if (params.arch.head == HeadKind::Cosine) {
            const double l2 = std::sqrt(squared_norm(h.row(k)));
            norm = l2 > 0.0 ? norm / l2 : 0.0;
        }
        best = std::max(best, norm);
    }
    return best;
}

}  // namespace mr2
