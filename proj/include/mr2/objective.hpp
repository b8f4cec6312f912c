#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"
#include "mr2/losses.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/model.hpp"

namespace mr2 {

// The logit-level part of the objective: gamma-margin cross-entropy or a
// prior-based Delta-margin cross-entropy.
struct LogitTerm {
    enum class Kind { Margin, Delta };
    Kind kind = Kind::Margin;
    MarginVector gamma;
    Matrix delta;

    static LogitTerm margin(MarginVector g) { return {Kind::Margin, std::move(g), {}}; }
    static LogitTerm with_delta(Matrix d) { return {Kind::Delta, {}, std::move(d)}; }

    LossGrad eval(std::span<const double> z, std::size_t y, bool want_grad) const {
        if (kind == Kind::Delta) return delta_margin_ce(z, y, delta, want_grad);
        return logit_margin_ce(z, y, gamma[y], want_grad);
    }
};

struct ObjectiveResult {
    double value = 0.0;       // logit_term + lambda * rep_term
    double logit_term = 0.0;  // batch mean
    double rep_term = 0.0;    // batch mean
    ModelGrads grads;         // empty unless requested
};

// Same-class members of the batch, by class.
inline std::vector<std::vector<std::size_t>> group_by_class(std::span<const Label> labels, std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> groups(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) throw InputError("label out of range");
        groups[labels[i]].push_back(i);
    }
    return groups;
}

/// Batch mean of logit loss + lambda * representation margin loss, where
/// each anchor's positives are the other same-class members of the batch.
/// s_bar and the margins are constants here; no gradient flows into them.
inline ObjectiveResult evaluate_objective(const ModelParams& params, const ForwardCache& cache,
                                          std::span<const Label> labels, const LogitTerm& term, double s_bar,
                                          double lambda, bool want_grad) {
    const auto& a = params.arch;
    const std::size_t n = cache.logits.rows();
    if (n == 0) throw InputError("objective: empty batch");
    if (labels.size() != n) throw InputError("objective: label count mismatch");
    if (!(lambda >= 0.0)) throw InputError("objective: lambda must be >= 0");
    if (term.kind == LogitTerm::Kind::Margin && term.gamma.size() != a.num_classes)
        throw InputError("objective: margin vector size mismatch");
    const double inv_n = 1.0 / static_cast<double>(n);

    ObjectiveResult out;
    Matrix g_logits = want_grad ? Matrix(n, a.num_classes) : Matrix();
    Vector logit_losses(n);
    for (std::size_t i = 0; i < n; ++i) {
        LossGrad lg = term.eval(cache.logits.row(i), labels[i], want_grad);
        logit_losses[i] = lg.value;
        if (want_grad) {
            auto dst = g_logits.row(i);
            for (std::size_t k = 0; k < a.num_classes; ++k) dst[k] = (*lg.grad_logits)[k] * inv_n;
        }
    }
    out.logit_term = pairwise_sum(logit_losses) * inv_n;

    Matrix g_features;
    if (lambda > 0.0) {
        if (want_grad) g_features = Matrix(n, a.feature_dim);
        Vector rep_losses(n, 0.0);
        const auto groups = group_by_class(labels, a.num_classes);
        std::vector<std::span<const double>> positives;
        for (const auto& members : groups) {
            for (std::size_t anchor : members) {
                positives.clear();
                for (std::size_t j : members)
                    if (j != anchor) positives.push_back(cache.features.row(j));
                if (positives.empty()) continue;
                LossGrad lg = rep_margin_loss(cache.features.row(anchor), positives, s_bar, want_grad);
                rep_losses[anchor] = lg.value;
                if (!want_grad) continue;
                const double scale = lambda * inv_n;
                auto ga = g_features.row(anchor);
                for (std::size_t c = 0; c < a.feature_dim; ++c) ga[c] += scale * (*lg.grad_anchor)[c];
                std::size_t slot = 0;
                for (std::size_t j : members) {
                    if (j == anchor) continue;
                    auto gp = g_features.row(j);
                    const auto& src = (*lg.grad_positives)[slot++];
                    for (std::size_t c = 0; c < a.feature_dim; ++c) gp[c] += scale * src[c];
                }
            }
        }
        out.rep_term = pairwise_sum(rep_losses) * inv_n;
    }
    out.value = out.logit_term + lambda * out.rep_term;
    if (want_grad) out.grads = backward(params, cache, g_logits, g_features);
    return out;
}

inline ObjectiveResult combined_objective(const ModelParams& params, const Matrix& inputs,
                                          std::span<const Label> labels, const LogitTerm& term, double s_bar,
                                          double lambda, bool want_grad) {
    const ForwardCache cache = forward(params, inputs);
    return evaluate_objective(params, cache, labels, term, s_bar, lambda, want_grad);
}

}  // namespace mr2
