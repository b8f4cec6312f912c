#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "mr2/datagen.hpp"
#include "mr2/errors.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/linalg.hpp"
#include "mr2/model.hpp"

namespace mr2 {

struct Partition {
    std::vector<std::size_t> easy;
    std::vector<std::size_t> medium;
    std::vector<std::size_t> hard;
};

enum class Subset { Easy, Medium, Hard, Excluded };

inline const char* to_string(Subset s) {
    switch (s) {
        case Subset::Easy: return "easy";
        case Subset::Medium: return "medium";
        case Subset::Hard: return "hard";
        case Subset::Excluded: return "excluded";
    }
    return "?";
}


// Fraction of correct argmax predictions per class (ties go to the lowest
// class index). Classes without samples get NaN.
inline Vector per_class_accuracy(const Matrix& logits, std::span<const Label> labels, std::size_t num_classes) {
    if (logits.rows() != labels.size()) throw InputError("per_class_accuracy: size mismatch");
    std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) throw InputError("per_class_accuracy: label out of range");
        ++total[labels[i]];
        correct[labels[i]] += argmax(logits.row(i)) == labels[i];
    }
    Vector acc(num_classes, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < num_classes; ++k)
        if (total[k] > 0) acc[k] = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
    return acc;
}

inline Vector per_class_accuracy(const ModelParams& model, const Dataset& data) {
    return per_class_accuracy(forward(model, data.features).logits, data.labels, data.num_classes);
}

/// Easy / medium / hard thirds by descending accuracy (ties: ascending class
/// index). The first ceil(K/3) classes are easy, the last floor(K/3) hard.
/// NaN entries (classes without samples) are left out.
inline Partition partition_classes(std::span<const double> acc) {
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < acc.size(); ++k)
        if (!std::isnan(acc[k])) order.push_back(k);
    const std::size_t k = order.size();
    if (k < 3) throw InputError("partition_classes: need at least three classes with samples");
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });
    const std::size_t n_easy = (k + 2) / 3;
    const std::size_t n_hard = k / 3;
    Partition p;
    p.easy.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_easy));
    p.hard.assign(order.end() - static_cast<std::ptrdiff_t>(n_hard), order.end());
    p.medium.assign(order.begin() + static_cast<std::ptrdiff_t>(n_easy),
                    order.end() - static_cast<std::ptrdiff_t>(n_hard));
    return p;
}

inline std::vector<Subset> subset_of_class(const Partition& p, std::size_t num_classes) {
    std::vector<Subset> s(num_classes, Subset::Excluded);
    for (auto k : p.easy) s[k] = Subset::Easy;
    for (auto k : p.medium) s[k] = Subset::Medium;
    for (auto k : p.hard) s[k] = Subset::Hard;
    return s;
}

inline double mean_over(std::span<const double> values, std::span<const std::size_t> idx) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (auto i : idx) s += values[i];
    return s / static_cast<double>(idx.size());
}

// P(y|x) - max_{k != y} P(k|x) from the softmax of raw logits.
inline double output_margin_sample(std::span<const double> z, std::size_t y) {
    if (z.size() < 2 || y >= z.size()) throw InputError("output_margin: bad logits or label");
    Vector prob(z.size());
    softmax(z, prob);
    double runner_up = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k)
        if (k != y) runner_up = std::max(runner_up, prob[k]);
    return prob[y] - runner_up;
}

struct OutputMargins {
    double overall = 0.0;
    double easy = 0.0;
    double medium = 0.0;
    double hard = 0.0;
};

// Averages over all samples, misclassified ones included.
inline OutputMargins output_margin(const Matrix& logits, std::span<const Label> labels, const Partition* partition,
                                   std::size_t num_classes) {
    if (logits.rows() != labels.size() || labels.empty()) throw InputError("output_margin: size mismatch");
    std::vector<Subset> subset(num_classes, Subset::Excluded);
    if (partition) subset = subset_of_class(*partition, num_classes);
    double sum[4] = {0, 0, 0, 0};
    std::size_t cnt[4] = {0, 0, 0, 0};
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double m = output_margin_sample(logits.row(i), labels[i]);
        total += m;
        const auto s = static_cast<std::size_t>(subset[labels[i]]);
        sum[s] += m;
        ++cnt[s];
    }
    auto avg = [&](Subset s) {
        const auto i = static_cast<std::size_t>(s);
        return cnt[i] ? sum[i] / static_cast<double>(cnt[i]) : std::numeric_limits<double>::quiet_NaN();
    };
    return {total / static_cast<double>(labels.size()), avg(Subset::Easy), avg(Subset::Medium), avg(Subset::Hard)};
}

/// Minimal pairwise angle between head weight vectors, in degrees.
inline double classifier_margin(const Matrix& head) {
    const std::size_t k = head.rows();
    if (k < 2) throw InputError("classifier_margin: need at least two weight vectors");
    Vector norms(k);
    for (std::size_t i = 0; i < k; ++i) {
        norms[i] = std::sqrt(squared_norm(head.row(i)));
        if (norms[i] == 0.0) throw InputError("classifier_margin: zero weight vector");
    }
    double max_cos = -1.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            max_cos = std::max(max_cos, dot(head.row(i), head.row(j)) / (norms[i] * norms[j]));
    max_cos = std::clamp(max_cos, -1.0, 1.0);
    return std::acos(max_cos) * 180.0 / std::numbers::pi;
}

struct VariabilityRatio {
    double ratio = 0.0;
    std::vector<std::size_t> excluded;  // classes with a zero mean feature
};

/// Average over classes of ||s_k|| / ||mu_k||.
inline VariabilityRatio variability_ratio(std::span<const double> mu_sq, std::span<const double> s_sq) {
    if (mu_sq.size() != s_sq.size()) throw InputError("variability_ratio: size mismatch");
    VariabilityRatio out;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < mu_sq.size(); ++k) {
        if (!(mu_sq[k] > 0.0)) {
            out.excluded.push_back(k);
            continue;
        }
        sum += std::sqrt(s_sq[k]) / std::sqrt(mu_sq[k]);
        ++n;
    }
    if (n == 0) throw InputError("variability_ratio: every class has a zero mean feature");
    out.ratio = sum / static_cast<double>(n);
    return out;
}

inline VariabilityRatio variability_ratio(const Matrix& features, std::span<const Label> labels,
                                          std::size_t num_classes) {
    const BatchStats st = batch_stats(features, labels, num_classes);
    Vector mu(num_classes, 0.0), s(num_classes, 0.0);
    for (const auto& c : st.present) {
        mu[c.class_id] = c.mu_sq;
        s[c.class_id] = c.s_sq;
    }
    VariabilityRatio r = variability_ratio(mu, s);
    return r;
}

struct EvalReport {
    double overall_acc = 0.0;
    Vector per_class_acc;
    double easy_acc = 0.0;
    double medium_acc = 0.0;
    double hard_acc = 0.0;
    Partition partition;
    OutputMargins m_o;
    double m_c = 0.0;
    double variability_ratio = 0.0;
    Vector feature_mean_norm;  // ||mu_k||_2 per class
    Vector feature_spread;     // ||s_k||_2 per class
    std::vector<std::size_t> empty_classes;

    double mean_spread(std::span<const std::size_t> idx) const { return mean_over(feature_spread, idx); }
};

/// Full evaluation of a model on a labelled dataset (normally the test
/// split; the partition is taken from this dataset's per-class accuracy).
inline EvalReport evaluate(const ModelParams& model, const Dataset& data) {
    const ForwardCache c = forward(model, data.features);
    const std::size_t k = data.num_classes;
    EvalReport r;
    r.per_class_acc = per_class_accuracy(c.logits, data.labels, k);
    for (std::size_t i = 0; i < k; ++i)
        if (std::isnan(r.per_class_acc[i])) r.empty_classes.push_back(i);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += argmax(c.logits.row(i)) == data.labels[i];
    r.overall_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    r.partition = partition_classes(r.per_class_acc);
    r.easy_acc = mean_over(r.per_class_acc, r.partition.easy);
    r.medium_acc = mean_over(r.per_class_acc, r.partition.medium);
    r.hard_acc = mean_over(r.per_class_acc, r.partition.hard);
    r.m_o = output_margin(c.logits, data.labels, &r.partition, k);
    r.m_c = classifier_margin(model.head());

    const BatchStats st = batch_stats(c.features, data.labels, k);
    Vector mu(k, 0.0), s(k, 0.0);
    for (const auto& cs : st.present) {
        mu[cs.class_id] = cs.mu_sq;
        s[cs.class_id] = cs.s_sq;
    }
    r.feature_mean_norm.resize(k);
    r.feature_spread.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        r.feature_mean_norm[i] = std::sqrt(mu[i]);
        r.feature_spread[i] = std::sqrt(s[i]);
    }
    r.variability_ratio = variability_ratio(mu, s).ratio;
    return r;
}

}  // namespace mr2
