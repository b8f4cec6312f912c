#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mr2/config.hpp"
#include "mr2/datagen.hpp"
#include "mr2/errors.hpp"
#include "mr2/eval_metrics.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/model.hpp"
#include "mr2/objective.hpp"
#include "mr2/rng.hpp"

namespace mr2 {

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double logit_term = 0.0;
    double rep_term = 0.0;
    double lr = 0.0;
    double s_bar = 0.0;
    Vector spread;  // EMA ||s_k||_2 per class at epoch end
    Vector gamma;   // margins used on the last step of the epoch
    bool has_test = false;
    double test_overall = 0.0;
    double test_easy = 0.0;
    double test_medium = 0.0;
    double test_hard = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;

    std::string to_csv() const {
        std::ostringstream os;
        os << std::setprecision(10);
        const std::size_t k = epochs.empty() ? 0 : epochs.front().spread.size();
        os << "epoch,loss,logit_term,rep_term,lr,s_bar,test_overall,test_easy,test_medium,test_hard";
        for (std::size_t i = 0; i < k; ++i) os << ",spread_" << i;
        for (std::size_t i = 0; i < k; ++i) os << ",gamma_" << i;
        os << '\n';
        for (const auto& e : epochs) {
            os << e.epoch << ',' << e.loss << ',' << e.logit_term << ',' << e.rep_term << ',' << e.lr << ','
               << e.s_bar;
            if (e.has_test)
                os << ',' << e.test_overall << ',' << e.test_easy << ',' << e.test_medium << ',' << e.test_hard;
            else
                os << ",,,,";
            for (double v : e.spread) os << ',' << v;
            for (double v : e.gamma) os << ',' << v;
            os << '\n';
        }
        return os.str();
    }
};

struct TrainResult {
    ModelParams params;
    ClassStats stats;
    TrainLog log;
};

inline Architecture architecture_for(const TrainConfig& c, std::size_t input_dim, std::size_t num_classes) {
    Architecture a;
    a.encoder = c.encoder;
    a.head = c.head;
    a.activation = c.activation;
    a.input_dim = input_dim;
    a.hidden_dim = c.encoder == EncoderKind::Mlp ? c.hidden_dim : 0;
    a.feature_dim = c.encoder == EncoderKind::Identity ? input_dim : c.feature_dim;
    a.num_classes = num_classes;
    return a;
}

/// Epoch order in which each consecutive run of classes contributes the
/// same number of samples (at least two), so every batch carries in-class
/// positive pairs. Class order is reshuffled for every round.
inline std::vector<std::size_t> stratified_order(std::span<const Label> labels, std::size_t num_classes,
                                                 std::size_t batch_size, std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> pools(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) pools[labels[i]].push_back(i);
    for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t per_class = std::max<std::size_t>(2, batch_size / std::max<std::size_t>(1, num_classes));

    std::vector<std::size_t> classes(num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    std::vector<std::size_t> order;
    order.reserve(labels.size());
    for (std::size_t round = 0; order.size() < labels.size(); ++round) {
        std::shuffle(classes.begin(), classes.end(), rng);
        for (std::size_t k : classes) {
            const auto& pool = pools[k];
            const std::size_t b = std::min(pool.size(), round * per_class);
            const std::size_t e = std::min(pool.size(), b + per_class);
            order.insert(order.end(), pool.begin() + static_cast<std::ptrdiff_t>(b),
                         pool.begin() + static_cast<std::ptrdiff_t>(e));
        }
    }
    return order;
}

inline double scheduled_lr(const TrainConfig& c, std::size_t step, std::size_t total_steps) {
    if (c.lr_schedule == LrSchedule::Constant || total_steps == 0) return c.lr;
    return c.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// Logit term and representation slack for one step of the given arm.
struct StepTerms {
    LogitTerm logit;
    double s_bar = 0.0;
    double lambda = 0.0;
};

inline StepTerms step_terms(const TrainConfig& c, const ClassStats& stats, const BatchStats& batch,
                            std::size_t num_classes) {
    StepTerms t;
    const MarginVector unit = uniform_margins(num_classes, 1.0);
    switch (c.objective) {
        case Objective::CE: t.logit = LogitTerm::margin(unit); break;
        case Objective::UniformGamma: t.logit = LogitTerm::margin(uniform_margins(num_classes, c.c_bar)); break;
        case Objective::GammaOnly:
        case Objective::MR2: t.logit = LogitTerm::margin(gamma_from_stats(stats, c.c_bar)); break;
        case Objective::RepOnly:
        case Objective::RepZeroMargin: t.logit = LogitTerm::margin(unit); break;
        case Objective::DeltaMargin: {
            const Vector priors(num_classes, 1.0 / static_cast<double>(num_classes));
            t.logit = LogitTerm::with_delta(delta_margins({c.delta_kind, priors, c.tau}));
            break;
        }
    }
    if (uses_rep_term(c.objective)) {
        t.lambda = c.lambda;
        if (c.objective == Objective::RepZeroMargin) {
            t.s_bar = 0.0;
        } else if (stats.any_initialized()) {
            t.s_bar = stats.mean_deviation();
        } else {
            // after_loss ordering on the very first step: fall back to the batch.
            double s = 0.0;
            for (const auto& cs : batch.present) s += cs.s_sq;
            t.s_bar = s / static_cast<double>(batch.present.size());
        }
    }
    return t;
}

/// Mini-batch SGD with momentum and weight decay on the configured
/// objective. Each step: forward, batch statistics, EMA update (before or
/// after the loss), margins from the EMA, objective and gradient, update.
inline TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset* test_set = nullptr) {
    validate(config);
    if (train_set.size() == 0) throw InputError("train: empty training set");
    if (test_set && (test_set->input_dim() != train_set.input_dim() || test_set->num_classes != train_set.num_classes))
        throw InputError("train: train and test sets disagree on d_in or K");
    const std::size_t k = train_set.num_classes;
    const Architecture arch = architecture_for(config, train_set.input_dim(), k);

    TrainResult r;
    r.params = init_params(arch, derive_seed(config.seed, {1}));
    r.stats = ClassStats(k, arch.feature_dim, config.p, config.ema_decay);
    std::mt19937_64 rng(derive_seed(config.seed, {2}));

    const std::size_t batches_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = batches_per_epoch * config.epochs;
    ModelGrads velocity = zero_grads(r.params);
    const bool decay_head = arch.head != HeadKind::Cosine;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = stratified_order(train_set.labels, k, config.batch_size, rng);
        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0, logit_sum = 0.0, rep_sum = 0.0;
        std::size_t seen = 0;
        MarginVector last_gamma = uniform_margins(k, 1.0);

        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t e = std::min(order.size(), b + config.batch_size);
            const std::size_t n = e - b;
            Matrix x(n, arch.input_dim);
            std::vector<Label> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                auto src = train_set.features.row(order[b + i]);
                std::copy(src.begin(), src.end(), x.row(i).begin());
                y[i] = train_set.labels[order[b + i]];
            }

            const ForwardCache cache = forward(r.params, x);
            const BatchStats bs = batch_stats(cache.features, y, k, config.p);
            if (config.stats_update_order == StatsOrder::BeforeLoss) r.stats.update(bs);
            const StepTerms terms = step_terms(config, r.stats, bs, k);
            ObjectiveResult obj = evaluate_objective(r.params, cache, y, terms.logit, terms.s_bar, terms.lambda, true);
            if (config.stats_update_order == StatsOrder::AfterLoss) r.stats.update(bs);
            if (!std::isfinite(obj.value))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step) + " (logit term " + std::to_string(obj.logit_term) +
                                   ", rep term " + std::to_string(obj.rep_term) + ")");

            const double lr = scheduled_lr(config, step, total_steps);
            for (std::size_t blk = 0; blk < r.params.blocks.size(); ++blk) {
                const bool is_head = blk + 1 == r.params.blocks.size();
                const double wd = (is_head && !decay_head) ? 0.0 : config.weight_decay;
                auto w = r.params.blocks[blk].flat();
                auto g = obj.grads[blk].flat();
                auto v = velocity[blk].flat();
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = config.momentum * v[i] + g[i] + wd * w[i];
                    w[i] -= lr * v[i];
                }
            }
            if (terms.logit.kind == LogitTerm::Kind::Margin) last_gamma = terms.logit.gamma;
            rec.s_bar = terms.s_bar;
            rec.lr = lr;
            loss_sum += obj.value * static_cast<double>(n);
            logit_sum += obj.logit_term * static_cast<double>(n);
            rep_sum += obj.rep_term * static_cast<double>(n);
            seen += n;
            ++step;
        }

        rec.loss = loss_sum / static_cast<double>(seen);
        rec.logit_term = logit_sum / static_cast<double>(seen);
        rec.rep_term = rep_sum / static_cast<double>(seen);
        rec.gamma = last_gamma.gamma;
        rec.spread.resize(k);
        for (std::size_t c = 0; c < k; ++c) rec.spread[c] = std::sqrt(r.stats.s_sq()[c]);
        if (test_set && k >= 3) {
            const EvalReport ev = evaluate(r.params, *test_set);
            rec.has_test = true;
            rec.test_overall = ev.overall_acc;
            rec.test_easy = ev.easy_acc;
            rec.test_medium = ev.medium_acc;
            rec.test_hard = ev.hard_acc;
        }
        r.log.epochs.push_back(std::move(rec));
    }
    return r;
}

struct AblationRow {
    Objective objective = Objective::CE;
    std::uint64_t seed = 0;
    EvalReport report;
};

inline const std::vector<Objective>& ablation_arms() {
    static const std::vector<Objective> arms = {Objective::CE,         Objective::UniformGamma,
                                                Objective::GammaOnly,  Objective::RepZeroMargin,
                                                Objective::RepOnly,    Objective::MR2};
    return arms;
}

/// Trains and evaluates every ablation arm for every seed. Arms share the
/// seed list, so arm differences are not confounded with initialization.
/// Jobs are independent and may run on `threads` workers; output order is
/// (seed, arm) regardless of scheduling.
inline std::vector<AblationRow> ablation_suite(const TrainConfig& base, const Dataset& train_set,
                                               const Dataset& test_set, std::span<const std::uint64_t> seeds,
                                               unsigned threads = 1,
                                               std::span<const Objective> arms = ablation_arms()) {
    std::vector<AblationRow> rows;
    for (auto s : seeds)
        for (auto o : arms) rows.push_back({o, s, {}});
    std::vector<std::exception_ptr> errors(rows.size());
    auto run = [&](std::size_t i) {
        try {
            TrainConfig c = base;
            c.objective = rows[i].objective;
            c.seed = rows[i].seed;
            const TrainResult tr = train(c, train_set, nullptr);
            rows[i].report = evaluate(tr.params, test_set);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        for (std::size_t i = 0; i < rows.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < rows.size(); i = next++) run(i);
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

}  // namespace mr2
