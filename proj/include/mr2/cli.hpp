#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mr2/mr2.hpp"

namespace mr2::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

namespace detail {

inline std::string csv_number(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

inline double parse_p(const std::string& s) {
    try {
        return KeyValues::parse_number(s, "--p");
    } catch (const FormatError& e) {
        throw InputError(e.what());
    }
}

// Writes `text` to `path` atomically, or to `out` when path is empty.
inline void emit(std::ostream& out, const std::string& path, const std::string& text) {
    if (path.empty()) out << text;
    else io::write_text_atomic(path, text);
}

inline std::string eval_summary_csv(const EvalReport& r) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "overall_acc,easy_acc,medium_acc,hard_acc,m_o,m_o_easy,m_o_medium,m_o_hard,m_c,variability_ratio\n"
       << r.overall_acc << ',' << r.easy_acc << ',' << r.medium_acc << ',' << r.hard_acc << ',' << r.m_o.overall << ','
       << r.m_o.easy << ',' << r.m_o.medium << ',' << r.m_o.hard << ',' << r.m_c << ',' << r.variability_ratio << '\n';
    return os.str();
}

inline std::string eval_per_class_csv(const EvalReport& r) {
    std::ostringstream os;
    os << std::setprecision(10);
    const auto subset = subset_of_class(r.partition, r.per_class_acc.size());
    os << "class_id,acc,mean_norm,spread,subset\n";
    for (std::size_t k = 0; k < r.per_class_acc.size(); ++k)
        os << k << ',' << r.per_class_acc[k] << ',' << r.feature_mean_norm[k] << ',' << r.feature_spread[k] << ','
           << to_string(subset[k]) << '\n';
    return os.str();
}

inline TrainConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    const KeyValues kv = KeyValues::load(path);
    TrainConfig c = parse_train_config(kv);
    if (seed) c.seed = *seed;
    return c;
}

}  // namespace detail

/// Runs one CLI invocation. Machine-readable output goes to `out` only on
/// success; diagnostics go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Margin regularization toolkit: synthetic data, training, evaluation and bounds"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::optional<std::uint64_t> seed;
    std::string out_path, config_path, data_path, test_path, ckpt_path, per_class_path, stats_path;
    double delta = 0.05, cbar = 2.0;
    std::string p_text = "2";
    std::size_t draws = 4096, instances = 200, seeds = 5;
    unsigned threads = 1;
    std::vector<double> alpha;
    std::string spec_path;

    auto* synth = app.add_subcommand("synth", "Generate a train/test pair from a synthetic spec file");
    synth->add_option("--spec", spec_path, "key = value spec (num_classes, input_dim, ...)")->required();
    synth->add_option("--out", out_path, "Output directory for train.mr2d and test.mr2d")->required();
    synth->add_option("--seed", seed, "Override the spec seed");

    auto* trn = app.add_subcommand("train", "Train a model; writes checkpoint.mr2c and train_log.csv");
    trn->add_option("--config", config_path, "TrainConfig key = value file")->required();
    trn->add_option("--data", data_path, "Training set (.mr2d)")->required();
    trn->add_option("--test", test_path, "Optional test set for per-epoch metrics");
    trn->add_option("--out", out_path, "Output directory")->required();
    trn->add_option("--seed", seed, "Override the config seed");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", ckpt_path, "Checkpoint (.mr2c)")->required();
    ev->add_option("--data", data_path, "Dataset (.mr2d)")->required();
    ev->add_option("--out", out_path, "Summary CSV path (default stdout)");
    ev->add_option("--per-class", per_class_path, "Per-class CSV path (default stdout, after the summary)");
    ev->add_option("--seed", seed, "Accepted for uniformity; evaluation is deterministic");

    auto* bd = app.add_subcommand("bounds", "Evaluate generalization-bound terms for a checkpoint");
    bd->add_option("--checkpoint", ckpt_path, "Checkpoint (.mr2c)")->required();
    bd->add_option("--data", data_path, "Dataset (.mr2d)")->required();
    bd->add_option("--delta", delta, "Confidence level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
    bd->add_option("--p", p_text, "Feature norm exponent (>= 1 or inf)");
    bd->add_option("--draws", draws, "Monte-Carlo sign draws")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 30));
    bd->add_option("--cbar", cbar, "Margin budget");
    bd->add_option("--threads", threads, "Worker threads for the Monte-Carlo estimate");
    bd->add_option("--out", out_path, "CSV path (default stdout)");
    bd->add_option("--seed", seed, "Monte-Carlo seed");

    auto* gm = app.add_subcommand("gamma", "Print per-class margins as CSV (class_id, alpha, gamma)");
    auto* alpha_opt = gm->add_option("--alpha", alpha, "Comma-separated ||mu||^2 + ||s||^2 per class")->delimiter(',');
    auto* stats_opt = gm->add_option("--stats", stats_path, "Checkpoint whose running statistics to use");
    alpha_opt->excludes(stats_opt);
    gm->add_option("--cbar", cbar, "Margin budget");
    gm->add_option("--seed", seed, "Accepted for uniformity; the computation is deterministic");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite; CSV (loss_name, instance_id, rel_error)");
    gc->add_option("--instances", instances, "Random instances per loss")->check(CLI::PositiveNumber);
    gc->add_option("--out", out_path, "CSV path (default stdout)");
    gc->add_option("--seed", seed, "Instance seed");

    auto* ab = app.add_subcommand("ablate", "Train every ablation arm over several seeds");
    ab->add_option("--config", config_path, "Base TrainConfig")->required();
    ab->add_option("--data", data_path, "Training set")->required();
    ab->add_option("--test", test_path, "Test set")->required();
    ab->add_option("--seeds", seeds, "Number of seeds (seed, seed+1, ...)")->check(CLI::PositiveNumber);
    ab->add_option("--threads", threads, "Parallel training jobs");
    ab->add_option("--out", out_path, "CSV path (default stdout)");
    ab->add_option("--seed", seed, "First seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (synth->parsed()) {
            SynthSpec spec = parse_synth_spec(KeyValues::load(spec_path));
            if (seed) spec.seed = *seed;
            auto [train_set, test_set] = generate(spec);
            std::filesystem::create_directories(out_path);
            write_dataset(std::filesystem::path(out_path) / "train.mr2d", train_set);
            write_dataset(std::filesystem::path(out_path) / "test.mr2d", test_set);
            return kOk;
        }
        if (trn->parsed()) {
            const TrainConfig c = detail::load_config(config_path, seed);
            const Dataset train_set = read_dataset(data_path, Split::Train);
            std::optional<Dataset> test_set;
            if (!test_path.empty()) test_set = read_dataset(test_path, Split::Test);
            const TrainResult r = train(c, train_set, test_set ? &*test_set : nullptr);
            std::filesystem::create_directories(out_path);
            write_checkpoint(std::filesystem::path(out_path) / "checkpoint.mr2c",
                             {r.params, r.stats, to_key_values(c)});
            io::write_text_atomic(std::filesystem::path(out_path) / "train_log.csv", r.log.to_csv());
            return kOk;
        }
        if (ev->parsed()) {
            const Checkpoint ck = read_checkpoint(ckpt_path);
            const Dataset data = read_dataset(data_path, Split::Test);
            if (data.input_dim() != ck.params.arch.input_dim || data.num_classes != ck.params.arch.num_classes)
                throw FormatError("dataset does not match the checkpoint architecture");
            const EvalReport r = evaluate(ck.params, data);
            if (!r.empty_classes.empty()) {
                err << "warning: classes without samples excluded from the partition:";
                for (auto k : r.empty_classes) err << ' ' << k;
                err << '\n';
            }
            const std::string summary = detail::eval_summary_csv(r);
            const std::string per_class = detail::eval_per_class_csv(r);
            if (per_class_path.empty() && out_path.empty()) {
                out << summary << '\n' << per_class;
            } else {
                detail::emit(out, out_path, summary);
                detail::emit(out, per_class_path, per_class);
            }
            return kOk;
        }
        if (bd->parsed()) {
            BoundOptions opt;
            opt.delta = delta;
            opt.p = detail::parse_p(p_text);
            opt.draws = draws;
            opt.seed = seed.value_or(0);
            opt.threads = threads;
            opt.c_bar = cbar;
            const Checkpoint ck = read_checkpoint(ckpt_path);
            const Dataset data = read_dataset(data_path, Split::Test);
            if (data.input_dim() != ck.params.arch.input_dim || data.num_classes != ck.params.arch.num_classes)
                throw FormatError("dataset does not match the checkpoint architecture");
            detail::emit(out, out_path, bound_report(ck.params, data, opt).to_csv());
            return kOk;
        }
        if (gm->parsed()) {
            if (alpha.empty() && stats_path.empty()) {
                err << "error: gamma needs --alpha or --stats\n\n" << gm->help();
                return kUsage;
            }
            Vector source;
            MarginVector g;
            if (!alpha.empty()) {
                source = alpha;
                g = compute_gamma(source, cbar);
            } else {
                const Checkpoint ck = read_checkpoint(stats_path);
                source = ck.stats.p() == 2.0 ? ck.stats.alpha() : ck.stats.r_sq_p();
                g = gamma_from_stats(ck.stats, cbar);
            }
            std::ostringstream os;
            os << "class_id,alpha,gamma\n";
            for (std::size_t k = 0; k < g.size(); ++k)
                os << k << ',' << detail::csv_number(source[k]) << ',' << detail::csv_number(g[k]) << '\n';
            out << os.str();
            return kOk;
        }
        if (gc->parsed()) {
            const auto rows = run_gradcheck_suite(instances, seed.value_or(0));
            std::ostringstream os;
            os << std::setprecision(6) << "loss_name,instance_id,rel_error\n";
            bool ok = true;
            for (const auto& r : rows) {
                os << r.loss << ',' << r.instance << ',' << r.rel_error << '\n';
                ok = ok && r.rel_error < kGradientTolerance;
            }
            if (!ok) {
                err << "gradcheck: relative error above " << kGradientTolerance << '\n';
                return kNumeric;
            }
            detail::emit(out, out_path, os.str());
            return kOk;
        }
        if (ab->parsed()) {
            TrainConfig c = detail::load_config(config_path, std::nullopt);
            const std::uint64_t first = seed.value_or(c.seed);
            const Dataset train_set = read_dataset(data_path, Split::Train);
            const Dataset test_set = read_dataset(test_path, Split::Test);
            std::vector<std::uint64_t> seed_list;
            for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(first + i);
            const auto rows = ablation_suite(c, train_set, test_set, seed_list, threads);
            std::ostringstream os;
            os << std::setprecision(10) << "objective,seed,overall_acc,easy_acc,medium_acc,hard_acc,m_o,m_c\n";
            for (const auto& r : rows)
                os << to_string(r.objective) << ',' << r.seed << ',' << r.report.overall_acc << ','
                   << r.report.easy_acc << ',' << r.report.medium_acc << ',' << r.report.hard_acc << ','
                   << r.report.m_o.overall << ',' << r.report.m_c << '\n';
            detail::emit(out, out_path, os.str());
            return kOk;
        }
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const StateError& e) {
        err << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}

}  // namespace mr2::cli
