#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mr2/datagen.hpp"
#include "mr2/errors.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/model.hpp"

namespace mr2 {

// Flat `key = value` document; '#' starts a comment. Keys are unique.
class KeyValues {
public:
    static KeyValues parse(std::string_view text) {
        KeyValues kv;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw FormatError("line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty key");
            if (!kv.values_.emplace(key, value).second)
                throw FormatError("line " + std::to_string(lineno) + ": duplicate key " + key);
        }
        return kv;
    }

    static KeyValues load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw FormatError("missing key " + key);
        used_.insert(key);
        return it->second;
    }

    double number(const std::string& key) const { return parse_number(raw(key), key); }

    std::uint64_t integer(const std::string& key) const {
        const std::string& s = raw(key);
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(key + ": expected a non-negative integer");
        return v;
    }

    // Every key must have been read by the consumer.
    void reject_unknown() const {
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) throw FormatError("unknown key " + k);
    }

    static double parse_number(const std::string& s, const std::string& key) {
        if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        std::istringstream in(s);
        double v;
        in >> v;
        if (!in || !in.eof()) throw FormatError(key + ": expected a number, got '" + s + "'");
        return v;
    }

private:
    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return std::string(s.substr(b, e - b + 1));
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

inline std::string format_number(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

enum class Objective { CE, MR2, GammaOnly, RepOnly, UniformGamma, RepZeroMargin, DeltaMargin };
enum class LrSchedule { Constant, Cosine };
enum class StatsOrder { BeforeLoss, AfterLoss };

inline std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::CE: return "ce";
        case Objective::MR2: return "mr2";
        case Objective::GammaOnly: return "gamma_only";
        case Objective::RepOnly: return "rep_only";
        case Objective::UniformGamma: return "uniform_gamma";
        case Objective::RepZeroMargin: return "rep_zero_margin";
        case Objective::DeltaMargin: return "delta_margin";
    }
    return "?";
}

inline Objective parse_objective(std::string_view s) {
    for (Objective o : {Objective::CE, Objective::MR2, Objective::GammaOnly, Objective::RepOnly,
                        Objective::UniformGamma, Objective::RepZeroMargin, Objective::DeltaMargin})
        if (to_string(o) == s) return o;
    throw FormatError("unknown objective: " + std::string(s));
}

// Does the arm add the representation margin term?
inline bool uses_rep_term(Objective o) {
    return o == Objective::MR2 || o == Objective::RepOnly || o == Objective::RepZeroMargin;
}

struct TrainConfig {
    Objective objective = Objective::MR2;
    DeltaKind delta_kind = DeltaKind::LDAM;
    double tau = 1.0;
    double c_bar = 2.0;
    double lambda = 0.5;
    double ema_decay = 0.9;
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    LrSchedule lr_schedule = LrSchedule::Cosine;
    std::uint64_t seed = 0;
    double p = 2.0;
    StatsOrder stats_update_order = StatsOrder::BeforeLoss;

    EncoderKind encoder = EncoderKind::Mlp;
    HeadKind head = HeadKind::Linear;
    Activation activation = Activation::Softplus;
    std::size_t hidden_dim = 64;
    std::size_t feature_dim = 16;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
    if (!(c.c_bar > 0.0) || !std::isfinite(c.c_bar)) throw InputError("c_bar must be positive");
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw InputError("lambda must be >= 0");
    if (!(c.ema_decay >= 0.0 && c.ema_decay < 1.0)) throw InputError("ema_decay must be in [0, 1)");
    if (c.batch_size < 1) throw InputError("batch_size must be positive");
    if (uses_rep_term(c.objective) && c.batch_size < 2)
        throw InputError("batch_size must be >= 2 when the representation term is used");
    if (!(c.lr >= 0.0) || !(c.momentum >= 0.0 && c.momentum < 1.0) || !(c.weight_decay >= 0.0))
        throw InputError("lr, momentum and weight_decay must be non-negative (momentum < 1)");
    if (!(c.p >= 1.0)) throw InputError("p must be >= 1");
    if (!(c.tau > 0.0)) throw InputError("tau must be positive");
}

inline TrainConfig parse_train_config(const KeyValues& kv) {
    TrainConfig c;
    auto opt = [&](const char* key, auto&& apply) {
        if (kv.has(key)) apply(kv.raw(key));
    };
    try {
        opt("objective", [&](const std::string& v) { c.objective = parse_objective(v); });
        opt("delta_kind", [&](const std::string& v) { c.delta_kind = parse_delta_kind(v); });
        opt("lr_schedule", [&](const std::string& v) {
            if (v == "constant") c.lr_schedule = LrSchedule::Constant;
            else if (v == "cosine") c.lr_schedule = LrSchedule::Cosine;
            else throw FormatError("unknown lr_schedule: " + v);
        });
        opt("stats_update_order", [&](const std::string& v) {
            if (v == "before_loss") c.stats_update_order = StatsOrder::BeforeLoss;
            else if (v == "after_loss") c.stats_update_order = StatsOrder::AfterLoss;
            else throw FormatError("unknown stats_update_order: " + v);
        });
        opt("encoder", [&](const std::string& v) { c.encoder = parse_encoder(v); });
        opt("head", [&](const std::string& v) { c.head = parse_head(v); });
        opt("activation", [&](const std::string& v) { c.activation = parse_activation(v); });
    } catch (const InputError& e) {
        throw FormatError(e.what());
    }
    if (kv.has("tau")) c.tau = kv.number("tau");
    if (kv.has("c_bar")) c.c_bar = kv.number("c_bar");
    if (kv.has("lambda")) c.lambda = kv.number("lambda");
    if (kv.has("ema_decay")) c.ema_decay = kv.number("ema_decay");
    if (kv.has("epochs")) c.epochs = kv.integer("epochs");
    if (kv.has("batch_size")) c.batch_size = kv.integer("batch_size");
    if (kv.has("lr")) c.lr = kv.number("lr");
    if (kv.has("momentum")) c.momentum = kv.number("momentum");
    if (kv.has("weight_decay")) c.weight_decay = kv.number("weight_decay");
    if (kv.has("seed")) c.seed = kv.integer("seed");
    if (kv.has("p")) c.p = kv.number("p");
    if (kv.has("hidden_dim")) c.hidden_dim = kv.integer("hidden_dim");
    if (kv.has("feature_dim")) c.feature_dim = kv.integer("feature_dim");
    kv.reject_unknown();
    try {
        validate(c);
    } catch (const InputError& e) {
        throw FormatError(e.what());
    }
    return c;
}

inline std::string to_key_values(const TrainConfig& c) {
    std::ostringstream os;
    os << "objective = " << to_string(c.objective) << '\n'
       << "delta_kind = " << to_string(c.delta_kind) << '\n'
       << "tau = " << format_number(c.tau) << '\n'
       << "c_bar = " << format_number(c.c_bar) << '\n'
       << "lambda = " << format_number(c.lambda) << '\n'
       << "ema_decay = " << format_number(c.ema_decay) << '\n'
       << "epochs = " << c.epochs << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "lr = " << format_number(c.lr) << '\n'
       << "momentum = " << format_number(c.momentum) << '\n'
       << "weight_decay = " << format_number(c.weight_decay) << '\n'
       << "lr_schedule = " << (c.lr_schedule == LrSchedule::Cosine ? "cosine" : "constant") << '\n'
       << "seed = " << c.seed << '\n'
       << "p = " << format_number(c.p) << '\n'
       << "stats_update_order = " << (c.stats_update_order == StatsOrder::BeforeLoss ? "before_loss" : "after_loss")
       << '\n'
       << "encoder = " << to_string(c.encoder) << '\n'
       << "head = " << to_string(c.head) << '\n'
       << "activation = " << to_string(c.activation) << '\n'
       << "hidden_dim = " << c.hidden_dim << '\n'
       << "feature_dim = " << c.feature_dim << '\n';
    return os.str();
}

inline SynthSpec parse_synth_spec(const KeyValues& kv) {
    SynthSpec s;
    if (kv.has("num_classes")) s.num_classes = kv.integer("num_classes");
    if (kv.has("input_dim")) s.input_dim = kv.integer("input_dim");
    if (kv.has("samples_per_class")) s.samples_per_class = kv.integer("samples_per_class");
    if (kv.has("sigma_min")) s.sigma_min = kv.number("sigma_min");
    if (kv.has("sigma_max")) s.sigma_max = kv.number("sigma_max");
    if (kv.has("mean_scale")) s.mean_scale = kv.number("mean_scale");
    if (kv.has("seed")) s.seed = kv.integer("seed");
    kv.reject_unknown();
    return s;
}

}  // namespace mr2
