#ifndef PEGE_CONFIG_HPP
#define PEGE_CONFIG_HPP

#include <pege/curriculum.hpp>
#include <pege/error.hpp>
#include <pege/estimators.hpp>
#include <pege/models.hpp>
#include <pege/quantizer.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pege {

enum class OptimizerKind { adam, sgd_momentum };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.9;
    bool nesterov = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct DataConfig {
    std::string name = "synth"; // cifar10 | mnist | synth
    std::string dir;
    std::size_t batch = 64;
    bool augment = true;
    std::size_t subset_n = 0; // 0: whole training split
    std::size_t synth_n = 2000;
    std::size_t synth_test_n = 500;
};

struct ReplaceConfig {
    ScheduleFamily family = ScheduleFamily::logarithmic;
    double p0 = 0.3;
    double t_full_frac = 0.6;
    double base = 10;
    double p_const = 0.8;
    Granularity granularity = Granularity::per_layer;
    bool activations = false;
};

struct MuConfig {
    ScheduleFamily family = ScheduleFamily::exponential;
    double max = 0.1;
    double k = 0; // 0: reach 0.99 max at 80% of training
};

/// Everything one experiment needs.
struct TrainConfig {
    long epochs = 1;
    long max_steps = -1; // < 0: no cap
    std::uint64_t seed = 0;
    long eval_every = 1;
    OptimizerConfig optimizer;
    ModelSpec model;
    std::string pretrained_path;
    DataConfig data;
    ReplaceConfig replace;
    MuConfig mu;

    void validate() const
    {
        if (epochs < 1)
            throw ConfigError("train.epochs must be >= 1");
        if (!(optimizer.lr > 0))
            throw ConfigError("train.lr must be positive");
        if (eval_every < 1)
            throw ConfigError("train.eval_every must be >= 1");
        if (data.batch == 0)
            throw ConfigError("data.batch must be positive");
        if (!(replace.t_full_frac > 0))
            throw ConfigError("replace.t_full_frac must be positive");
        model.validate();
    }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

} // namespace detail

/// Ordered `section.key = value` pairs. '#' starts a comment.
class ConfigFile {
public:
    static ConfigFile parse(std::string_view text)
    {
        ConfigFile cfg;
        std::istringstream in{std::string(text)};
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const auto content = detail::trim(line);
            if (content.empty())
                continue;
            const auto eq = content.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected 'section.key = value'");
            const auto key = detail::trim(std::string_view(content).substr(0, eq));
            const auto value = detail::trim(std::string_view(content).substr(eq + 1));
            if (key.find('.') == std::string::npos || key.front() == '.' || key.back() == '.')
                throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key + "' is not section.key");
            if (cfg.values_.count(key))
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
            cfg.values_[key] = value;
            cfg.order_.push_back(key);
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open config " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const { return values_.at(key); }
    void set(const std::string& key, const std::string& value)
    {
        if (!has(key))
            order_.push_back(key);
        values_[key] = value;
    }
    const std::vector<std::string>& keys() const { return order_; }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d))
            throw ConfigError("");
        return d;
    } catch (...) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
}

inline long parse_long(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long n = std::stol(v, &used);
        if (used != v.size())
            throw ConfigError("");
        return n;
    } catch (...) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v)
{
    const auto s = lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on")
        return true;
    if (s == "false" || s == "0" || s == "no" || s == "off")
        return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

template <class E, std::size_t N>
E parse_enum(const std::string& key, const std::string& v, const std::pair<const char*, E> (&table)[N])
{
    const auto s = lower(v);
    for (const auto& [name, value] : table)
        if (s == name)
            return value;
    std::string allowed;
    for (const auto& [name, value] : table)
        allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    throw ConfigError("config key '" + key + "': '" + v + "' is not one of {" + allowed + "}");
}

inline ScheduleFamily parse_family(const std::string& key, const std::string& v)
{
    static const std::pair<const char*, ScheduleFamily> table[] = {
        {"constant", ScheduleFamily::constant},       {"linear", ScheduleFamily::linear},
        {"logarithmic", ScheduleFamily::logarithmic}, {"log", ScheduleFamily::logarithmic},
        {"exponential", ScheduleFamily::exponential}, {"cosine", ScheduleFamily::cosine},
        {"none", ScheduleFamily::none}};
    return parse_enum(key, v, table);
}

} // namespace detail

/// Builds a TrainConfig from a config file; unknown keys are errors.
/// `estimator.mu_max` / `estimator.k_mu` are aliases of `mu.max` / `mu.k`.
inline TrainConfig make_train_config(const ConfigFile& file)
{
    using namespace detail;
    TrainConfig cfg;
    bool replace_family_set = false;
    std::map<std::string, std::string> mu_aliases;

    for (const auto& key : file.keys()) {
        const auto& v = file.get(key);
        if (key == "train.epochs") cfg.epochs = parse_long(key, v);
        else if (key == "train.max_steps") cfg.max_steps = parse_long(key, v);
        else if (key == "train.seed") cfg.seed = static_cast<std::uint64_t>(parse_long(key, v));
        else if (key == "train.eval_every") cfg.eval_every = parse_long(key, v);
        else if (key == "train.optimizer") {
            static const std::pair<const char*, OptimizerKind> t[] = {
                {"adam", OptimizerKind::adam}, {"sgd", OptimizerKind::sgd_momentum},
                {"sgd_momentum", OptimizerKind::sgd_momentum}};
            cfg.optimizer.kind = parse_enum(key, v, t);
        }
        else if (key == "train.lr") cfg.optimizer.lr = parse_double(key, v);
        else if (key == "train.momentum") cfg.optimizer.momentum = parse_double(key, v);
        else if (key == "train.nesterov") cfg.optimizer.nesterov = parse_bool(key, v);
        else if (key == "train.beta1") cfg.optimizer.beta1 = parse_double(key, v);
        else if (key == "train.beta2") cfg.optimizer.beta2 = parse_double(key, v);
        else if (key == "train.weight_decay") cfg.optimizer.weight_decay = parse_double(key, v);
        else if (key == "model.arch") {
            static const std::pair<const char*, Architecture> t[] = {
                {"mlp", Architecture::mlp}, {"small_cnn", Architecture::small_cnn},
                {"resnet20_lite", Architecture::resnet20_lite}};
            cfg.model.arch = parse_enum(key, v, t);
        }
        else if (key == "model.width") cfg.model.width = parse_double(key, v);
        else if (key == "model.classes") cfg.model.classes = static_cast<std::size_t>(parse_long(key, v));
        else if (key == "model.pretrained_path") cfg.pretrained_path = v;
        else if (key == "quant.clip_family") {
            static const std::pair<const char*, ClipFamily> t[] = {
                {"pact", ClipFamily::pact}, {"interval", ClipFamily::interval}, {"ewgs", ClipFamily::interval},
                {"fixed_unit", ClipFamily::fixed_unit}};
            cfg.model.quant.clip = parse_enum(key, v, t);
        }
        else if (key == "quant.round_family") {
            static const std::pair<const char*, RoundFamily> t[] = {
                {"weight", RoundFamily::weight}, {"activation", RoundFamily::activation}};
            cfg.model.quant.weight_round = parse_enum(key, v, t);
        }
        else if (key == "quant.bits_w") cfg.model.quant.bits_w = static_cast<int>(parse_long(key, v));
        else if (key == "quant.bits_a") cfg.model.quant.bits_a = static_cast<int>(parse_long(key, v));
        else if (key == "quant.pact_init_m") cfg.model.quant.pact_init_m = parse_double(key, v);
        else if (key == "estimator.kind") {
            static const std::pair<const char*, EstimatorKind> t[] = {
                {"ste", EstimatorKind::ste}, {"ewgs", EstimatorKind::ewgs}, {"pege", EstimatorKind::pege}};
            cfg.model.quant.estimator = parse_enum(key, v, t);
        }
        else if (key == "estimator.delta") cfg.model.quant.delta = parse_double(key, v);
        else if (key == "estimator.mu_max" || key == "estimator.k_mu") mu_aliases[key] = v;
        else if (key == "mu.family") cfg.mu.family = parse_family(key, v);
        else if (key == "mu.max") cfg.mu.max = parse_double(key, v);
        else if (key == "mu.k") cfg.mu.k = parse_double(key, v);
        else if (key == "replace.family") {
            cfg.replace.family = parse_family(key, v);
            replace_family_set = true;
        }
        else if (key == "replace.p0") cfg.replace.p0 = parse_double(key, v);
        else if (key == "replace.p_const") cfg.replace.p_const = parse_double(key, v);
        else if (key == "replace.t_full_frac") cfg.replace.t_full_frac = parse_double(key, v);
        else if (key == "replace.base") cfg.replace.base = parse_double(key, v);
        else if (key == "replace.granularity") {
            static const std::pair<const char*, Granularity> t[] = {
                {"global", Granularity::global}, {"per_layer", Granularity::per_layer},
                {"per_element", Granularity::per_element}};
            cfg.replace.granularity = parse_enum(key, v, t);
        }
        else if (key == "replace.activations") cfg.replace.activations = parse_bool(key, v);
        else if (key == "data.name") {
            static const std::pair<const char*, const char*> t[] = {
                {"cifar10", "cifar10"}, {"mnist", "mnist"}, {"synth", "synth"}};
            cfg.data.name = parse_enum(key, v, t);
        }
        else if (key == "data.dir") cfg.data.dir = v;
        else if (key == "data.batch") cfg.data.batch = static_cast<std::size_t>(parse_long(key, v));
        else if (key == "data.augment") cfg.data.augment = parse_bool(key, v);
        else if (key == "data.subset_n") cfg.data.subset_n = static_cast<std::size_t>(parse_long(key, v));
        else if (key == "data.n") cfg.data.synth_n = static_cast<std::size_t>(parse_long(key, v));
        else if (key == "data.test_n") cfg.data.synth_test_n = static_cast<std::size_t>(parse_long(key, v));
        else
            throw ConfigError("unknown config key '" + key + "'");
    }

    const auto alias = [&](const char* alias_key, const char* key, double& field) {
        auto it = mu_aliases.find(alias_key);
        if (it == mu_aliases.end())
            return;
        const double value = parse_double(alias_key, it->second);
        if (file.has(key) && parse_double(key, file.get(key)) != value)
            throw ConfigError(std::string("'") + alias_key + "' conflicts with '" + key + "'");
        field = value;
    };
    alias("estimator.mu_max", "mu.max", cfg.mu.max);
    alias("estimator.k_mu", "mu.k", cfg.mu.k);

    // The baselines train fully quantized unless a schedule is requested.
    if (!replace_family_set && cfg.model.quant.estimator != EstimatorKind::pege)
        cfg.replace.family = ScheduleFamily::none;

    if (!file.has("model.width") && cfg.model.arch == Architecture::resnet20_lite)
        cfg.model.width = 0.25;
    if (cfg.data.name == "cifar10")
        cfg.model.input = {3, 32, 32};
    else if (cfg.data.name == "mnist")
        cfg.model.input = {1, 28, 28};
    else
        cfg.model.input = {1, 8, 8};

    cfg.validate();
    return cfg;
}

inline TrainConfig load_train_config(const std::string& path) { return make_train_config(ConfigFile::load(path)); }

// Training-split size implied by the config, without reading any data.
inline std::size_t nominal_train_size(const TrainConfig& cfg)
{
    std::size_t n = cfg.data.name == "cifar10" ? 50000 : cfg.data.name == "mnist" ? 60000 : cfg.data.synth_n;
    if (cfg.data.subset_n > 0)
        n = std::min(n, cfg.data.subset_n);
    return n;
}

inline long steps_per_epoch(const TrainConfig& cfg, std::size_t train_size)
{
    return static_cast<long>((train_size + cfg.data.batch - 1) / cfg.data.batch);
}

inline long total_steps(const TrainConfig& cfg, std::size_t train_size)
{
    const long full = cfg.epochs * steps_per_epoch(cfg, train_size);
    return cfg.max_steps >= 0 ? std::min(full, cfg.max_steps) : full;
}

/// Schedules resolved against the run length.
struct ResolvedSchedules {
    ReplacementSchedule replace;
    MuSchedule mu;
    long total = 0;
};

inline ResolvedSchedules resolve_schedules(const TrainConfig& cfg, long total)
{
    ResolvedSchedules r;
    r.total = total;
    const double horizon = std::max(1.0, static_cast<double>(total));
    const auto& rc = cfg.replace;
    if (rc.family == ScheduleFamily::none)
        r.replace = ReplacementSchedule::none();
    else if (rc.family == ScheduleFamily::constant)
        r.replace = ReplacementSchedule::constant(rc.p_const);
    else
        r.replace = ReplacementSchedule::from_initial_rate(rc.family, rc.p0, std::max(1.0, rc.t_full_frac * horizon),
                                                           rc.base);
    r.mu.family = cfg.mu.family;
    r.mu.mu_max = cfg.mu.max;
    r.mu.k = cfg.mu.k > 0 ? cfg.mu.k : MuSchedule::rate_reaching_99_at(0.8 * horizon);
    r.mu.validate();
    return r;
}

} // namespace pege

#endif // PEGE_CONFIG_HPP
