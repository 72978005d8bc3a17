#ifndef PEGE_CURRICULUM_HPP
#define PEGE_CURRICULUM_HPP

#include <pege/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pege {

enum class ScheduleFamily { constant, linear, logarithmic, exponential, cosine, none };

inline std::string_view to_string(ScheduleFamily f)
{
    switch (f) {
    case ScheduleFamily::constant: return "constant";
    case ScheduleFamily::linear: return "linear";
    case ScheduleFamily::logarithmic: return "logarithmic";
    case ScheduleFamily::exponential: return "exponential";
    case ScheduleFamily::cosine: return "cosine";
    case ScheduleFamily::none: return "none";
    }
    return "?";
}

/// Replacing-rate schedule p_T. The logarithmic family is
///   p_T = min(log_B(k T + offset), 1)
/// and is normally built from the operational pair (initial rate p0, step
/// t_full at which p reaches 1): offset = B^p0, k = (B - offset) / t_full.
/// The other growing families share p0 and t_full.
struct ReplacementSchedule {
    ScheduleFamily family = ScheduleFamily::logarithmic;
    double p0 = 0.3;
    double t_full = 1000;
    double base = 10;
    double coeff = (10 - 1.9952623149688795) / 1000;
    double offset = 1.9952623149688795;
    double p_const = 0.8;

    static ReplacementSchedule from_initial_rate(ScheduleFamily family, double p0, double t_full, double base = 10)
    {
        ReplacementSchedule s;
        s.family = family;
        s.p0 = p0;
        s.t_full = t_full;
        s.base = base;
        s.offset = std::pow(base, p0);
        s.coeff = (base - s.offset) / t_full;
        s.validate();
        return s;
    }

    static ReplacementSchedule constant(double p)
    {
        ReplacementSchedule s;
        s.family = ScheduleFamily::constant;
        s.p_const = p;
        s.validate();
        return s;
    }

    static ReplacementSchedule none()
    {
        ReplacementSchedule s;
        s.family = ScheduleFamily::none;
        return s;
    }

    void validate() const
    {
        switch (family) {
        case ScheduleFamily::none:
            return;
        case ScheduleFamily::constant:
            if (!(p_const >= 0 && p_const <= 1))
                throw ConfigError("constant replacing rate must be in [0, 1]");
            return;
        case ScheduleFamily::logarithmic:
            if (!(base > 1))
                throw ConfigError("logarithmic schedule base must exceed 1");
            if (!(coeff > 0))
                throw ConfigError("logarithmic schedule coefficient must be positive");
            if (!(offset >= 1) || std::log(offset) / std::log(base) > 1)
                throw ConfigError("logarithmic schedule offset must satisfy log_B(offset) in [0, 1]");
            break;
        case ScheduleFamily::exponential:
            if (!(p0 > 0))
                throw ConfigError("exponential schedule needs a positive initial rate");
            break;
        default:
            break;
        }
        if (!(p0 >= 0 && p0 <= 1))
            throw ConfigError("initial replacing rate must be in [0, 1]");
        if (!(t_full > 0))
            throw ConfigError("full-replacement step must be positive");
    }
};

/// Discretization-error weight mu_T. The exponential family is
///   mu_T = mu_max (1 - exp(-k T));
/// the others reach mu_max at `horizon()`, the step where the exponential
/// curve reaches 99% of mu_max.
struct MuSchedule {
    ScheduleFamily family = ScheduleFamily::exponential;
    double mu_max = 0.1;
    double k = 1e-3;
    double base = 10;

    // Rate so that the exponential curve reaches 0.99 mu_max at `step`.
    static double rate_reaching_99_at(double step) { return std::log(100.0) / step; }

    double horizon() const { return std::log(100.0) / k; }

    void validate() const
    {
        if (!(mu_max >= 0))
            throw ConfigError("mu_max must be non-negative");
        if (!(k > 0))
            throw ConfigError("mu growth rate must be positive");
        if (family == ScheduleFamily::logarithmic && !(base > 1))
            throw ConfigError("logarithmic mu schedule base must exceed 1");
    }
};

inline double replacement_rate_at(const ReplacementSchedule& s, long step)
{
    if (step < 0)
        throw ContractError("replacement_rate_at: negative step");
    const double t = static_cast<double>(step);
    const double frac = std::min(t / s.t_full, 1.0);
    double p = 1.0;
    switch (s.family) {
    case ScheduleFamily::none:
        return 1.0;
    case ScheduleFamily::constant:
        return s.p_const;
    case ScheduleFamily::linear:
        p = s.p0 + (1 - s.p0) * frac;
        break;
    case ScheduleFamily::logarithmic: {
        // The clamp engages where k T + offset reaches B; testing both forms
        // avoids a 1 - ulp value at exactly t_full.
        const double arg = s.coeff * t + s.offset;
        if (t >= s.t_full || arg >= s.base)
            return 1.0;
        p = std::log(arg) / std::log(s.base);
        break;
    }
    case ScheduleFamily::exponential:
        if (t >= s.t_full)
            return 1.0;
        p = s.p0 * std::pow(1.0 / s.p0, frac);
        break;
    case ScheduleFamily::cosine:
        p = s.p0 + (1 - s.p0) * 0.5 * (1 - std::cos(std::numbers::pi * frac));
        break;
    }
    return std::clamp(p, 0.0, 1.0);
}

inline double mu_at(const MuSchedule& s, long step)
{
    if (step < 0)
        throw ContractError("mu_at: negative step");
    const double t = static_cast<double>(step);
    const double frac = std::min(t / s.horizon(), 1.0);
    double mu = 0;
    switch (s.family) {
    case ScheduleFamily::none:
        return 0.0;
    case ScheduleFamily::constant:
        return s.mu_max;
    case ScheduleFamily::exponential:
        mu = s.mu_max * (1 - std::exp(-s.k * t));
        break;
    case ScheduleFamily::linear:
        mu = s.mu_max * frac;
        break;
    case ScheduleFamily::logarithmic: {
        const double slope = (s.base - 1) / s.horizon();
        mu = s.mu_max * std::min(std::log(slope * t + 1) / std::log(s.base), 1.0);
        break;
    }
    case ScheduleFamily::cosine:
        mu = s.mu_max * 0.5 * (1 - std::cos(std::numbers::pi * frac));
        break;
    }
    return std::clamp(mu, 0.0, s.mu_max);
}

// Cosine annealing from eta0 at step 0 to exactly 0 at t_max.
inline double lr_at(double eta0, long step, long t_max)
{
    if (step < 0 || step > t_max)
        throw ContractError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(t_max) + "]");
    if (step == t_max)
        return 0.0;
    return eta0 * 0.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(t_max)));
}

// ---------------------------------------------------------------------------
// Bernoulli precision replacement

enum class Granularity { global, per_layer, per_element };

inline std::string_view to_string(Granularity g)
{
    switch (g) {
    case Granularity::global: return "global";
    case Granularity::per_layer: return "per_layer";
    case Granularity::per_element: return "per_element";
    }
    return "?";
}

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based uniform in [0, 1): a pure function of its coordinates, so
/// draws do not depend on the order layers are visited in.
inline double counter_uniform(std::uint64_t seed, std::uint64_t step, std::uint64_t stream, std::uint64_t element)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ element);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline bool bernoulli_draw(double p, std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
                           std::uint64_t element)
{
    return counter_uniform(seed, step, stream, element) < p;
}

// A mask of size 1 applies to every element of its tensor.
using ReplacementMask = std::vector<std::uint8_t>;

struct ReplacementState {
    std::uint64_t seed = 0;
    long step = 0;
    Granularity granularity = Granularity::per_layer;
    std::vector<ReplacementMask> last_mask;
};

/// r_T ~ Bernoulli(p_T), one mask per layer. `stream_base` separates
/// independent consumers (weights vs activations) under the same seed.
inline std::vector<ReplacementMask> sample_replacement(ReplacementState& state, double p,
                                                       std::span<const std::size_t> layer_sizes,
                                                       std::uint64_t stream_base = 0)
{
    if (!(p >= 0 && p <= 1))
        throw ContractError("sample_replacement: rate must be in [0, 1]");
    const auto step = static_cast<std::uint64_t>(state.step);
    std::vector<ReplacementMask> masks(layer_sizes.size());
    for (std::size_t layer = 0; layer < layer_sizes.size(); ++layer) {
        switch (state.granularity) {
        case Granularity::global:
            masks[layer] = {static_cast<std::uint8_t>(bernoulli_draw(p, state.seed, step, stream_base, 0))};
            break;
        case Granularity::per_layer:
            masks[layer] = {static_cast<std::uint8_t>(bernoulli_draw(p, state.seed, step, stream_base + layer, 0))};
            break;
        case Granularity::per_element:
            masks[layer].resize(layer_sizes[layer]);
            for (std::size_t e = 0; e < layer_sizes[layer]; ++e)
                masks[layer][e] = static_cast<std::uint8_t>(bernoulli_draw(p, state.seed, step, stream_base + layer, e));
            break;
        }
    }
    state.last_mask = masks;
    return masks;
}

inline bool mask_bit(const ReplacementMask& mask, std::size_t i)
{
    return mask.size() == 1 ? mask[0] != 0 : mask[i] != 0;
}

/// Selects the quantized value where the mask bit is 1, the full-precision
/// value otherwise.
template <class T>
std::vector<T> mix_precision(std::span<const T> full, std::span<const T> quantized, const ReplacementMask& mask)
{
    if (full.size() != quantized.size())
        throw DimensionError("mix_precision: full-precision and quantized sizes differ");
    if (mask.size() != 1 && mask.size() != full.size())
        throw DimensionError("mix_precision: mask of " + std::to_string(mask.size()) + " bits for " +
                             std::to_string(full.size()) + " elements");
    std::vector<T> out(full.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = mask_bit(mask, i) ? quantized[i] : full[i];
    return out;
}

} // namespace pege

#endif // PEGE_CURRICULUM_HPP
