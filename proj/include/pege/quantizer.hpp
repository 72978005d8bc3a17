#ifndef PEGE_QUANTIZER_HPP
#define PEGE_QUANTIZER_HPP

#include <pege/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pege {

enum class ClipFamily { pact, interval, fixed_unit };
enum class RoundFamily { activation, weight };

// Bit-width sentinel that turns a quantizer into the identity.
inline constexpr int kFullPrecisionBits = 32;

inline std::string_view to_string(ClipFamily f)
{
    switch (f) {
    case ClipFamily::pact: return "pact";
    case ClipFamily::interval: return "interval";
    case ClipFamily::fixed_unit: return "fixed_unit";
    }
    return "?";
}

inline std::string_view to_string(RoundFamily f)
{
    return f == RoundFamily::activation ? "activation" : "weight";
}

/// Uniform quantizer x_q = R(Clip(x)). The trainable clip parameters live in
/// `alpha`: {m} for PACT (shared with the rounding stage), {p1, p2} for the
/// learned interval, nothing for the fixed unit clamp.
template <class T>
struct QuantizerSpec {
    int bits = 2;
    ClipFamily clip = ClipFamily::interval;
    RoundFamily round = RoundFamily::activation;
    std::vector<T> alpha{T{0}, T{1}};

    static QuantizerSpec pact(int bits, T m) { return {bits, ClipFamily::pact, RoundFamily::activation, {m}}; }

    static QuantizerSpec interval(int bits, RoundFamily round, T p1, T p2)
    {
        return {bits, ClipFamily::interval, round, {p1, p2}};
    }

    static QuantizerSpec fixed_unit(int bits, RoundFamily round) { return {bits, ClipFamily::fixed_unit, round, {}}; }

    static QuantizerSpec full_precision(RoundFamily round = RoundFamily::activation)
    {
        return {kFullPrecisionBits, ClipFamily::fixed_unit, round, {}};
    }

    bool bypass() const { return bits == kFullPrecisionBits; }

    // K_c
    std::size_t clip_param_count() const
    {
        switch (clip) {
        case ClipFamily::pact: return 1;
        case ClipFamily::interval: return 2;
        case ClipFamily::fixed_unit: return 0;
        }
        return 0;
    }

    // K_r; PACT reuses m to denormalize the rounded value.
    std::size_t round_param_count() const { return clip == ClipFamily::pact ? 1 : 0; }

    std::size_t levels() const { return std::size_t{1} << bits; }

    // Output range of the clip stage, [v, m].
    T lower() const { return T{0}; }
    T upper() const { return clip == ClipFamily::pact ? alpha[0] : T{1}; }

    // Factor between clip output and the unit interval the rounding stage works on.
    T unit_scale() const { return clip == ClipFamily::pact ? alpha[0] : T{1}; }

    void validate() const
    {
        if (bypass())
            return;
        if (bits < 1 || bits > 8)
            throw ConfigError("quantizer bit-width must be in [1, 8] or " + std::to_string(kFullPrecisionBits) +
                              ", got " + std::to_string(bits));
        if (alpha.size() != clip_param_count())
            throw ConfigError("quantizer '" + std::string(to_string(clip)) + "' expects " +
                              std::to_string(clip_param_count()) + " parameters");
        switch (clip) {
        case ClipFamily::pact:
            if (round != RoundFamily::activation)
                throw ConfigError("PACT clipping is defined for activations only");
            if (!(alpha[0] > T{0}))
                throw ContractError("PACT upper bound must be positive");
            break;
        case ClipFamily::interval:
            if (!(alpha[1] > alpha[0]))
                throw ContractError("degenerate quantization interval [" + std::to_string(alpha[0]) + ", " +
                                    std::to_string(alpha[1]) + "]");
            break;
        case ClipFamily::fixed_unit:
            break;
        }
    }
};

template <class T>
T clip_value(const QuantizerSpec<T>& spec, T x)
{
    switch (spec.clip) {
    case ClipFamily::pact: {
        const T m = spec.alpha[0];
        return T(0.5) * (std::abs(x) - std::abs(x - m) + m);
    }
    case ClipFamily::interval:
        return std::clamp((x - spec.alpha[0]) / (spec.alpha[1] - spec.alpha[0]), T{0}, T{1});
    case ClipFamily::fixed_unit:
        return std::clamp(x, T{0}, T{1});
    }
    return x;
}

// Unit-domain lattice point round((2^b - 1) u) / (2^b - 1); ties away from zero.
template <class T>
T lattice_value(T unit, int bits)
{
    const T steps = static_cast<T>((1 << bits) - 1);
    return std::round(steps * unit) / steps;
}

/// x_c. PACT lands in [0, m]; the interval and unit families in [0, 1].
template <class T>
std::vector<T> clip_forward(std::span<const T> x, const QuantizerSpec<T>& spec)
{
    if (spec.bypass())
        return {x.begin(), x.end()};
    spec.validate();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = clip_value(spec, x[i]);
    return out;
}

/// R(x_c) on unit-domain input. Activations map to {0, 1/(2^b-1), ..., 1},
/// weights to 2 (lattice - 1/2) in [-1, 1].
template <class T>
std::vector<T> round_forward(std::span<const T> unit_clipped, const QuantizerSpec<T>& spec)
{
    if (spec.bypass())
        return {unit_clipped.begin(), unit_clipped.end()};
    std::vector<T> out(unit_clipped.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T q = lattice_value(unit_clipped[i], spec.bits);
        out[i] = spec.round == RoundFamily::weight ? T{2} * (q - T(0.5)) : q;
    }
    return out;
}

template <class T>
struct QuantizeResult {
    std::vector<T> clipped;      // x_c in clip-output units
    std::vector<T> quantized;    // x_q in output units
    std::vector<T> unit_clipped; // x_c / unit_scale, in [0, 1]
    std::vector<T> lattice;      // rounded unit value, in [0, 1]
};

/// Full forward quantizer. The unit-domain pair (unit_clipped, lattice) is
/// what the backward estimators compare; for PACT the output is denormalized
/// by m after rounding.
template <class T>
QuantizeResult<T> quantize(std::span<const T> x, const QuantizerSpec<T>& spec)
{
    QuantizeResult<T> r;
    if (spec.bypass()) {
        r.clipped.assign(x.begin(), x.end());
        r.quantized = r.unit_clipped = r.lattice = r.clipped;
        return r;
    }
    r.clipped = clip_forward(x, spec);
    const T scale = spec.unit_scale();
    r.unit_clipped.resize(x.size());
    r.lattice.resize(x.size());
    r.quantized.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T u = spec.clip == ClipFamily::pact ? r.clipped[i] / scale : r.clipped[i];
        const T q = lattice_value(u, spec.bits);
        r.unit_clipped[i] = u;
        r.lattice[i] = q;
        if (spec.clip == ClipFamily::pact)
            r.quantized[i] = scale * q;
        else
            r.quantized[i] = spec.round == RoundFamily::weight ? T{2} * (q - T(0.5)) : q;
    }
    return r;
}

// True where the clip stage is strictly inside its linear region.
template <class T>
bool clip_active(const QuantizerSpec<T>& spec, T x)
{
    switch (spec.clip) {
    case ClipFamily::pact: return x > T{0} && x < spec.alpha[0];
    case ClipFamily::interval: return x > spec.alpha[0] && x < spec.alpha[1];
    case ClipFamily::fixed_unit: return x > T{0} && x < T{1};
    }
    return true;
}

// d x_c / d x inside the active region.
template <class T>
T clip_slope(const QuantizerSpec<T>& spec)
{
    return spec.clip == ClipFamily::interval ? T{1} / (spec.alpha[1] - spec.alpha[0]) : T{1};
}

/// Gradient of sum(upstream * x_c) with respect to alpha, taken through the
/// clip stage only (the round stage is treated as identity). `upstream` is
/// dL/dx_c in clip-output units.
///   PACT:     d/dm = 1 where x >= m.
///   interval: affine clamp chain rule, zero outside (p1, p2).
template <class T>
std::vector<T> clip_param_grad(const QuantizerSpec<T>& spec, std::span<const T> x, std::span<const T> upstream)
{
    if (x.size() != upstream.size())
        throw DimensionError("clip_param_grad: input and upstream sizes differ");
    if (spec.bypass())
        return {};
    std::vector<T> grad(spec.clip_param_count(), T{0});
    switch (spec.clip) {
    case ClipFamily::pact:
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] >= spec.alpha[0])
                grad[0] += upstream[i];
        break;
    case ClipFamily::interval: {
        const T p1 = spec.alpha[0], p2 = spec.alpha[1];
        const T width = p2 - p1;
        const T inv_sq = T{1} / (width * width);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i] > p1 && x[i] < p2))
                continue;
            grad[0] += upstream[i] * (x[i] - p2) * inv_sq;
            grad[1] -= upstream[i] * (x[i] - p1) * inv_sq;
        }
        break;
    }
    case ClipFamily::fixed_unit:
        break;
    }
    return grad;
}

/// Warm start for the interval family: [min, max] of the observed values,
/// widened when every value is identical.
template <class T>
std::vector<T> interval_from_range(std::span<const T> values)
{
    if (values.empty())
        return {T{0}, T{1}};
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    T p1 = *lo, p2 = *hi;
    if (!(p2 > p1)) {
        p1 -= T(0.5);
        p2 += T(0.5);
    }
    return {p1, p2};
}

} // namespace pege

#endif // PEGE_QUANTIZER_HPP
