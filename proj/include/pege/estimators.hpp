#ifndef PEGE_ESTIMATORS_HPP
#define PEGE_ESTIMATORS_HPP

#include <pege/error.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pege {

enum class EstimatorKind { ste, ewgs, pege };

inline std::string_view to_string(EstimatorKind k)
{
    switch (k) {
    case EstimatorKind::ste: return "ste";
    case EstimatorKind::ewgs: return "ewgs";
    case EstimatorKind::pege: return "pege";
    }
    return "?";
}

/// Backward rule at a quantization node. `mu` is the per-step value the
/// trainer takes from the mu schedule; `delta` scales the EWGS baseline.
template <class T>
struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::pege;
    T mu = T{0};
    T delta = T(1e-3);

    void validate() const
    {
        if (mu < T{0})
            throw ConfigError("estimator mu must be non-negative");
        if (delta < T{0})
            throw ConfigError("estimator delta must be non-negative");
    }
};

template <class T>
struct ClipBounds {
    T lower = T{0};
    T upper = T{1};

    bool saturated(T x_c) const { return x_c <= lower || x_c >= upper; }
};

template <class T>
T sign_of(T v)
{
    return static_cast<T>((T{0} < v) - (v < T{0}));
}

/// dL/dx_c for one element before clip gating.
template <class T>
T estimate_element(const EstimatorConfig<T>& cfg, T g_q, T x_c, T x_q)
{
    switch (cfg.kind) {
    case EstimatorKind::ste:
        return g_q;
    case EstimatorKind::ewgs:
        return g_q * (T{1} + cfg.delta * sign_of(g_q) * (x_c - x_q));
    case EstimatorKind::pege:
        return g_q + cfg.mu * (x_c - x_q);
    }
    return g_q;
}

/// Applies `cfg` elementwise and zeroes elements whose x_c sits on a clip
/// bound (the clip stage has zero derivative there whatever the estimator).
template <class T>
std::vector<T> estimate(const EstimatorConfig<T>& cfg, std::span<const T> g_q, std::span<const T> x_c,
                        std::span<const T> x_q, ClipBounds<T> bounds = {})
{
    if (g_q.size() != x_c.size() || g_q.size() != x_q.size())
        throw DimensionError("estimator: gradient, x_c and x_q sizes differ (" + std::to_string(g_q.size()) +
                             ", " + std::to_string(x_c.size()) + ", " + std::to_string(x_q.size()) + ")");
    std::vector<T> g_c(g_q.size());
    for (std::size_t i = 0; i < g_c.size(); ++i)
        g_c[i] = bounds.saturated(x_c[i]) ? T{0} : estimate_element(cfg, g_q[i], x_c[i], x_q[i]);
    return g_c;
}

// dL/dx_c = dL/dx_q
template <class T>
std::vector<T> ste_backward(std::span<const T> g_q, std::span<const T> x_c, std::span<const T> x_q,
                            ClipBounds<T> bounds = {})
{
    return estimate<T>({EstimatorKind::ste}, g_q, x_c, x_q, bounds);
}

// g (1 + delta sign(g) (x_c - x_q))
template <class T>
std::vector<T> ewgs_backward(std::span<const T> g_q, std::span<const T> x_c, std::span<const T> x_q, T delta,
                             ClipBounds<T> bounds = {})
{
    if (delta < T{0})
        throw ContractError("ewgs_backward: delta must be non-negative");
    return estimate<T>({EstimatorKind::ewgs, T{0}, delta}, g_q, x_c, x_q, bounds);
}

// g + mu (x_c - x_q)
template <class T>
std::vector<T> pege_backward(std::span<const T> g_q, std::span<const T> x_c, std::span<const T> x_q, T mu,
                             ClipBounds<T> bounds = {})
{
    if (mu < T{0})
        throw ContractError("pege_backward: mu must be non-negative");
    return estimate<T>({EstimatorKind::pege, mu}, g_q, x_c, x_q, bounds);
}

} // namespace pege

#endif // PEGE_ESTIMATORS_HPP
