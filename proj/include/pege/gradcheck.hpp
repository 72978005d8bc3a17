#ifndef PEGE_GRADCHECK_HPP
#define PEGE_GRADCHECK_HPP

#include <pege/estimators.hpp>
#include <pege/finite_diff.hpp>
#include <pege/layers.hpp>
#include <pege/ops.hpp>
#include <pege/quantizer.hpp>
#include <pege/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace pege {

struct GradCheckResult {
    std::string op;
    int instances = 0;
    double max_error = 0;
    bool passed = false;
    std::string detail;
};

struct GradCheckOptions {
    int instances = 10;
    std::uint64_t seed = 1;
    double tolerance = 1e-4;
    double step = 1e-6;
};

namespace detail {

using Fn64 = std::function<Tensor64(const std::vector<Tensor64>&)>;

inline std::vector<double> normal_values(std::size_t n, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v)
        x = d(rng);
    return v;
}

// Values at least `gap` away from every kink in `kinks`.
inline std::vector<double> away_from(std::size_t n, std::mt19937_64& rng, std::vector<double> kinks, double lo,
                                     double hi, double gap)
{
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) {
        do
            x = d(rng);
        while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < gap; }));
    }
    return v;
}

// Relative error between the recorded gradient and central differences,
// worst over all inputs. The scalar is sum(op(inputs) * R) for a fixed
// random R, so every output element carries a distinct weight.
inline double compare_gradients(const Fn64& op, std::vector<Tensor64> inputs, std::mt19937_64& rng, double h)
{
    const Shape out_shape = [&] {
        NoGradGuard g;
        return op(inputs).shape();
    }();
    const auto weights = Tensor64::constant(out_shape, normal_values(numel(out_shape), rng));
    const auto objective = [&](const std::vector<Tensor64>& in) {
        const auto y = op(in);
        return sum(mul(y, weights));
    };
    for (auto& t : inputs)
        t = Tensor64::parameter(t.shape(), t.values());
    backward(objective(inputs));
    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto numeric = finite_diff_grad<double>(
            [&](const Tensor64& probe) {
                auto in = inputs;
                in[i] = probe;
                return objective(in);
            },
            inputs[i], h);
        std::vector<double> analytic(inputs[i].size(), 0.0);
        if (inputs[i].has_grad())
            analytic.assign(inputs[i].grad().begin(), inputs[i].grad().end());
        worst = std::max(worst, relative_error<double>(analytic, numeric.data()));
    }
    return worst;
}

struct Case {
    std::vector<Tensor64> inputs;
    Fn64 op;
};

inline Case make_case(const std::string& name, std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> small(1, 4);
    const auto c = [](Shape s, std::vector<double> v) { return Tensor64::constant(std::move(s), std::move(v)); };
    if (name == "matmul") {
        const std::size_t m = small(rng), k = small(rng) + 1, n = small(rng);
        return {{c({m, k}, normal_values(m * k, rng)), c({k, n}, normal_values(k * n, rng))},
                [](const auto& in) { return matmul(in[0], in[1]); }};
    }
    if (name == "conv2d") {
        const std::size_t n = small(rng) % 2 + 1, ch = small(rng) % 3 + 1, f = small(rng) % 3 + 1;
        const std::size_t k = rng() % 2 ? 3 : 1, stride = rng() % 2 + 1, pad = k == 3 ? rng() % 2 : 0;
        const std::size_t hw = 4 + rng() % 3;
        return {{c({n, ch, hw, hw}, normal_values(n * ch * hw * hw, rng)),
                 c({f, ch, k, k}, normal_values(f * ch * k * k, rng))},
                [stride, pad](const auto& in) { return conv2d(in[0], in[1], stride, pad); }};
    }
    if (name == "relu") {
        const std::size_t n = 4 + rng() % 12;
        return {{c({n}, away_from(n, rng, {0.0}, -2, 2, 0.05))}, [](const auto& in) { return relu(in[0]); }};
    }
    if (name == "cross_entropy") {
        const std::size_t n = small(rng), k = small(rng) + 1;
        std::vector<int> labels(n);
        for (auto& l : labels)
            l = static_cast<int>(rng() % k);
        return {{c({n, k}, normal_values(n * k, rng, 2.0))},
                [labels](const auto& in) { return cross_entropy(in[0], std::span<const int>(labels)); }};
    }
    if (name == "add_bias") {
        const std::size_t n = small(rng), f = small(rng);
        return {{c({n, f}, normal_values(n * f, rng)), c({f}, normal_values(f, rng))},
                [](const auto& in) { return add_bias(in[0], in[1]); }};
    }
    if (name == "max_pool2d") {
        const std::size_t ch = small(rng) % 2 + 1;
        // A random permutation keeps every window's maximum unique.
        std::vector<double> v(ch * 16);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = 0.1 * static_cast<double>(i);
        std::shuffle(v.begin(), v.end(), rng);
        return {{c({1, ch, 4, 4}, v)}, [](const auto& in) { return max_pool2d(in[0], 2); }};
    }
    if (name == "global_avg_pool") {
        const std::size_t n = small(rng) % 2 + 1, ch = small(rng);
        return {{c({n, ch, 3, 3}, normal_values(n * ch * 9, rng))},
                [](const auto& in) { return global_avg_pool(in[0]); }};
    }
    if (name == "batch_norm") {
        const std::size_t n = 2 + rng() % 3, ch = small(rng) % 3 + 1;
        return {{c({n, ch, 2, 2}, normal_values(n * ch * 4, rng)), c({ch}, normal_values(ch, rng)),
                 c({ch}, normal_values(ch, rng))},
                [ch](const auto& in) {
                    std::vector<double> mean(ch, 0.0), var(ch, 1.0);
                    return batch_norm(in[0], in[1], in[2], std::span<double>(mean), std::span<double>(var), true);
                }};
    }
    if (name == "clip_pact") {
        const double m = 0.5 + static_cast<double>(rng() % 100) / 50.0;
        const std::size_t n = 4 + rng() % 12;
        return {{c({n}, away_from(n, rng, {0.0, m}, -1, m + 1, 0.05)), c({1}, {m})},
                [](const auto& in) { return clip_node(in[0], in[1], QuantizerSpec<double>::pact(2, 1.0)); }};
    }
    if (name == "clip_interval") {
        const double p1 = -1.0 + static_cast<double>(rng() % 50) / 50.0;
        const double p2 = p1 + 0.5 + static_cast<double>(rng() % 50) / 25.0;
        const std::size_t n = 4 + rng() % 12;
        return {{c({n}, away_from(n, rng, {p1, p2}, p1 - 1, p2 + 1, 0.05)), c({2}, {p1, p2})},
                [](const auto& in) {
                    return clip_node(in[0], in[1], QuantizerSpec<double>::interval(2, RoundFamily::activation, 0, 1));
                }};
    }
    if (name == "clip_fixed_unit") {
        const std::size_t n = 4 + rng() % 12;
        return {{c({n}, away_from(n, rng, {0.0, 1.0}, -1, 2, 0.05))}, [](const auto& in) {
                    return clip_node(in[0], Tensor64{}, QuantizerSpec<double>::fixed_unit(2, RoundFamily::activation));
                }};
    }
    throw ContractError("gradcheck: unknown op '" + name + "'");
}

// Estimator identities over random tuples: PEGE - STE == mu (x_c - x_q) to
// a few ulps, and mu = 0 / delta = 0 reproduce STE bitwise.
inline GradCheckResult estimator_identities(const GradCheckOptions& opts)
{
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0), grad(-2.0, 2.0), mu_d(0.0, 1.0);
    constexpr std::size_t n = 1000;
    std::vector<double> g(n), xc(n), xq(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = grad(rng);
        xc[i] = unit(rng);
        xq[i] = lattice_value(xc[i], 2);
    }
    GradCheckResult r{"estimators", static_cast<int>(n), 0.0, true, {}};
    const ClipBounds<double> open{-1.0, 2.0}; // nothing saturates
    const auto ste = ste_backward<double>(g, xc, xq, open);
    for (int trial = 0; trial < opts.instances; ++trial) {
        const double mu = mu_d(rng);
        const auto pege = pege_backward<double>(g, xc, xq, mu, open);
        for (std::size_t i = 0; i < n; ++i) {
            const double expect = mu * (xc[i] - xq[i]);
            const double err = std::abs((pege[i] - ste[i]) - expect);
            const double ulp = 4 * std::numeric_limits<double>::epsilon() * std::max({std::abs(g[i]), std::abs(expect), 1e-300});
            r.max_error = std::max(r.max_error, err);
            if (err > ulp) {
                r.passed = false;
                r.detail = "pege - ste != mu (x_c - x_q) at element " + std::to_string(i);
            }
        }
    }
    const auto pege0 = pege_backward<double>(g, xc, xq, 0.0, open);
    const auto ewgs0 = ewgs_backward<double>(g, xc, xq, 0.0, open);
    if (pege0 != ste || ewgs0 != ste) {
        r.passed = false;
        r.detail = "mu = 0 or delta = 0 does not reproduce STE bitwise";
    }
    return r;
}

// quantize_node with STE equals the derivative of the unrounded surrogate;
// switching to PEGE shifts it by exactly mu (x_c - x_q) * slope.
inline GradCheckResult quantize_node_check(const GradCheckOptions& opts)
{
    std::mt19937_64 rng(opts.seed);
    GradCheckResult r{"quantize", opts.instances, 0.0, true, {}};
    for (int trial = 0; trial < opts.instances; ++trial) {
        const double p1 = -1.0 + static_cast<double>(rng() % 50) / 100.0;
        const double p2 = p1 + 1.0 + static_cast<double>(rng() % 50) / 50.0;
        const auto round = trial % 2 ? RoundFamily::weight : RoundFamily::activation;
        const auto spec = QuantizerSpec<double>::interval(2, round, p1, p2);
        const std::size_t n = 6 + rng() % 10;
        const auto xv = away_from(n, rng, {p1, p2}, p1 - 0.5, p2 + 0.5, 0.05);
        const auto weights = normal_values(n, rng);
        const double mu = 0.05 + static_cast<double>(rng() % 10) / 20.0;

        const auto grad_with = [&](EstimatorKind kind) {
            auto x = Tensor64::parameter({n}, xv);
            auto alpha = Tensor64::constant({2}, {p1, p2});
            EstimatorConfig<double> est{kind, kind == EstimatorKind::pege ? mu : 0.0};
            backward(sum(mul(quantize_node(x, alpha, spec, est, ReplacementMask{1}), Tensor64::constant({n}, weights))));
            return std::vector<double>(x.grad().begin(), x.grad().end());
        };
        const auto ste = grad_with(EstimatorKind::ste);
        const auto pege = grad_with(EstimatorKind::pege);

        const double factor = round == RoundFamily::weight ? 2.0 : 1.0;
        const auto surrogate = [&](const Tensor64& x) {
            return sum(mul(scale(clip_node(x, Tensor64::constant({2}, {p1, p2}), spec), factor),
                           Tensor64::constant({n}, weights)));
        };
        const auto numeric = finite_diff_grad<double>(surrogate, Tensor64::constant({n}, xv), opts.step);
        r.max_error = std::max(r.max_error, relative_error<double>(ste, numeric.data()));

        const auto q = quantize<double>(xv, spec);
        const double slope = clip_slope(spec);
        for (std::size_t i = 0; i < n; ++i) {
            const double expect = clip_active(spec, xv[i]) ? mu * (q.unit_clipped[i] - q.lattice[i]) * slope : 0.0;
            if (std::abs((pege[i] - ste[i]) - expect) > 1e-12 * std::max(1.0, std::abs(ste[i]))) {
                r.passed = false;
                r.detail = "PEGE shift at the quantize node differs from mu (x_c - x_q)";
            }
        }
    }
    if (r.max_error > opts.tolerance) {
        r.passed = false;
        r.detail = "STE gradient differs from the clip surrogate";
    }
    return r;
}

} // namespace detail

inline std::vector<std::string> gradcheck_ops()
{
    return {"matmul",     "conv2d",         "relu",       "cross_entropy", "add_bias",
            "max_pool2d", "global_avg_pool", "batch_norm", "clip_pact",     "clip_interval",
            "clip_fixed_unit", "quantize",   "estimators"};
}

/// Finite-difference check of one op over `opts.instances` random instances at 64-bit.
inline GradCheckResult run_gradcheck(const std::string& op, const GradCheckOptions& opts = {})
{
    if (op == "estimators")
        return detail::estimator_identities(opts);
    if (op == "quantize")
        return detail::quantize_node_check(opts);
    std::uint64_t key = opts.seed;
    for (unsigned char ch : op)
        key = splitmix64(key ^ ch);
    std::mt19937_64 rng(key);
    GradCheckResult r{op, opts.instances, 0.0, true, {}};
    for (int i = 0; i < opts.instances; ++i) {
        auto c = detail::make_case(op, rng);
        r.max_error = std::max(r.max_error, detail::compare_gradients(c.op, c.inputs, rng, opts.step));
    }
    r.passed = r.max_error <= opts.tolerance;
    if (!r.passed)
        r.detail = "relative error above " + std::to_string(opts.tolerance);
    return r;
}

inline std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& opts = {})
{
    std::vector<GradCheckResult> out;
    for (const auto& op : gradcheck_ops())
        out.push_back(run_gradcheck(op, opts));
    return out;
}

} // namespace pege

#endif // PEGE_GRADCHECK_HPP
