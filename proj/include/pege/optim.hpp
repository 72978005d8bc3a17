#ifndef PEGE_OPTIM_HPP
#define PEGE_OPTIM_HPP

#include <pege/config.hpp>
#include <pege/error.hpp>
#include <pege/layers.hpp>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace pege {

namespace detail {

inline void require_sizes(std::size_t p, std::size_t g, std::size_t s, const char* op)
{
    if (p != g || p != s)
        throw DimensionError(std::string(op) + ": parameter, gradient and state sizes differ");
}

} // namespace detail

// v <- momentum v + g;  p <- p - lr (momentum v + g) if nesterov else p - lr v
template <class T>
void sgd_momentum_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, double lr,
                       double momentum = 0.9, bool nesterov = false)
{
    detail::require_sizes(params.size(), grads.size(), velocity.size(), "sgd_momentum_step");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double v = momentum * velocity[i] + grads[i];
        velocity[i] = static_cast<T>(v);
        const double dir = nesterov ? momentum * v + grads[i] : v;
        params[i] = static_cast<T>(params[i] - lr * dir);
    }
}

// Bias-corrected Adam; `step` is 1 for the first update.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, long step, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
{
    detail::require_sizes(params.size(), grads.size(), m.size(), "adam_step");
    detail::require_sizes(params.size(), grads.size(), v.size(), "adam_step");
    if (step < 1)
        throw ContractError("adam_step: step counter starts at 1");
    const double c1 = 1 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double mi = beta1 * m[i] + (1 - beta1) * g;
        const double vi = beta2 * v[i] + (1 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        params[i] = static_cast<T>(params[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
    }
}

/// Applies one of the update rules to a parameter set. Weight decay is
/// added to the gradient of parameters flagged `decay` only (conv/linear
/// weights; not biases, normalization affines or quantizer alphas).
template <class T>
class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, std::vector<NamedTensor<T>> params) : cfg_(cfg), params_(std::move(params))
    {
        for (const auto& p : params_) {
            first_.emplace_back(p.tensor.size(), T{0});
            second_.emplace_back(cfg_.kind == OptimizerKind::adam ? p.tensor.size() : 0, T{0});
        }
    }

    void step(double lr)
    {
        ++steps_;
        std::vector<T> g;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& t = params_[i].tensor;
            if (t.has_grad())
                g.assign(t.grad().begin(), t.grad().end());
            else
                g.assign(t.size(), T{0});
            if (params_[i].decay && cfg_.weight_decay > 0)
                for (std::size_t k = 0; k < g.size(); ++k)
                    g[k] += static_cast<T>(cfg_.weight_decay * t.data()[k]);
            if (cfg_.kind == OptimizerKind::adam)
                adam_step<T>(t.mutable_data(), g, first_[i], second_[i], steps_, lr, cfg_.beta1, cfg_.beta2, cfg_.eps);
            else
                sgd_momentum_step<T>(t.mutable_data(), g, first_[i], lr, cfg_.momentum, cfg_.nesterov);
        }
    }

    long steps() const { return steps_; }
    void set_steps(long s) { steps_ = s; }
    const std::vector<NamedTensor<T>>& params() const { return params_; }
    std::vector<std::vector<T>>& first_moments() { return first_; }
    std::vector<std::vector<T>>& second_moments() { return second_; }
    const std::vector<std::vector<T>>& first_moments() const { return first_; }
    const std::vector<std::vector<T>>& second_moments() const { return second_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    std::vector<NamedTensor<T>> params_;
    std::vector<std::vector<T>> first_, second_;
    long steps_ = 0;
};

} // namespace pege

#endif // PEGE_OPTIM_HPP
