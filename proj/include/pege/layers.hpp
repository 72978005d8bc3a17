#ifndef PEGE_LAYERS_HPP
#define PEGE_LAYERS_HPP

#include <pege/curriculum.hpp>
#include <pege/error.hpp>
#include <pege/estimators.hpp>
#include <pege/ops.hpp>
#include <pege/quantizer.hpp>
#include <pege/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pege {

enum class Mode { train, eval };

/// Per-step inputs to a forward pass: the scheduled replacing rate and mu,
/// plus the keys the Bernoulli masks are drawn from.
template <class T>
struct StepContext {
    Mode mode = Mode::eval;
    long step = 0;
    double rate = 1.0;
    T mu = T{0};
    std::uint64_t seed = 0;
    Granularity granularity = Granularity::per_layer;
    bool replace_activations = false;
    // Initialize uncalibrated activation quantizers from this batch.
    bool calibrate = false;
    // Weight masks indexed by quantized-layer index; empty means all ones.
    std::vector<ReplacementMask> weight_masks;
};

// Stream keys for activation masks start here; weight masks use the layer index.
inline constexpr std::uint64_t kActivationStreamBase = std::uint64_t{1} << 32;

/// Custom-backward quantization node: out = mask ? Quant(x) : x.
///
/// Backward, per element:
///   not replaced -> identity (full-precision path);
///   replaced     -> g_c = estimator(dL/dx_q, unit x_c, unit x_q), then the
///                   clip derivative: g_c * slope inside the clip region, 0 on
///                   saturated elements. g_c also feeds the clip-parameter
///                   gradient.
/// dL/dx_q is taken at the rounding stage: for the weight family the
/// 2 (q - 1/2) map contributes a factor 2. PACT keeps output units for the
/// gradient and compares normalized x_c and x_q.
template <class T>
Tensor<T> quantize_node(const Tensor<T>& x, const Tensor<T>& alpha, QuantizerSpec<T> spec,
                        const EstimatorConfig<T>& estimator, const ReplacementMask& mask)
{
    if (spec.bypass())
        return x;
    if (alpha.defined())
        spec.alpha.assign(alpha.data().begin(), alpha.data().end());
    else
        spec.alpha.clear();
    spec.validate();
    if (mask.size() != 1 && mask.size() != x.size())
        throw DimensionError("quantize_node: mask of " + std::to_string(mask.size()) + " bits for " +
                             std::to_string(x.size()) + " elements");

    auto q = quantize<T>(x.data(), spec);
    auto out = mix_precision<T>(x.data(), q.quantized, mask);

    std::vector<Tensor<T>> inputs{x};
    if (alpha.defined())
        inputs.push_back(alpha);
    const bool has_alpha = alpha.defined();
    return make_result<T>(x.shape(), std::move(out), std::move(inputs),
        [x, spec, estimator, mask, has_alpha, unit = std::move(q.unit_clipped),
         lattice = std::move(q.lattice)](const auto& self) {
            const auto n = self.grad.size();
            const T round_factor = spec.clip != ClipFamily::pact && spec.round == RoundFamily::weight ? T{2} : T{1};
            const T slope = clip_slope(spec);
            std::vector<T> gx(n), upstream(n, T{0});
            for (std::size_t i = 0; i < n; ++i) {
                if (!mask_bit(mask, i)) {
                    gx[i] = self.grad[i];
                    continue;
                }
                const T g_c = estimate_element(estimator, round_factor * self.grad[i], unit[i], lattice[i]);
                upstream[i] = g_c;
                gx[i] = clip_active(spec, x.data()[i]) ? g_c * slope : T{0};
            }
            std::vector<std::vector<T>> grads;
            grads.push_back(std::move(gx));
            if (has_alpha)
                grads.push_back(clip_param_grad<T>(spec, x.data(), upstream));
            return grads;
        },
        "quantize");
}

/// Clip stage alone as a differentiable op: x_c with gradients for x and
/// alpha. Kinks (the clip bounds) get a zero derivative.
template <class T>
Tensor<T> clip_node(const Tensor<T>& x, const Tensor<T>& alpha, QuantizerSpec<T> spec)
{
    if (alpha.defined())
        spec.alpha.assign(alpha.data().begin(), alpha.data().end());
    spec.validate();
    auto out = clip_forward<T>(x.data(), spec);
    std::vector<Tensor<T>> inputs{x};
    if (alpha.defined())
        inputs.push_back(alpha);
    const bool has_alpha = alpha.defined();
    return make_result<T>(x.shape(), std::move(out), std::move(inputs),
        [x, spec, has_alpha](const auto& self) {
            const T slope = clip_slope(spec);
            std::vector<T> gx(self.grad.size());
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] = clip_active(spec, x.data()[i]) ? self.grad[i] * slope : T{0};
            std::vector<std::vector<T>> grads;
            grads.push_back(std::move(gx));
            if (has_alpha)
                grads.push_back(clip_param_grad<T>(spec, x.data(), self.grad));
            return grads;
        },
        "clip");
}

/// One trainable quantizer: the family template plus its alpha tensor.
template <class T>
struct QuantizerState {
    QuantizerSpec<T> spec = QuantizerSpec<T>::full_precision();
    Tensor<T> alpha;
    bool calibrated = false;

    QuantizerState() = default;
    explicit QuantizerState(QuantizerSpec<T> s) : spec(std::move(s))
    {
        if (!spec.bypass() && spec.clip_param_count() > 0)
            alpha = Tensor<T>::parameter({spec.clip_param_count()}, spec.alpha);
    }

    bool active() const { return !spec.bypass(); }

    QuantizerSpec<T> current() const
    {
        auto s = spec;
        if (alpha.defined())
            s.alpha.assign(alpha.data().begin(), alpha.data().end());
        else
            s.alpha.clear();
        return s;
    }

    // Interval warm start; PACT keeps its configured initial m.
    void init_from(std::span<const T> values)
    {
        if (active() && spec.clip == ClipFamily::interval) {
            const auto range = interval_from_range(values);
            std::copy(range.begin(), range.end(), alpha.mutable_data().begin());
        }
        calibrated = true;
    }
};

template <class T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
    bool decay = true;
};

template <class T>
using Registry = std::vector<NamedTensor<T>>;

template <class T>
std::vector<T> fan_in_normal(std::size_t count, std::size_t fan_in, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<T> out(count);
    for (auto& v : out)
        v = static_cast<T>(dist(rng));
    return out;
}

/// Linear or convolution layer with optional weight and input-activation
/// quantizers. The optimizer only ever sees `weight` (W_f) and the alphas;
/// W_q is recomputed on every forward.
template <class T>
class QuantLayer {
public:
    enum class Kind { linear, conv };

    QuantLayer(std::string name, Kind kind, Shape weight_shape, std::size_t fan_in, bool bias, std::size_t stride,
               std::size_t pad, std::mt19937_64& rng)
        : name_(std::move(name)), kind_(kind), stride_(stride), pad_(pad)
    {
        weight_ = Tensor<T>::parameter(weight_shape, fan_in_normal<T>(numel(weight_shape), fan_in, rng));
        if (bias)
            bias_ = Tensor<T>::zeros({weight_shape[kind == Kind::linear ? 1 : 0]}, true);
    }

    void set_quantizers(QuantizerSpec<T> weight_spec, QuantizerSpec<T> activation_spec, EstimatorConfig<T> estimator,
                        std::size_t index)
    {
        weight_q_ = QuantizerState<T>(std::move(weight_spec));
        activation_q_ = QuantizerState<T>(std::move(activation_spec));
        estimator_ = estimator;
        index_ = index;
        reset_weight_quantizer();
    }

    // Weight alpha warm start from the current W_f.
    void reset_weight_quantizer() { weight_q_.init_from(weight_.data()); }

    bool quantized() const { return weight_q_.active() || activation_q_.active(); }
    const std::string& name() const { return name_; }
    std::size_t index() const { return index_; }
    Tensor<T>& weight() { return weight_; }
    const Tensor<T>& weight() const { return weight_; }
    QuantizerState<T>& weight_quantizer() { return weight_q_; }
    QuantizerState<T>& activation_quantizer() { return activation_q_; }
    const EstimatorConfig<T>& estimator() const { return estimator_; }
    void set_estimator(const EstimatorConfig<T>& e) { estimator_ = e; }

    Tensor<T> forward(const Tensor<T>& input, const StepContext<T>& ctx)
    {
        auto x = input;
        auto w = weight_;
        if (quantized()) {
            EstimatorConfig<T> est = estimator_;
            est.mu = ctx.mu;
            if (activation_q_.active()) {
                if (ctx.calibrate && !activation_q_.calibrated)
                    activation_q_.init_from(x.data());
                x = quantize_node(x, activation_q_.alpha, activation_q_.spec, est, activation_mask(x.size(), ctx));
            }
            if (weight_q_.active())
                w = quantize_node(w, weight_q_.alpha, weight_q_.spec, est, weight_mask(ctx));
        }
        Tensor<T> y = kind_ == Kind::linear ? matmul(x, w) : conv2d(x, w, stride_, pad_);
        if (bias_.defined())
            y = add_bias(y, bias_);
        return y;
    }

    /// Mean |unit x_c - unit x_q| of the weight quantizer; 0 when bypassed.
    double weight_discretization_error() const
    {
        if (!weight_q_.active())
            return 0.0;
        const auto q = quantize<T>(weight_.data(), weight_q_.current());
        double acc = 0;
        for (std::size_t i = 0; i < q.unit_clipped.size(); ++i)
            acc += std::abs(static_cast<double>(q.unit_clipped[i]) - static_cast<double>(q.lattice[i]));
        return q.unit_clipped.empty() ? 0.0 : acc / static_cast<double>(q.unit_clipped.size());
    }

    void register_state(Registry<T>& reg)
    {
        reg.push_back({name_ + ".weight", weight_, true, true});
        if (bias_.defined())
            reg.push_back({name_ + ".bias", bias_, true, false});
        if (weight_q_.alpha.defined())
            reg.push_back({name_ + ".alpha_w", weight_q_.alpha, true, false});
        if (activation_q_.alpha.defined())
            reg.push_back({name_ + ".alpha_a", activation_q_.alpha, true, false});
    }

private:
    ReplacementMask weight_mask(const StepContext<T>& ctx) const
    {
        if (ctx.mode == Mode::eval || index_ >= ctx.weight_masks.size())
            return {1};
        return ctx.weight_masks[index_];
    }

    ReplacementMask activation_mask(std::size_t n, const StepContext<T>& ctx) const
    {
        if (ctx.mode == Mode::eval || !ctx.replace_activations)
            return {1};
        ReplacementState state{ctx.seed, ctx.step, ctx.granularity, {}};
        const std::size_t sizes[] = {n};
        return sample_replacement(state, ctx.rate, sizes, kActivationStreamBase + index_).front();
    }

    std::string name_;
    Kind kind_;
    std::size_t stride_ = 1, pad_ = 0;
    Tensor<T> weight_, bias_;
    QuantizerState<T> weight_q_, activation_q_;
    EstimatorConfig<T> estimator_{};
    std::size_t index_ = 0;
};

/// Per-channel batch normalization with running statistics for evaluation.
template <class T>
class BatchNorm {
public:
    BatchNorm(std::string name, std::size_t channels)
        : name_(std::move(name)),
          gamma_(Tensor<T>::parameter({channels}, std::vector<T>(channels, T{1}))),
          beta_(Tensor<T>::zeros({channels}, true)),
          running_mean_(Tensor<T>::zeros({channels})),
          running_var_(Tensor<T>::constant({channels}, std::vector<T>(channels, T{1})))
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode)
    {
        return batch_norm(x, gamma_, beta_, running_mean_.mutable_data(), running_var_.mutable_data(),
                          mode == Mode::train);
    }

    void register_state(Registry<T>& reg)
    {
        reg.push_back({name_ + ".gamma", gamma_, true, false});
        reg.push_back({name_ + ".beta", beta_, true, false});
        reg.push_back({name_ + ".running_mean", running_mean_, false, false});
        reg.push_back({name_ + ".running_var", running_var_, false, false});
    }

private:
    std::string name_;
    Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

} // namespace pege

#endif // PEGE_LAYERS_HPP
