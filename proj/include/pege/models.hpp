#ifndef PEGE_MODELS_HPP
#define PEGE_MODELS_HPP

#include <pege/curriculum.hpp>
#include <pege/error.hpp>
#include <pege/layers.hpp>
#include <pege/ops.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pege {

enum class Architecture { mlp, small_cnn, resnet20_lite };

inline std::string_view to_string(Architecture a)
{
    switch (a) {
    case Architecture::mlp: return "mlp";
    case Architecture::small_cnn: return "small_cnn";
    case Architecture::resnet20_lite: return "resnet20_lite";
    }
    return "?";
}

/// Defaults applied to every quantizable (non-first, non-last) layer.
struct QuantSettings {
    int bits_w = 2;
    int bits_a = 2;
    ClipFamily clip = ClipFamily::interval;
    RoundFamily weight_round = RoundFamily::weight;
    double pact_init_m = 8.0;
    EstimatorKind estimator = EstimatorKind::pege;
    double delta = 1e-3;
};

struct ModelSpec {
    Architecture arch = Architecture::small_cnn;
    double width = 1.0;
    std::size_t classes = 10;
    Shape input{3, 32, 32}; // C, H, W
    QuantSettings quant;

    void validate() const
    {
        if (!(width > 0))
            throw ConfigError("model width multiplier must be positive");
        if (classes < 2)
            throw ConfigError("model needs at least two classes");
        if (input.size() != 3 || numel(input) == 0)
            throw ConfigError("model input shape must be C x H x W");
    }
};

/// Canonical text form of everything needed to rebuild a model.
inline std::string describe(const ModelSpec& s)
{
    std::ostringstream os;
    os.precision(17);
    os << "arch=" << to_string(s.arch) << ";width=" << s.width << ";classes=" << s.classes << ";input="
       << s.input[0] << ',' << s.input[1] << ',' << s.input[2] << ";bits_w=" << s.quant.bits_w
       << ";bits_a=" << s.quant.bits_a << ";clip=" << to_string(s.quant.clip)
       << ";weight_round=" << to_string(s.quant.weight_round) << ";pact_init_m=" << s.quant.pact_init_m
       << ";estimator=" << to_string(s.quant.estimator) << ";delta=" << s.quant.delta;
    return os.str();
}

template <class T>
class Network {
public:
    virtual ~Network() = default;

    virtual Tensor<T> forward(const Tensor<T>& x, StepContext<T>& ctx) = 0;

    const ModelSpec& spec() const { return spec_; }

    // Every named tensor (parameters, alphas, buffers) in a fixed order.
    const Registry<T>& state() const { return registry_; }

    std::vector<NamedTensor<T>> parameters() const
    {
        std::vector<NamedTensor<T>> out;
        for (const auto& e : registry_)
            if (e.trainable)
                out.push_back(e);
        return out;
    }

    const std::vector<QuantLayer<T>*>& quant_layers() const { return quantized_; }
    const std::vector<QuantLayer<T>*>& all_layers() const { return layers_; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& e : registry_)
            if (e.trainable && e.name.find(".alpha") == std::string::npos)
                n += e.tensor.size();
        return n;
    }

    void zero_grad()
    {
        for (auto& e : registry_)
            e.tensor.zero_grad();
    }

    // Element counts of the quantized weight tensors, in layer-index order.
    std::vector<std::size_t> quantized_weight_sizes() const
    {
        std::vector<std::size_t> sizes;
        for (auto* l : quantized_)
            sizes.push_back(l->weight().size());
        return sizes;
    }

    std::vector<double> weight_discretization_errors() const
    {
        std::vector<double> out;
        for (auto* l : quantized_)
            out.push_back(l->weight_discretization_error());
        return out;
    }

protected:
    explicit Network(ModelSpec spec) : spec_(std::move(spec)), rng_(0) {}

    QuantLayer<T>& linear(const std::string& name, std::size_t in, std::size_t out)
    {
        owned_layers_.push_back(std::make_unique<QuantLayer<T>>(name, QuantLayer<T>::Kind::linear, Shape{in, out}, in,
                                                                true, 1, 0, rng_));
        layers_.push_back(owned_layers_.back().get());
        return *owned_layers_.back();
    }

    QuantLayer<T>& conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                        std::size_t pad)
    {
        owned_layers_.push_back(std::make_unique<QuantLayer<T>>(name, QuantLayer<T>::Kind::conv,
                                                                Shape{out, in, k, k}, in * k * k, false, stride, pad,
                                                                rng_));
        layers_.push_back(owned_layers_.back().get());
        return *owned_layers_.back();
    }

    BatchNorm<T>& norm(const std::string& name, std::size_t channels)
    {
        owned_norms_.push_back(std::make_unique<BatchNorm<T>>(name, channels));
        return *owned_norms_.back();
    }

    // Attaches the configured quantizers to a hidden layer.
    void quantize_layer(QuantLayer<T>& layer)
    {
        const auto& q = spec_.quant;
        QuantizerSpec<T> w_spec = q.bits_w == kFullPrecisionBits
                                      ? QuantizerSpec<T>::full_precision(RoundFamily::weight)
                                      : QuantizerSpec<T>::interval(q.bits_w, q.weight_round, T{-1}, T{1});
        QuantizerSpec<T> a_spec;
        if (q.bits_a == kFullPrecisionBits)
            a_spec = QuantizerSpec<T>::full_precision();
        else if (q.clip == ClipFamily::pact)
            a_spec = QuantizerSpec<T>::pact(q.bits_a, static_cast<T>(q.pact_init_m));
        else if (q.clip == ClipFamily::interval)
            a_spec = QuantizerSpec<T>::interval(q.bits_a, RoundFamily::activation, T{0}, T{1});
        else
            a_spec = QuantizerSpec<T>::fixed_unit(q.bits_a, RoundFamily::activation);
        w_spec.validate();
        a_spec.validate();
        EstimatorConfig<T> est{q.estimator, T{0}, static_cast<T>(q.delta)};
        layer.set_quantizers(std::move(w_spec), std::move(a_spec), est, quantized_.size());
        if (layer.quantized())
            quantized_.push_back(&layer);
    }

    // Registration order fixes the checkpoint layout.
    void register_all(const std::vector<QuantLayer<T>*>& layers, const std::vector<BatchNorm<T>*>& norms)
    {
        for (auto* l : layers)
            l->register_state(registry_);
        for (auto* n : norms)
            n->register_state(registry_);
    }

    ModelSpec spec_;
    std::mt19937_64 rng_;
    Registry<T> registry_;
    std::vector<std::unique_ptr<QuantLayer<T>>> owned_layers_;
    std::vector<std::unique_ptr<BatchNorm<T>>> owned_norms_;
    std::vector<QuantLayer<T>*> layers_;
    std::vector<QuantLayer<T>*> quantized_;
};

inline std::size_t scaled_width(std::size_t base, double multiplier)
{
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(base) * multiplier)));
}

/// in -> 256w -> 128w -> classes; only the hidden layer is quantized.
template <class T>
class Mlp final : public Network<T> {
public:
    Mlp(ModelSpec spec, std::uint64_t seed) : Network<T>(std::move(spec))
    {
        this->rng_.seed(seed);
        const auto in = numel(this->spec_.input);
        const auto h1 = scaled_width(256, this->spec_.width), h2 = scaled_width(128, this->spec_.width);
        fc1_ = &this->linear("fc1", in, h1);
        fc2_ = &this->linear("fc2", h1, h2);
        fc3_ = &this->linear("fc3", h2, this->spec_.classes);
        this->quantize_layer(*fc2_);
        this->register_all({fc1_, fc2_, fc3_}, {});
    }

    Tensor<T> forward(const Tensor<T>& x, StepContext<T>& ctx) override
    {
        auto h = relu(fc1_->forward(flatten(x), ctx));
        h = relu(fc2_->forward(h, ctx));
        return fc3_->forward(h, ctx);
    }

private:
    QuantLayer<T>*fc1_, *fc2_, *fc3_;
};

/// Three conv-BN-ReLU-maxpool blocks (16w/32w/64w channels) and a linear
/// head; the first conv and the head stay full precision.
template <class T>
class SmallCnn final : public Network<T> {
public:
    SmallCnn(ModelSpec spec, std::uint64_t seed) : Network<T>(std::move(spec))
    {
        this->rng_.seed(seed);
        const auto& in = this->spec_.input;
        const auto c1 = scaled_width(16, this->spec_.width), c2 = scaled_width(32, this->spec_.width),
                   c3 = scaled_width(64, this->spec_.width);
        std::size_t h = in[1], w = in[2];
        for (int i = 0; i < 3; ++i) {
            h /= 2;
            w /= 2;
        }
        if (h == 0 || w == 0)
            throw ConfigError("small_cnn needs inputs of at least 8x8");
        conv1_ = &this->conv("conv1", in[0], c1, 3, 1, 1);
        conv2_ = &this->conv("conv2", c1, c2, 3, 1, 1);
        conv3_ = &this->conv("conv3", c2, c3, 3, 1, 1);
        head_ = &this->linear("fc", c3 * h * w, this->spec_.classes);
        bn1_ = &this->norm("bn1", c1);
        bn2_ = &this->norm("bn2", c2);
        bn3_ = &this->norm("bn3", c3);
        this->quantize_layer(*conv2_);
        this->quantize_layer(*conv3_);
        this->register_all({conv1_, conv2_, conv3_, head_}, {bn1_, bn2_, bn3_});
    }

    Tensor<T> forward(const Tensor<T>& x, StepContext<T>& ctx) override
    {
        auto h = max_pool2d(relu(bn1_->forward(conv1_->forward(x, ctx), ctx.mode)));
        h = max_pool2d(relu(bn2_->forward(conv2_->forward(h, ctx), ctx.mode)));
        h = max_pool2d(relu(bn3_->forward(conv3_->forward(h, ctx), ctx.mode)));
        return head_->forward(flatten(h), ctx);
    }

private:
    QuantLayer<T>*conv1_, *conv2_, *conv3_, *head_;
    BatchNorm<T>*bn1_, *bn2_, *bn3_;
};

/// ResNet-20 topology (3 stages x 3 basic blocks) at a width multiplier,
/// with parameter-free subsample-and-pad shortcuts.
template <class T>
class ResNet20Lite final : public Network<T> {
public:
    ResNet20Lite(ModelSpec spec, std::uint64_t seed) : Network<T>(std::move(spec))
    {
        this->rng_.seed(seed);
        const auto& in = this->spec_.input;
        const std::size_t widths[3] = {scaled_width(16, this->spec_.width), scaled_width(32, this->spec_.width),
                                       scaled_width(64, this->spec_.width)};
        std::vector<QuantLayer<T>*> layers;
        std::vector<BatchNorm<T>*> norms;
        stem_ = &this->conv("stem", in[0], widths[0], 3, 1, 1);
        stem_bn_ = &this->norm("stem_bn", widths[0]);
        layers.push_back(stem_);
        norms.push_back(stem_bn_);
        std::size_t channels = widths[0];
        for (std::size_t stage = 0; stage < 3; ++stage) {
            for (std::size_t b = 0; b < 3; ++b) {
                const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
                const std::string prefix = "s" + std::to_string(stage + 1) + "b" + std::to_string(b + 1);
                Block blk;
                blk.stride = stride;
                blk.out = widths[stage];
                blk.conv1 = &this->conv(prefix + ".conv1", channels, widths[stage], 3, stride, 1);
                blk.bn1 = &this->norm(prefix + ".bn1", widths[stage]);
                blk.conv2 = &this->conv(prefix + ".conv2", widths[stage], widths[stage], 3, 1, 1);
                blk.bn2 = &this->norm(prefix + ".bn2", widths[stage]);
                layers.push_back(blk.conv1);
                layers.push_back(blk.conv2);
                norms.push_back(blk.bn1);
                norms.push_back(blk.bn2);
                blocks_.push_back(blk);
                channels = widths[stage];
            }
        }
        head_ = &this->linear("fc", channels, this->spec_.classes);
        layers.push_back(head_);
        for (auto& blk : blocks_) {
            this->quantize_layer(*blk.conv1);
            this->quantize_layer(*blk.conv2);
        }
        this->register_all(layers, norms);
    }

    Tensor<T> forward(const Tensor<T>& x, StepContext<T>& ctx) override
    {
        auto h = relu(stem_bn_->forward(stem_->forward(x, ctx), ctx.mode));
        for (auto& blk : blocks_) {
            auto y = relu(blk.bn1->forward(blk.conv1->forward(h, ctx), ctx.mode));
            y = blk.bn2->forward(blk.conv2->forward(y, ctx), ctx.mode);
            const auto shortcut = (blk.stride == 1 && h.dim(1) == blk.out) ? h : downsample_pad(h, blk.stride, blk.out);
            h = relu(add(y, shortcut));
        }
        return head_->forward(global_avg_pool(h), ctx);
    }

private:
    struct Block {
        QuantLayer<T>*conv1 = nullptr, *conv2 = nullptr;
        BatchNorm<T>*bn1 = nullptr, *bn2 = nullptr;
        std::size_t stride = 1, out = 0;
    };

    QuantLayer<T>* stem_ = nullptr;
    BatchNorm<T>* stem_bn_ = nullptr;
    std::vector<Block> blocks_;
    QuantLayer<T>* head_ = nullptr;
};

/// Builds and initializes a model; identical (spec, seed) pairs give
/// bitwise-identical weights.
template <class T>
std::unique_ptr<Network<T>> build_model(const ModelSpec& spec, std::uint64_t seed)
{
    spec.validate();
    switch (spec.arch) {
    case Architecture::mlp: return std::make_unique<Mlp<T>>(spec, seed);
    case Architecture::small_cnn: return std::make_unique<SmallCnn<T>>(spec, seed);
    case Architecture::resnet20_lite: return std::make_unique<ResNet20Lite<T>>(spec, seed);
    }
    throw ConfigError("unknown architecture");
}

/// Quantized forward pass. Training mode draws this step's weight masks at
/// ctx.rate and records the graph; evaluation forces every mask to one and
/// records nothing.
template <class T>
Tensor<T> forward_quantized(Network<T>& model, const Tensor<T>& batch, StepContext<T>& ctx)
{
    if (ctx.mode == Mode::eval) {
        NoGradGuard no_grad;
        ctx.weight_masks.clear();
        ctx.calibrate = false;
        return model.forward(batch, ctx);
    }
    ReplacementState state{ctx.seed, ctx.step, ctx.granularity, {}};
    const auto sizes = model.quantized_weight_sizes();
    ctx.weight_masks = sample_replacement(state, ctx.rate, sizes);
    return model.forward(batch, ctx);
}

} // namespace pege

#endif // PEGE_MODELS_HPP
