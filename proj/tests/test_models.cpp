#include <pege/models.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace pege;

namespace {

ModelSpec spec_for(Architecture arch, int bits_w, int bits_a)
{
    ModelSpec s;
    s.arch = arch;
    s.input = arch == Architecture::mlp ? Shape{1, 28, 28} : Shape{3, 32, 32};
    if (arch == Architecture::resnet20_lite)
        s.width = 0.25;
    s.quant.bits_w = bits_w;
    s.quant.bits_a = bits_a;
    return s;
}

Tensor32 random_batch(const Shape& sample, std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.f, 1.f);
    Shape shape{n, sample[0], sample[1], sample[2]};
    std::vector<float> v(numel(shape));
    for (auto& e : v)
        e = d(rng);
    return Tensor32::constant(shape, v);
}

std::vector<std::vector<float>> snapshot(const Network<float>& m)
{
    std::vector<std::vector<float>> out;
    for (const auto& e : m.state())
        out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    return out;
}

const NamedTensor<float>& find(const Network<float>& m, const std::string& name)
{
    for (const auto& e : m.state())
        if (e.name == name)
            return e;
    throw std::runtime_error("missing " + name);
}

} // namespace

TEST(Models, MlpParameterCount)
{
    auto m = build_model<float>(spec_for(Architecture::mlp, 2, 2), 1);
    EXPECT_EQ(m->parameter_count(), 784u * 256 + 256 + 256 * 128 + 128 + 128 * 10 + 10);
    EXPECT_EQ(m->parameter_count(), 235146u);
}

TEST(Models, ZeroWidthIsConfigError)
{
    auto s = spec_for(Architecture::small_cnn, 2, 2);
    s.width = 0;
    EXPECT_THROW(build_model<float>(s, 1), ConfigError);
}

TEST(Models, SeededInitIsReproducible)
{
    for (auto arch : {Architecture::mlp, Architecture::small_cnn, Architecture::resnet20_lite}) {
        auto a = build_model<float>(spec_for(arch, 2, 2), 7);
        auto b = build_model<float>(spec_for(arch, 2, 2), 7);
        EXPECT_EQ(snapshot(*a), snapshot(*b));
        auto c = build_model<float>(spec_for(arch, 2, 2), 8);
        EXPECT_NE(snapshot(*a), snapshot(*c));
    }
}

TEST(Models, OutputShapes)
{
    for (auto arch : {Architecture::mlp, Architecture::small_cnn, Architecture::resnet20_lite}) {
        const auto s = spec_for(arch, 2, 2);
        auto m = build_model<float>(s, 1);
        StepContext<float> ctx;
        ctx.mode = Mode::eval;
        EXPECT_EQ(forward_quantized(*m, random_batch(s.input, 3, 2), ctx).shape(), (Shape{3, 10}));
    }
}

TEST(Models, FirstAndLastLayersStayFullPrecision)
{
    auto m = build_model<float>(spec_for(Architecture::resnet20_lite, 2, 2), 1);
    EXPECT_EQ(m->quant_layers().size(), 18u);
    for (auto* l : m->quant_layers()) {
        EXPECT_NE(l->name(), "stem");
        EXPECT_NE(l->name(), "fc");
    }
    auto cnn = build_model<float>(spec_for(Architecture::small_cnn, 2, 2), 1);
    ASSERT_EQ(cnn->quant_layers().size(), 2u);
    EXPECT_EQ(cnn->quant_layers()[0]->name(), "conv2");
    EXPECT_EQ(cnn->quant_layers()[1]->name(), "conv3");
}

TEST(Models, FirstAndLastWeightsIndependentOfQuantizerConfig)
{
    auto a = build_model<float>(spec_for(Architecture::small_cnn, 2, 2), 3);
    auto b = build_model<float>(spec_for(Architecture::small_cnn, 4, 32), 3);
    auto c = build_model<float>(spec_for(Architecture::small_cnn, 32, 32), 3);
    for (const char* name : {"conv1.weight", "fc.weight", "fc.bias"}) {
        EXPECT_EQ(find(*a, name).tensor.values(), find(*b, name).tensor.values()) << name;
        EXPECT_EQ(find(*a, name).tensor.values(), find(*c, name).tensor.values()) << name;
    }
}

TEST(Models, EvalIsDeterministicAndPure)
{
    const auto s = spec_for(Architecture::small_cnn, 2, 2);
    auto m = build_model<float>(s, 4);
    const auto x = random_batch(s.input, 4, 9);
    const auto before = snapshot(*m);
    StepContext<float> ctx;
    ctx.mode = Mode::eval;
    const auto y1 = forward_quantized(*m, x, ctx);
    const auto y2 = forward_quantized(*m, x, ctx);
    EXPECT_EQ(y1.values(), y2.values());
    EXPECT_FALSE(y1.requires_grad());
    EXPECT_EQ(snapshot(*m), before);
}

TEST(Models, ZeroRateTrainingMatchesFullPrecision)
{
    const auto s = spec_for(Architecture::small_cnn, 2, 2);
    auto quant = build_model<float>(s, 5);
    auto fp = build_model<float>(spec_for(Architecture::small_cnn, 32, 32), 5);
    const auto x = random_batch(s.input, 4, 10);
    StepContext<float> ctx;
    ctx.mode = Mode::train;
    ctx.rate = 0.0;
    ctx.replace_activations = true;
    StepContext<float> fp_ctx;
    fp_ctx.mode = Mode::train;
    EXPECT_EQ(forward_quantized(*quant, x, ctx).values(), forward_quantized(*fp, x, fp_ctx).values());
}

TEST(Models, BypassMatchesPlainMlp)
{
    const auto s = spec_for(Architecture::mlp, 32, 32);
    auto m = build_model<float>(s, 6);
    const auto x = random_batch(s.input, 2, 11);
    StepContext<float> ctx;
    ctx.mode = Mode::eval;
    const auto y = forward_quantized(*m, x, ctx);

    NoGradGuard ng;
    auto h = flatten(x);
    for (const char* layer : {"fc1", "fc2", "fc3"}) {
        h = add_bias(matmul(h, find(*m, std::string(layer) + ".weight").tensor),
                     find(*m, std::string(layer) + ".bias").tensor);
        if (std::string(layer) != "fc3")
            h = relu(h);
    }
    EXPECT_EQ(y.values(), h.values());
    EXPECT_EQ(m->weight_discretization_errors().size(), 0u);
}

TEST(Models, QuantizedEvalDiffersFromFullPrecision)
{
    const auto s = spec_for(Architecture::small_cnn, 2, 2);
    auto quant = build_model<float>(s, 5);
    auto fp = build_model<float>(spec_for(Architecture::small_cnn, 32, 32), 5);
    const auto x = random_batch(s.input, 2, 12);
    StepContext<float> ctx;
    ctx.mode = Mode::eval;
    EXPECT_NE(forward_quantized(*quant, x, ctx).values(), forward_quantized(*fp, x, ctx).values());
}

TEST(Models, DiscretizationErrorsNonNegative)
{
    auto m = build_model<float>(spec_for(Architecture::resnet20_lite, 2, 2), 1);
    for (double e : m->weight_discretization_errors()) {
        EXPECT_GE(e, 0.0);
        EXPECT_LE(e, 0.5 / 3 + 1e-6);
    }
}

TEST(Models, GradientsReachLatentWeightsAndAlphas)
{
    const auto s = spec_for(Architecture::small_cnn, 2, 2);
    auto m = build_model<float>(s, 2);
    StepContext<float> ctx;
    ctx.mode = Mode::train;
    ctx.calibrate = true;
    const std::vector<int> labels{0, 1, 2, 3};
    backward(cross_entropy(forward_quantized(*m, random_batch(s.input, 4, 1), ctx), std::span<const int>(labels)));
    for (const auto& p : m->parameters())
        EXPECT_TRUE(p.tensor.has_grad()) << p.name;
    for (auto* l : m->quant_layers())
        EXPECT_TRUE(l->weight().is_leaf());
}

// Two quantized linear layers, weights quantized, activations full precision.
namespace {

struct TwoLayer {
    std::mt19937_64 rng{21};
    QuantLayer<double> l1{"l1", QuantLayer<double>::Kind::linear, {6, 5}, 6, true, 1, 0, rng};
    QuantLayer<double> l2{"l2", QuantLayer<double>::Kind::linear, {5, 3}, 5, true, 1, 0, rng};

    explicit TwoLayer(EstimatorKind kind)
    {
        const auto w = QuantizerSpec<double>::interval(2, RoundFamily::weight, -1, 1);
        const auto a = QuantizerSpec<double>::full_precision();
        l1.set_quantizers(w, a, {kind}, 0);
        l2.set_quantizers(w, a, {kind}, 1);
    }

    void step(double mu)
    {
        StepContext<double> ctx;
        ctx.mode = Mode::train;
        ctx.mu = mu;
        std::mt19937_64 data(3);
        std::normal_distribution<double> d(0, 1);
        std::vector<double> x(4 * 6);
        for (auto& v : x)
            v = d(data);
        const std::vector<int> labels{0, 2, 1, 2};
        auto h = relu(l1.forward(Tensor64::constant({4, 6}, x), ctx));
        backward(cross_entropy(l2.forward(h, ctx), std::span<const int>(labels)));
    }
};

void expect_correction(QuantLayer<double>& pege, QuantLayer<double>& ste, double mu)
{
    const auto spec = pege.weight_quantizer().current();
    const auto q = quantize<double>(pege.weight().data(), spec);
    const double slope = clip_slope(spec);
    for (std::size_t i = 0; i < q.unit_clipped.size(); ++i) {
        const double x = pege.weight().data()[i];
        const double expect = clip_active(spec, x) ? mu * (q.unit_clipped[i] - q.lattice[i]) * slope : 0.0;
        if (mu == 0)
            EXPECT_EQ(pege.weight().grad()[i], ste.weight().grad()[i]);
        else
            EXPECT_NEAR(pege.weight().grad()[i] - ste.weight().grad()[i], expect, 1e-14);
    }
}

} // namespace

TEST(Models, MuZeroGivesSteGradientsExactly)
{
    TwoLayer pege(EstimatorKind::pege), ste(EstimatorKind::ste);
    pege.step(0.0);
    ste.step(0.0);
    expect_correction(pege.l1, ste.l1, 0.0);
    expect_correction(pege.l2, ste.l2, 0.0);
}

TEST(Models, PositiveMuShiftsByDiscretizationError)
{
    TwoLayer pege(EstimatorKind::pege), ste(EstimatorKind::ste);
    pege.step(0.3);
    ste.step(0.3);
    expect_correction(pege.l1, ste.l1, 0.3);
    expect_correction(pege.l2, ste.l2, 0.3);
}

TEST(Models, NonReplacedElementsGetIdentityGradient)
{
    auto x = Tensor64::parameter({4}, {-2.0, 0.1, 0.45, 3.0});
    auto alpha = Tensor64::constant({2}, {-1.0, 1.0});
    const auto spec = QuantizerSpec<double>::interval(2, RoundFamily::weight, -1, 1);
    auto y = quantize_node(x, alpha, spec, {EstimatorKind::pege, 0.5}, ReplacementMask{0, 1, 0, 1});
    EXPECT_EQ(y.values()[0], -2.0);
    EXPECT_EQ(y.values()[2], 0.45);
    EXPECT_EQ(y.values()[3], 1.0);
    backward(sum(y));
    EXPECT_EQ(x.grad()[0], 1.0);
    EXPECT_EQ(x.grad()[2], 1.0);
    EXPECT_EQ(x.grad()[3], 0.0); // saturated
}
