#include <pege/checkpoint.hpp>
#include <pege/ops.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace pege;
namespace fs = std::filesystem;

namespace {

ModelSpec cnn_spec()
{
    ModelSpec s;
    s.arch = Architecture::small_cnn;
    s.width = 0.25;
    s.input = {3, 16, 16};
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

// One training step so weights, alphas, norm statistics and moments are non-trivial.
void train_step(Network<float>& m, Optimizer<float>& opt, long step)
{
    StepContext<float> ctx;
    ctx.mode = Mode::train;
    ctx.step = step;
    ctx.rate = 0.5;
    ctx.mu = 0.05f;
    ctx.seed = 3;
    ctx.calibrate = true;
    const auto x = random_batch(m.spec().input, 8, 100 + step);
    std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7};
    const auto loss = cross_entropy(forward_quantized(m, x, ctx), std::span<const int>(labels));
    m.zero_grad();
    backward(loss);
    opt.step(1e-2);
}

std::vector<float> eval_logits(Network<float>& m)
{
    StepContext<float> ctx;
    ctx.mode = Mode::eval;
    const auto out = forward_quantized(m, random_batch(m.spec().input, 4, 7), ctx);
    return {out.data().begin(), out.data().end()};
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("pege_ckpt_" + name); }

} // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical)
{
    auto m = build_model<float>(cnn_spec(), 1);
    Optimizer<float> opt({}, m->parameters());
    train_step(*m, opt, 0);
    const auto a = temp_file("a.ckpt"), b = temp_file("b.ckpt");
    save_checkpoint(capture(*m, &opt, 1, 42), a);
    save_checkpoint(load_checkpoint(a), b);
    EXPECT_EQ(read_file(a), read_file(b));
    EXPECT_EQ(read_file(a).substr(0, 8), "PEGEQAT1");
}

TEST(Checkpoint, HeaderFields)
{
    Checkpoint c;
    c.descriptor = "x";
    c.step = 5;
    c.seed = 9;
    c.arrays.push_back({"w", {2}, {1.5f, -0.25f}});
    const auto bytes = serialize_checkpoint(c);
    // magic, version 1 little-endian, descriptor length 1
    EXPECT_EQ(bytes.substr(0, 8), "PEGEQAT1");
    EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
    EXPECT_EQ(bytes.substr(12, 5), std::string("\x01\x00\x00\x00x", 5));
    const auto back = parse_checkpoint(bytes);
    EXPECT_EQ(back.step, 5u);
    EXPECT_EQ(back.seed, 9u);
    ASSERT_NE(back.find("w"), nullptr);
    EXPECT_EQ(back.find("w")->data, (std::vector<float>{1.5f, -0.25f}));
    // float32 payload is the last 8 bytes: 1.5f = 0x3FC00000
    EXPECT_EQ(bytes.substr(bytes.size() - 8, 4), std::string("\x00\x00\xC0\x3F", 4));
}

TEST(Checkpoint, CorruptHeadersAreFormatErrors)
{
    Checkpoint c;
    c.descriptor = "d";
    c.arrays.push_back({"w", {3}, {1, 2, 3}});
    const auto bytes = serialize_checkpoint(c);

    auto bad_magic = bytes;
    bad_magic[0] ^= 0x01;
    EXPECT_THROW(parse_checkpoint(bad_magic), FormatError);

    auto bad_version = bytes;
    bad_version[8] = 2;
    EXPECT_THROW(parse_checkpoint(bad_version), FormatError);

    for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{13}, bytes.size() - 1})
        EXPECT_THROW(parse_checkpoint(bytes.substr(0, cut)), FormatError) << cut;
    EXPECT_THROW(parse_checkpoint(bytes + "z"), FormatError);
}

TEST(Checkpoint, MissingFileIsIoError) { EXPECT_THROW(load_checkpoint(temp_file("does_not_exist")), IoError); }

TEST(Checkpoint, RestoredModelEvaluatesIdentically)
{
    auto m = build_model<float>(cnn_spec(), 1);
    Optimizer<float> opt({}, m->parameters());
    for (long s = 0; s < 3; ++s)
        train_step(*m, opt, s);
    const auto path = temp_file("eval.ckpt");
    save_checkpoint(capture(*m, &opt, 3, 1), path);

    auto fresh = build_model<float>(cnn_spec(), 99);
    Optimizer<float> fresh_opt({}, fresh->parameters());
    restore(load_checkpoint(path), *fresh, &fresh_opt);
    EXPECT_EQ(eval_logits(*m), eval_logits(*fresh));
    EXPECT_EQ(fresh_opt.steps(), 3);
    EXPECT_EQ(fresh_opt.first_moments(), opt.first_moments());
    EXPECT_EQ(fresh_opt.second_moments(), opt.second_moments());

    // Both continue identically.
    train_step(*m, opt, 3);
    train_step(*fresh, fresh_opt, 3);
    EXPECT_EQ(eval_logits(*m), eval_logits(*fresh));
}

TEST(Checkpoint, ArchitectureMismatchIsRejected)
{
    ModelSpec mlp;
    mlp.arch = Architecture::mlp;
    mlp.input = {3, 16, 16};
    auto a = build_model<float>(mlp, 1);
    auto b = build_model<float>(cnn_spec(), 1);
    const auto c = capture<float>(*a, nullptr, 0, 0);
    EXPECT_THROW(restore(c, *b), CheckpointError);
    EXPECT_THROW(init_from_pretrained(c, *b), CheckpointError);
}

TEST(Checkpoint, PrecisionChangeNeedsPretrainedPath)
{
    auto spec_fp = cnn_spec();
    spec_fp.quant.bits_w = 32;
    spec_fp.quant.bits_a = 32;
    auto fp = build_model<float>(spec_fp, 5);
    auto q = build_model<float>(cnn_spec(), 6);
    const auto c = capture<float>(*fp, nullptr, 0, 0);
    EXPECT_THROW(restore(c, *q), CheckpointError);
    init_from_pretrained(c, *q);
    for (const auto& e : q->state()) {
        if (e.name.find(".alpha") != std::string::npos)
            continue;
        const auto* a = c.find(e.name);
        ASSERT_NE(a, nullptr) << e.name;
        EXPECT_EQ(std::vector<float>(e.tensor.data().begin(), e.tensor.data().end()), a->data) << e.name;
    }
}

TEST(Checkpoint, DescriptorRoundTrip)
{
    auto s = cnn_spec();
    s.quant.clip = ClipFamily::pact;
    s.quant.weight_round = RoundFamily::activation;
    s.quant.estimator = EstimatorKind::ewgs;
    s.quant.bits_w = 3;
    EXPECT_EQ(describe(parse_model_descriptor(describe(s))), describe(s));
    EXPECT_THROW(parse_model_descriptor("arch=vgg"), FormatError);
}
