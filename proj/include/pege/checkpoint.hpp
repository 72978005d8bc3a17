#ifndef PEGE_CHECKPOINT_HPP
#define PEGE_CHECKPOINT_HPP

#include <pege/error.hpp>
#include <pege/models.hpp>
#include <pege/optim.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pege {

inline constexpr char kCheckpointMagic[8] = {'P', 'E', 'G', 'E', 'Q', 'A', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointArray {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

/// File layout (all integers little-endian):
///   magic[8] | u32 version | u32 len, descriptor | u64 step | u64 seed |
///   u64 optimizer steps | u32 count | count x (u32 len, name | u32 rank |
///   rank x u32 dim | f32 data)
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string descriptor;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::uint64_t optimizer_steps = 0;
    std::vector<CheckpointArray> arrays;

    const CheckpointArray* find(std::string_view name) const
    {
        for (const auto& a : arrays)
            if (a.name == name)
                return &a;
        return nullptr;
    }
};

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i)
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::string_view s) { out_.append(s); }
    void str(std::string_view s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view in) : in_(in) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
    std::uint64_t u64() { return uint_le(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string_view bytes(std::size_t n)
    {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() { return std::string(bytes(u32())); }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (n > remaining())
            throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t uint_le(int width)
    {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

inline std::map<std::string, std::string> descriptor_fields(const std::string& descriptor)
{
    std::map<std::string, std::string> out;
    std::istringstream in(descriptor);
    std::string item;
    while (std::getline(in, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw FormatError("malformed checkpoint descriptor entry '" + item + "'");
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c)
{
    detail::ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
    w.u32(c.version);
    w.str(c.descriptor);
    w.u64(c.step);
    w.u64(c.seed);
    w.u64(c.optimizer_steps);
    w.u32(static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& a : c.arrays) {
        if (numel(a.shape) != a.data.size())
            throw ContractError("checkpoint array '" + a.name + "' has shape " + to_string(a.shape) + " but " +
                                std::to_string(a.data.size()) + " values");
        w.str(a.name);
        w.u32(static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape)
            w.u32(static_cast<std::uint32_t>(d));
        for (float v : a.data)
            w.f32(v);
    }
    return w.take();
}

inline Checkpoint parse_checkpoint(std::string_view bytes)
{
    detail::ByteReader r(bytes);
    if (r.remaining() < sizeof kCheckpointMagic ||
        std::memcmp(r.bytes(sizeof kCheckpointMagic).data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw FormatError("not a checkpoint: bad magic");
    Checkpoint c;
    c.version = r.u32();
    if (c.version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(c.version));
    c.descriptor = r.str();
    c.step = r.u64();
    c.seed = r.u64();
    c.optimizer_steps = r.u64();
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointArray a;
        a.name = r.str();
        const auto rank = r.u32();
        if (rank > 8)
            throw FormatError("checkpoint array '" + a.name + "' has rank " + std::to_string(rank));
        std::uint64_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            a.shape.push_back(r.u32());
            n *= a.shape.back();
            if (n > r.remaining())
                throw FormatError("checkpoint truncated inside array '" + a.name + "'");
        }
        if (n * 4 > r.remaining())
            throw FormatError("checkpoint truncated inside array '" + a.name + "'");
        a.data.resize(static_cast<std::size_t>(n));
        for (auto& v : a.data)
            v = r.f32();
        c.arrays.push_back(std::move(a));
    }
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after checkpoint arrays");
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path)
{
    const auto bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed for checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

/// Rebuilds the ModelSpec written by describe().
inline ModelSpec parse_model_descriptor(const std::string& descriptor)
{
    const auto f = detail::descriptor_fields(descriptor);
    const auto get = [&](const char* key) -> const std::string& {
        auto it = f.find(key);
        if (it == f.end())
            throw FormatError(std::string("checkpoint descriptor lacks '") + key + "'");
        return it->second;
    };
    ModelSpec s;
    const auto& arch = get("arch");
    if (arch == "mlp") s.arch = Architecture::mlp;
    else if (arch == "small_cnn") s.arch = Architecture::small_cnn;
    else if (arch == "resnet20_lite") s.arch = Architecture::resnet20_lite;
    else throw FormatError("unknown architecture '" + arch + "' in checkpoint");
    try {
        s.width = std::stod(get("width"));
        s.classes = std::stoul(get("classes"));
        std::istringstream dims(get("input"));
        std::string d;
        s.input.clear();
        while (std::getline(dims, d, ','))
            s.input.push_back(std::stoul(d));
        s.quant.bits_w = std::stoi(get("bits_w"));
        s.quant.bits_a = std::stoi(get("bits_a"));
        s.quant.pact_init_m = std::stod(get("pact_init_m"));
        s.quant.delta = std::stod(get("delta"));
    } catch (const std::logic_error&) {
        throw FormatError("malformed number in checkpoint descriptor");
    }
    const auto& clip = get("clip");
    if (clip == "pact") s.quant.clip = ClipFamily::pact;
    else if (clip == "interval") s.quant.clip = ClipFamily::interval;
    else if (clip == "fixed_unit") s.quant.clip = ClipFamily::fixed_unit;
    else throw FormatError("unknown clip family '" + clip + "' in checkpoint");
    const auto& round = get("weight_round");
    if (round == "weight") s.quant.weight_round = RoundFamily::weight;
    else if (round == "activation") s.quant.weight_round = RoundFamily::activation;
    else throw FormatError("unknown round family '" + round + "' in checkpoint");
    const auto& est = get("estimator");
    if (est == "ste") s.quant.estimator = EstimatorKind::ste;
    else if (est == "ewgs") s.quant.estimator = EstimatorKind::ewgs;
    else if (est == "pege") s.quant.estimator = EstimatorKind::pege;
    else throw FormatError("unknown estimator '" + est + "' in checkpoint");
    return s;
}

template <class T>
CheckpointArray to_array(const std::string& name, const Shape& shape, std::span<const T> values)
{
    CheckpointArray a{name, shape, std::vector<float>(values.size())};
    for (std::size_t i = 0; i < values.size(); ++i)
        a.data[i] = static_cast<float>(values[i]);
    return a;
}

/// Snapshot of model state plus (optionally) optimizer moments.
template <class T>
Checkpoint capture(const Network<T>& model, const Optimizer<T>* optimizer, std::uint64_t step, std::uint64_t seed)
{
    Checkpoint c;
    c.descriptor = describe(model.spec());
    c.step = step;
    c.seed = seed;
    for (const auto& e : model.state())
        c.arrays.push_back(to_array<T>(e.name, e.tensor.shape(), e.tensor.data()));
    if (optimizer) {
        c.optimizer_steps = static_cast<std::uint64_t>(optimizer->steps());
        const auto& opt = *optimizer;
        const auto& params = opt.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& name = params[i].name;
            c.arrays.push_back(to_array<T>("opt.m." + name, {opt.first_moments()[i].size()}, std::span<const T>(opt.first_moments()[i])));
            if (!opt.second_moments()[i].empty())
                c.arrays.push_back(
                    to_array<T>("opt.v." + name, {opt.second_moments()[i].size()}, std::span<const T>(opt.second_moments()[i])));
        }
    }
    return c;
}

namespace detail {

template <class T>
void copy_array(const CheckpointArray& a, const Shape& expected, std::span<T> dst)
{
    if (a.shape != expected)
        throw CheckpointError("checkpoint array '" + a.name + "' has shape " + to_string(a.shape) + ", model expects " +
                              to_string(expected));
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = static_cast<T>(a.data[i]);
}

template <class T>
const CheckpointArray& require_array(const Checkpoint& c, const std::string& name)
{
    const auto* a = c.find(name);
    if (!a)
        throw CheckpointError("checkpoint lacks array '" + name + "'");
    return *a;
}

} // namespace detail

/// Loads every model tensor (and optimizer moments when given). The model
/// must have been built from the same descriptor.
template <class T>
void restore(const Checkpoint& c, Network<T>& model, Optimizer<T>* optimizer = nullptr)
{
    const auto expected = describe(model.spec());
    if (c.descriptor != expected)
        throw CheckpointError("checkpoint is for '" + c.descriptor + "', model is '" + expected + "'");
    for (const auto& e : model.state()) {
        auto t = e.tensor;
        detail::copy_array<T>(detail::require_array<T>(c, e.name), t.shape(), t.mutable_data());
    }
    for (auto* l : model.quant_layers()) {
        l->weight_quantizer().calibrated = true;
        l->activation_quantizer().calibrated = true;
    }
    if (optimizer) {
        optimizer->set_steps(static_cast<long>(c.optimizer_steps));
        const auto& params = optimizer->params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& m = optimizer->first_moments()[i];
            detail::copy_array<T>(detail::require_array<T>(c, "opt.m." + params[i].name), {m.size()},
                                  std::span<T>(m));
            auto& v = optimizer->second_moments()[i];
            if (!v.empty())
                detail::copy_array<T>(detail::require_array<T>(c, "opt.v." + params[i].name), {v.size()},
                                      std::span<T>(v));
        }
    }
}

/// Warm start from a checkpoint of the same architecture, possibly trained
/// at another precision: weights, biases and normalization state are
/// copied, quantizer alphas and optimizer state are not. Weight alphas are
/// re-initialized from the loaded weights.
template <class T>
void init_from_pretrained(const Checkpoint& c, Network<T>& model)
{
    const auto theirs = detail::descriptor_fields(c.descriptor);
    const auto ours = detail::descriptor_fields(describe(model.spec()));
    for (const char* key : {"arch", "width", "classes", "input"}) {
        const auto it = theirs.find(key);
        if (it == theirs.end() || it->second != ours.at(key))
            throw CheckpointError(std::string("pretrained checkpoint differs in '") + key + "': " +
                                  (it == theirs.end() ? std::string("missing") : it->second) + " vs " + ours.at(key));
    }
    for (const auto& e : model.state()) {
        if (e.name.find(".alpha") != std::string::npos)
            continue;
        auto t = e.tensor;
        detail::copy_array<T>(detail::require_array<T>(c, e.name), t.shape(), t.mutable_data());
    }
    for (auto* l : model.quant_layers())
        l->reset_weight_quantizer();
}

} // namespace pege

#endif // PEGE_CHECKPOINT_HPP
