#ifndef PEGE_DATA_HPP
#define PEGE_DATA_HPP

#include <pege/curriculum.hpp>
#include <pege/error.hpp>
#include <pege/tensor.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace pege {

// Per-channel affine map applied to raw pixel values scaled to [0, 1].
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// In-memory image classification set. Files keep their raw bytes and are
/// normalized when a sample is read; synthetic data is stored as floats.
struct Dataset {
    std::string name;
    Shape sample_shape; // C, H, W
    std::size_t classes = 0;
    std::vector<std::uint8_t> bytes;
    std::vector<float> values;
    std::vector<int> labels;
    Normalization norm;
    bool augmentable = false;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_size() const { return numel(sample_shape); }

    void read_sample(std::size_t i, float* out) const
    {
        const auto n = sample_size();
        const auto plane = sample_shape[1] * sample_shape[2];
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t ch = k / plane;
            const double raw = bytes.empty() ? values[i * n + k] : bytes[i * n + k] / 255.0;
            out[k] = static_cast<float>((raw - norm.mean[ch]) / norm.stddev[ch]);
        }
    }

    // First n samples.
    Dataset truncated(std::size_t n) const
    {
        if (n >= size())
            return *this;
        Dataset d = *this;
        const auto per = sample_size();
        if (!d.bytes.empty())
            d.bytes.resize(n * per);
        if (!d.values.empty())
            d.values.resize(n * per);
        d.labels.resize(n);
        return d;
    }
};

inline Normalization identity_normalization(std::size_t channels)
{
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

// Per-channel mean and population std of the raw values in [0, 1].
inline Normalization compute_normalization(const Dataset& d)
{
    const auto channels = d.sample_shape[0];
    const auto plane = d.sample_shape[1] * d.sample_shape[2];
    std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
    const auto per = d.sample_size();
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t k = 0; k < per; ++k) {
            const double v = d.bytes.empty() ? d.values[i * per + k] : d.bytes[i * per + k] / 255.0;
            sum[k / plane] += v;
            sum_sq[k / plane] += v * v;
        }
    Normalization norm;
    const double count = static_cast<double>(d.size() * plane);
    for (std::size_t c = 0; c < channels; ++c) {
        const double mean = sum[c] / count;
        const double var = std::max(sum_sq[c] / count - mean * mean, 0.0);
        norm.mean.push_back(mean);
        norm.stddev.push_back(var > 0 ? std::sqrt(var) : 1.0);
    }
    return norm;
}

enum class Split { train, test };

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset)
{
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

} // namespace detail

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

/// Appends the records of one CIFAR-10 binary file: 1 label byte followed
/// by 1024-byte R, G and B planes, repeated.
inline void append_cifar10_file(Dataset& d, const std::filesystem::path& path)
{
    const auto buf = detail::read_file(path);
    if (buf.empty() || buf.size() % kCifarRecordBytes != 0)
        throw FormatError(path.string() + ": length " + std::to_string(buf.size()) + " is not a multiple of " +
                          std::to_string(kCifarRecordBytes));
    const std::size_t records = buf.size() / kCifarRecordBytes;
    d.bytes.reserve(d.bytes.size() + records * kCifarPixels);
    for (std::size_t r = 0; r < records; ++r) {
        const auto* rec = buf.data() + r * kCifarRecordBytes;
        if (rec[0] > 9)
            throw FormatError(path.string() + ": record " + std::to_string(r) + " has label byte " +
                              std::to_string(rec[0]));
        d.labels.push_back(rec[0]);
        d.bytes.insert(d.bytes.end(), rec + 1, rec + kCifarRecordBytes);
    }
}

inline std::vector<std::filesystem::path> cifar10_files(const std::filesystem::path& dir, Split split)
{
    if (split == Split::test)
        return {dir / "test_batch.bin"};
    std::vector<std::filesystem::path> files;
    for (int i = 1; i <= 5; ++i)
        files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    return files;
}

/// CIFAR-10 binary split. Without `norm`, normalization statistics are
/// computed from the loaded split (use the training split's for test data).
inline Dataset load_cifar10_bin(const std::filesystem::path& dir, Split split,
                                const std::optional<Normalization>& norm = std::nullopt)
{
    Dataset d;
    d.name = "cifar10";
    d.sample_shape = {3, 32, 32};
    d.classes = 10;
    d.augmentable = true;
    for (const auto& file : cifar10_files(dir, split))
        append_cifar10_file(d, file);
    d.norm = norm ? *norm : compute_normalization(d);
    return d;
}

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

inline Dataset load_mnist_idx_files(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                                    const std::optional<Normalization>& norm = std::nullopt)
{
    const auto images = detail::read_file(images_path);
    const auto labels = detail::read_file(labels_path);
    if (images.size() < 16 || detail::read_be32(images, 0) != kIdxImageMagic)
        throw FormatError(images_path.string() + ": bad IDX image magic");
    if (labels.size() < 8 || detail::read_be32(labels, 0) != kIdxLabelMagic)
        throw FormatError(labels_path.string() + ": bad IDX label magic");
    const std::size_t n = detail::read_be32(images, 4);
    const std::size_t rows = detail::read_be32(images, 8), cols = detail::read_be32(images, 12);
    const std::size_t n_labels = detail::read_be32(labels, 4);
    if (n != n_labels)
        throw FormatError("IDX image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
    if (images.size() != 16 + n * rows * cols)
        throw FormatError(images_path.string() + ": payload does not match header dimensions");
    if (labels.size() != 8 + n)
        throw FormatError(labels_path.string() + ": payload does not match header dimensions");

    Dataset d;
    d.name = "mnist";
    d.sample_shape = {1, rows, cols};
    d.classes = 10;
    d.bytes.assign(images.begin() + 16, images.end());
    d.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[8 + i] > 9)
            throw FormatError(labels_path.string() + ": label " + std::to_string(labels[8 + i]) + " out of range");
        d.labels.push_back(labels[8 + i]);
    }
    d.norm = norm ? *norm : compute_normalization(d);
    return d;
}

inline Dataset load_mnist_idx(const std::filesystem::path& dir, Split split,
                              const std::optional<Normalization>& norm = std::nullopt)
{
    const std::string prefix = split == Split::train ? "train" : "t10k";
    return load_mnist_idx_files(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), norm);
}

/// Gaussian class clusters on 1 x 8 x 8 samples. Class means are standard
/// normal vectors (pairwise distance ~11), noise has unit variance, labels
/// cycle through the classes. `seed` fixes the means, `sample_seed` the draws,
/// so train and test sets can share clusters.
inline Dataset synth_dataset(std::size_t n, std::size_t classes, std::uint64_t seed, std::uint64_t sample_seed = 0)
{
    if (classes < 2 || n < classes)
        throw ContractError("synth_dataset: need n >= classes >= 2");
    constexpr std::size_t dims = 64;
    std::mt19937_64 mean_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> means(classes * dims);
    for (auto& m : means)
        m = normal(mean_rng);

    std::mt19937_64 rng(splitmix64(seed) ^ splitmix64(sample_seed + 1));
    Dataset d;
    d.name = "synth";
    d.sample_shape = {1, 8, 8};
    d.classes = classes;
    d.values.resize(n * dims);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = i % classes;
        d.labels[i] = static_cast<int>(label);
        for (std::size_t k = 0; k < dims; ++k)
            d.values[i * dims + k] = static_cast<float>(means[label * dims + k] + normal(rng));
    }
    d.norm = identity_normalization(1);
    return d;
}

struct Batch {
    std::vector<float> images;
    Shape shape; // N, C, H, W
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

/// One pass over a dataset per epoch. The order is a permutation seeded by
/// (seed, epoch); augmentation (pad-4 random crop, horizontal flip) draws
/// from the same keys so batches are reproducible.
class BatchIterator {
public:
    BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool shuffle, bool augment,
                  long epoch = 0)
        : data_(&data), batch_(batch_size), seed_(seed), shuffle_(shuffle), augment_(augment && data.augmentable)
    {
        if (batch_size == 0)
            throw ContractError("batch size must be positive");
        start_epoch(epoch);
    }

    void start_epoch(long epoch)
    {
        epoch_ = epoch;
        cursor_ = 0;
        order_.resize(data_->size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (shuffle_) {
            std::mt19937_64 rng(splitmix64(seed_) ^ splitmix64(static_cast<std::uint64_t>(epoch) + 0x5851f42d4c957f2dULL));
            std::shuffle(order_.begin(), order_.end(), rng);
        }
    }

    const std::vector<std::size_t>& order() const { return order_; }
    std::size_t batches_per_epoch() const { return (data_->size() + batch_ - 1) / batch_; }

    // Empty at end of epoch.
    std::optional<Batch> next()
    {
        if (cursor_ >= order_.size())
            return std::nullopt;
        const std::size_t count = std::min(batch_, order_.size() - cursor_);
        const auto& shape = data_->sample_shape;
        const auto per = data_->sample_size();
        Batch b;
        b.shape = {count, shape[0], shape[1], shape[2]};
        b.images.resize(count * per);
        b.labels.resize(count);
        b.indices.assign(order_.begin() + static_cast<long>(cursor_), order_.begin() + static_cast<long>(cursor_ + count));
        std::vector<float> scratch(per);
        for (std::size_t j = 0; j < count; ++j) {
            const auto idx = b.indices[j];
            b.labels[j] = data_->labels[idx];
            float* dst = b.images.data() + j * per;
            if (augment_) {
                data_->read_sample(idx, scratch.data());
                augment_sample(idx, scratch.data(), dst);
            } else {
                data_->read_sample(idx, dst);
            }
        }
        cursor_ += count;
        return b;
    }

private:
    void augment_sample(std::size_t idx, const float* src, float* dst) const
    {
        constexpr long pad = 4;
        const auto& s = data_->sample_shape;
        const long h = static_cast<long>(s[1]), w = static_cast<long>(s[2]);
        const auto key = static_cast<std::uint64_t>(epoch_);
        const long dy = static_cast<long>(counter_uniform(seed_, key, idx, 0) * (2 * pad + 1)) - pad;
        const long dx = static_cast<long>(counter_uniform(seed_, key, idx, 1) * (2 * pad + 1)) - pad;
        const bool flip = counter_uniform(seed_, key, idx, 2) < 0.5;
        for (std::size_t c = 0; c < s[0]; ++c)
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    const long sy = y + dy;
                    const long sx = (flip ? (w - 1 - x) : x) + dx;
                    const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
                    dst[(c * h + y) * w + x] = inside ? src[(c * h + sy) * w + sx] : 0.0f;
                }
    }

    const Dataset* data_;
    std::size_t batch_;
    std::uint64_t seed_;
    bool shuffle_, augment_;
    long epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> order_;
};

/// Prepares the next batches of one epoch on a background thread, handing
/// them over through a bounded queue.
class Prefetcher {
public:
    Prefetcher(BatchIterator it, std::size_t depth = 2) : it_(std::move(it)), depth_(depth)
    {
        worker_ = std::thread([this] { run(); });
    }

    ~Prefetcher()
    {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        worker_.join();
    }

    Prefetcher(const Prefetcher&) = delete;
    Prefetcher& operator=(const Prefetcher&) = delete;

    std::optional<Batch> next()
    {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return !queue_.empty() || done_; });
        if (error_)
            std::rethrow_exception(error_);
        if (queue_.empty())
            return std::nullopt;
        auto b = std::move(queue_.front());
        queue_.pop_front();
        cv_.notify_all();
        return b;
    }

private:
    void run()
    {
        try {
            while (true) {
                auto b = it_.next();
                std::unique_lock lock(mutex_);
                if (!b) {
                    done_ = true;
                    cv_.notify_all();
                    return;
                }
                cv_.wait(lock, [this] { return queue_.size() < depth_ || stop_; });
                if (stop_)
                    return;
                queue_.push_back(std::move(*b));
                cv_.notify_all();
            }
        } catch (...) {
            std::lock_guard lock(mutex_);
            error_ = std::current_exception();
            done_ = true;
            cv_.notify_all();
        }
    }

    BatchIterator it_;
    std::size_t depth_;
    std::deque<Batch> queue_;
    std::mutex mutex_;
    std::condition_variable cv_;
    bool done_ = false, stop_ = false;
    std::exception_ptr error_;
    std::thread worker_;
};

} // namespace pege

#endif // PEGE_DATA_HPP
