#ifndef PEGE_TRAINER_HPP
#define PEGE_TRAINER_HPP

#include <pege/checkpoint.hpp>
#include <pege/config.hpp>
#include <pege/data.hpp>
#include <pege/metrics.hpp>
#include <pege/models.hpp>
#include <pege/ops.hpp>
#include <pege/optim.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pege {

struct DataBundle {
    Dataset train;
    Dataset test;
};

/// Reads (or synthesizes) the train and test splits named by the config.
/// Test data is normalized with the training statistics.
inline DataBundle load_data(const TrainConfig& cfg)
{
    DataBundle b;
    const auto& d = cfg.data;
    if (d.name == "cifar10") {
        if (d.dir.empty())
            throw ConfigError("data.dir is required for cifar10");
        b.train = load_cifar10_bin(d.dir, Split::train);
        b.test = load_cifar10_bin(d.dir, Split::test, b.train.norm);
    } else if (d.name == "mnist") {
        if (d.dir.empty())
            throw ConfigError("data.dir is required for mnist");
        b.train = load_mnist_idx(d.dir, Split::train);
        b.test = load_mnist_idx(d.dir, Split::test, b.train.norm);
    } else {
        b.train = synth_dataset(d.synth_n, cfg.model.classes, cfg.seed, 0);
        b.test = synth_dataset(d.synth_test_n, cfg.model.classes, cfg.seed, 1);
    }
    if (d.subset_n > 0)
        b.train = b.train.truncated(d.subset_n);
    if (b.train.sample_shape != cfg.model.input)
        throw ConfigError("data samples are " + to_string(b.train.sample_shape) + ", model expects " +
                          to_string(cfg.model.input));
    if (b.train.classes > cfg.model.classes)
        throw ConfigError("dataset has more classes than model.classes");
    return b;
}

template <class T>
Tensor<T> batch_tensor(const Batch& b)
{
    std::vector<T> v(b.images.begin(), b.images.end());
    return Tensor<T>::constant(b.shape, std::move(v));
}

// Row-wise argmax; ties go to the lowest class index.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits)
{
    const auto n = logits.shape()[0], k = logits.shape()[1];
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (logits.data()[i * k + j] > logits.data()[i * k + best])
                best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

/// Top-1 accuracy in percent of a fully quantized evaluation pass.
template <class T>
double evaluate(Network<T>& model, const Dataset& data, std::size_t batch = 64)
{
    if (data.size() == 0)
        throw ContractError("evaluate: empty dataset");
    BatchIterator it(data, batch, 0, false, false);
    std::size_t correct = 0;
    while (auto b = it.next()) {
        StepContext<T> ctx;
        ctx.mode = Mode::eval;
        const auto logits = forward_quantized(model, batch_tensor<T>(*b), ctx);
        const auto pred = argmax_rows(logits);
        for (std::size_t i = 0; i < pred.size(); ++i)
            correct += pred[i] == b->labels[i];
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

struct TrainOptions {
    bool prefetch = true;
    std::filesystem::path out_dir; // empty: write nothing
    std::function<void(const MetricsRecord&)> on_record;
};

struct TrainResult {
    std::unique_ptr<Network<float>> model;
    std::vector<MetricsRecord> metrics;
    double best_test_acc = -1;
    long steps = 0;
};

namespace detail {

class BatchSource {
public:
    BatchSource(BatchIterator it, bool prefetch)
    {
        if (prefetch)
            prefetcher_.emplace(std::move(it));
        else
            iterator_.emplace(std::move(it));
    }
    std::optional<Batch> next() { return prefetcher_ ? prefetcher_->next() : iterator_->next(); }

private:
    std::optional<BatchIterator> iterator_;
    std::optional<Prefetcher> prefetcher_;
};

inline void save_with_norm(Checkpoint c, const Dataset& train, const std::filesystem::path& path)
{
    const auto& n = train.norm;
    c.arrays.push_back(to_array<double>("data.mean", {n.mean.size()}, n.mean));
    c.arrays.push_back(to_array<double>("data.std", {n.stddev.size()}, n.stddev));
    save_checkpoint(c, path);
}

// Learned state that left its valid domain counts as divergence.
template <class T>
void check_trainable_state(Network<T>& model)
{
    for (const auto& p : model.parameters())
        for (const T v : p.tensor.data())
            if (!std::isfinite(v))
                throw NumericError("non-finite value in " + p.name);
    for (auto* l : model.quant_layers())
        for (auto* q : {&l->weight_quantizer(), &l->activation_quantizer()}) {
            if (!q->active())
                continue;
            try {
                q->current().validate();
            } catch (const ContractError& e) {
                throw NumericError(l->name() + ": " + e.what());
            }
        }
}

} // namespace detail

/// Runs the configured experiment. Each step: draw a batch, quantized
/// forward at the scheduled replacing rate, cross entropy, backward with
/// the scheduled mu, one optimizer step on the latent weights and alphas.
/// Evaluation every `eval_every` epochs appends a metrics record.
///
/// Without prefetch the run is single threaded and every written byte is
/// reproducible; wall-clock time then goes to timing.csv instead of the
/// secs column.
inline TrainResult train(const TrainConfig& cfg, const DataBundle& data, const TrainOptions& opts = {})
{
    using clock = std::chrono::steady_clock;
    cfg.validate();
    TrainResult result;
    result.model = build_model<float>(cfg.model, cfg.seed);
    auto& model = *result.model;
    if (!cfg.pretrained_path.empty())
        init_from_pretrained(load_checkpoint(cfg.pretrained_path), model);

    Optimizer<float> opt(cfg.optimizer, model.parameters());
    const long total = total_steps(cfg, data.train.size());
    const auto sched = resolve_schedules(cfg, total);
    const bool deterministic = !opts.prefetch;
    const bool write = !opts.out_dir.empty();
    if (write)
        std::filesystem::create_directories(opts.out_dir);

    std::vector<std::string> layer_names;
    for (auto* l : model.quant_layers())
        layer_names.push_back(l->name());

    const auto start = clock::now();
    std::string timing = "epoch,step,secs\n";
    long step = 0;
    const auto make_record = [&](long epoch, double loss, double acc) {
        MetricsRecord r;
        r.epoch = epoch;
        r.step = step;
        r.train_loss = loss;
        r.train_acc = acc;
        r.test_acc = evaluate(model, data.test);
        r.p_t = replacement_rate_at(sched.replace, step);
        r.mu_t = mu_at(sched.mu, step);
        r.lr = lr_at(cfg.optimizer.lr, step, std::max(total, step));
        r.disc_err = model.weight_discretization_errors();
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        r.secs = deterministic ? 0.0 : secs;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%ld,%ld,%.6f\n", epoch, step, secs);
        timing += buf;
        return r;
    };
    const auto publish = [&](const MetricsRecord& r) {
        result.metrics.push_back(r);
        if (opts.on_record)
            opts.on_record(r);
        if (write && r.test_acc >= result.best_test_acc)
            detail::save_with_norm(capture(model, &opt, static_cast<std::uint64_t>(step), cfg.seed), data.train,
                                   opts.out_dir / "best.ckpt");
        result.best_test_acc = std::max(result.best_test_acc, r.test_acc);
    };

    for (long epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
        detail::BatchSource source(BatchIterator(data.train, cfg.data.batch, cfg.seed, true, cfg.data.augment, epoch),
                                   opts.prefetch);
        double loss_sum = 0;
        std::size_t seen = 0, correct = 0;
        while (step < total) {
            auto b = source.next();
            if (!b)
                break;
            StepContext<float> ctx;
            ctx.mode = Mode::train;
            ctx.step = step;
            ctx.rate = replacement_rate_at(sched.replace, step);
            ctx.mu = static_cast<float>(mu_at(sched.mu, step));
            ctx.seed = cfg.seed;
            ctx.granularity = cfg.replace.granularity;
            ctx.replace_activations = cfg.replace.activations;
            ctx.calibrate = true;
            const double lr = lr_at(cfg.optimizer.lr, step, total);
            try {
                const auto logits = forward_quantized(model, batch_tensor<float>(*b), ctx);
                const auto loss = cross_entropy(logits, std::span<const int>(b->labels));
                if (!std::isfinite(loss.item()))
                    throw NumericError("non-finite loss");
                model.zero_grad();
                backward(loss);
                opt.step(lr);
                detail::check_trainable_state(model);
                const auto pred = argmax_rows(logits);
                for (std::size_t i = 0; i < pred.size(); ++i)
                    correct += pred[i] == b->labels[i];
                loss_sum += static_cast<double>(loss.item()) * static_cast<double>(pred.size());
                seen += pred.size();
            } catch (const NumericError& e) {
                char buf[256];
                std::snprintf(buf, sizeof buf, "training diverged at epoch %ld step %ld (p_t=%.6f mu_t=%.6f lr=%.6g): ",
                              epoch, step, ctx.rate, static_cast<double>(ctx.mu), lr);
                const std::string diag = buf + std::string(e.what());
                if (write)
                    write_text(opts.out_dir / "diverged.txt", diag + "\n");
                throw NumericError(diag);
            }
            ++step;
        }
        const bool last = epoch + 1 == cfg.epochs || step >= total;
        if ((epoch + 1) % cfg.eval_every == 0 || last) {
            const double n = static_cast<double>(std::max<std::size_t>(seen, 1));
            publish(make_record(epoch, loss_sum / n, 100.0 * static_cast<double>(correct) / n));
        }
    }
    if (result.metrics.empty())
        publish(make_record(0, 0.0, 0.0));
    result.steps = step;

    if (write) {
        detail::save_with_norm(capture(model, &opt, static_cast<std::uint64_t>(step), cfg.seed), data.train,
                               opts.out_dir / "final.ckpt");
        emit_metrics(result.metrics, opts.out_dir / "metrics.csv");
        emit_layer_errors(result.metrics, layer_names, opts.out_dir / "layers.csv");
        if (deterministic)
            write_text(opts.out_dir / "timing.csv", timing);
    }
    return result;
}

/// Rebuilds a model from a checkpoint and scores it on the test split in `dir`.
inline double evaluate_checkpoint(const std::filesystem::path& ckpt_path, const std::filesystem::path& dir)
{
    const auto c = load_checkpoint(ckpt_path);
    const auto spec = parse_model_descriptor(c.descriptor);
    auto model = build_model<float>(spec, 0);
    restore(c, *model);

    std::optional<Normalization> norm;
    const auto* mean = c.find("data.mean");
    const auto* stddev = c.find("data.std");
    if (mean && stddev) {
        Normalization n;
        n.mean.assign(mean->data.begin(), mean->data.end());
        n.stddev.assign(stddev->data.begin(), stddev->data.end());
        norm = n;
    }
    Dataset test;
    if (spec.input == Shape{3, 32, 32})
        test = load_cifar10_bin(dir, Split::test, norm);
    else if (spec.input[0] == 1 && spec.input[1] == 28)
        test = load_mnist_idx(dir, Split::test, norm);
    else
        throw ConfigError("checkpoint input " + to_string(spec.input) + " has no on-disk dataset");
    return evaluate(*model, test);
}

} // namespace pege

#endif // PEGE_TRAINER_HPP
