// pege: train, evaluate, gradient-check and inspect schedules.

#include <pege/pege.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

namespace {

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, bool no_prefetch,
              std::string out_dir)
{
    auto cfg = pege::load_train_config(config_path);
    if (seed)
        cfg.seed = *seed;
    if (out_dir.empty())
        out_dir = "runs/" + std::filesystem::path(config_path).stem().string();
    const auto data = pege::load_data(cfg);
    std::printf("train: %s, %zu train / %zu test samples, %ld steps\n", pege::describe(cfg.model).c_str(),
                data.train.size(), data.test.size(), pege::total_steps(cfg, data.train.size()));
    pege::TrainOptions opts;
    opts.prefetch = !no_prefetch;
    opts.out_dir = out_dir;
    opts.on_record = [](const pege::MetricsRecord& r) {
        std::printf("epoch %ld step %ld loss %.4f train %.2f%% test %.2f%% p_t %.3f mu_t %.4f lr %.2e\n", r.epoch,
                    r.step, r.train_loss, r.train_acc, r.test_acc, r.p_t, r.mu_t, r.lr);
        std::fflush(stdout);
    };
    const auto result = pege::train(cfg, data, opts);
    std::printf("best test accuracy %.2f%%; outputs in %s\n", result.best_test_acc, out_dir.c_str());
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dir)
{
    std::printf("test_acc=%.6f\n", pege::evaluate_checkpoint(checkpoint, dir));
    return 0;
}

int run_gradcheck(const std::string& op)
{
    std::vector<pege::GradCheckResult> results;
    if (op.empty())
        results = pege::run_gradcheck_suite();
    else
        results.push_back(pege::run_gradcheck(op));
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-16s %s  instances=%d  max_err=%.3e%s%s\n", r.op.c_str(), r.passed ? "ok  " : "FAIL",
                    r.instances, r.max_error, r.detail.empty() ? "" : "  ", r.detail.c_str());
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

int run_sweep(const std::string& config_path, const std::string& out)
{
    const auto cfg = pege::load_train_config(config_path);
    const long total = pege::total_steps(cfg, pege::nominal_train_size(cfg));
    const auto sched = pege::resolve_schedules(cfg, total);
    std::string csv = "step,p_t,mu_t,lr\n";
    char buf[128];
    for (long t = 0; t <= total; ++t) {
        std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%.6f\n", t, pege::replacement_rate_at(sched.replace, t),
                      pege::mu_at(sched.mu, t), pege::lr_at(cfg.optimizer.lr, t, std::max(total, 1L)));
        csv += buf;
    }
    pege::write_text(out, csv);
    std::printf("wrote %ld rows to %s\n", total + 1, out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantization-aware training with progressive gradient estimation"};
    app.require_subcommand(1);

    std::string config, out, checkpoint, data_dir, op;
    std::optional<std::uint64_t> seed;
    bool no_prefetch = false;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config, "config file")->required();
    train->add_option("--seed", seed, "override train.seed");
    train->add_flag("--no-prefetch", no_prefetch, "single-threaded, byte-reproducible run");
    train->add_option("--out", out, "output directory (default runs/<config name>)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test split");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference and estimator identity checks");
    grad->add_option("--op", op, "check a single op")->check(CLI::IsMember(pege::gradcheck_ops()));

    auto* sweep = app.add_subcommand("sweep", "write p_t, mu_t and lr for every step of a config");
    sweep->add_option("--config", config, "config file")->required();
    sweep->add_option("--out", out, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train)
            return run_train(config, seed, no_prefetch, out);
        if (*eval)
            return run_eval(checkpoint, data_dir);
        if (*grad)
            return run_gradcheck(op);
        if (*sweep)
            return run_sweep(config, out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
