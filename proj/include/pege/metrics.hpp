#ifndef PEGE_METRICS_HPP
#define PEGE_METRICS_HPP

#include <pege/error.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace pege {

struct MetricsRecord {
    long epoch = 0;
    long step = 0;
    double train_loss = 0;
    double train_acc = 0;
    double test_acc = 0;
    double p_t = 1;
    double mu_t = 0;
    double lr = 0;
    std::vector<double> disc_err; // per quantized layer, mean |x_c - x_q|
    double secs = 0;

    double disc_err_mean() const
    {
        if (disc_err.empty())
            return 0.0;
        return std::accumulate(disc_err.begin(), disc_err.end(), 0.0) / static_cast<double>(disc_err.size());
    }
};

inline constexpr const char* kMetricsHeader = "epoch,step,train_loss,train_acc,test_acc,p_t,mu_t,lr,disc_err_mean,secs";

inline std::string format_metrics_row(const MetricsRecord& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "%ld,%ld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.epoch, r.step, r.train_loss,
                  r.train_acc, r.test_acc, r.p_t, r.mu_t, r.lr, r.disc_err_mean(), r.secs);
    return buf;
}

inline std::string format_metrics(const std::vector<MetricsRecord>& series)
{
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : series)
        out += format_metrics_row(r) + "\n";
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << text;
    if (!out)
        throw IoError("write failed for " + path.string());
}

inline void emit_metrics(const std::vector<MetricsRecord>& series, const std::filesystem::path& path)
{
    if (series.empty())
        throw ContractError("emit_metrics: empty series");
    write_text(path, format_metrics(series));
}

// Per-layer discretization errors: one column per quantized layer.
inline void emit_layer_errors(const std::vector<MetricsRecord>& series, const std::vector<std::string>& layer_names,
                              const std::filesystem::path& path)
{
    std::string out = "epoch,step";
    for (const auto& n : layer_names)
        out += "," + n;
    out += "\n";
    char buf[64];
    for (const auto& r : series) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.step);
        for (double e : r.disc_err) {
            std::snprintf(buf, sizeof buf, ",%.6f", e);
            out += buf;
        }
        out += "\n";
    }
    write_text(path, out);
}

} // namespace pege

#endif // PEGE_METRICS_HPP
