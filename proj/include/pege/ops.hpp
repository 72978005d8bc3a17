#ifndef PEGE_OPS_HPP
#define PEGE_OPS_HPP

#include <pege/error.hpp>
#include <pege/parallel.hpp>
#include <pege/tensor.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pege {

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op)
{
    if (s.size() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             to_string(s));
}

inline void require_same(const Shape& a, const Shape& b, const char* op)
{
    if (a != b)
        throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                             " differ");
}

} // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b)
{
    detail::require_rank(a.shape(), 2, "matmul");
    detail::require_rank(b.shape(), 2, "matmul");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner extents " + to_string(a.shape()) + " * " +
                             to_string(b.shape()));
    std::vector<T> out(m * n);
    detail::MatrixMap<T>(out.data(), m, n).noalias() =
        detail::ConstMatrixMap<T>(a.data().data(), m, k) * detail::ConstMatrixMap<T>(b.data().data(), k, n);
    return make_result<T>({m, n}, std::move(out), {a, b},
        [a, b, m, k, n](const auto& self) {
            detail::ConstMatrixMap<T> g(self.grad.data(), m, n);
            std::vector<std::vector<T>> grads(2);
            if (a.requires_grad()) {
                grads[0].resize(m * k);
                detail::MatrixMap<T>(grads[0].data(), m, k).noalias() =
                    g * detail::ConstMatrixMap<T>(b.data().data(), k, n).transpose();
            }
            if (b.requires_grad()) {
                grads[1].resize(k * n);
                detail::MatrixMap<T>(grads[1].data(), k, n).noalias() =
                    detail::ConstMatrixMap<T>(a.data().data(), m, k).transpose() * g;
            }
            return grads;
        },
        "matmul");
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    detail::require_same(a.shape(), b.shape(), "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[i] + b.data()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b},
        [](const auto& self) { return std::vector<std::vector<T>>{self.grad, self.grad}; }, "add");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b)
{
    detail::require_same(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[i] * b.data()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b},
        [a, b](const auto& self) {
            std::vector<std::vector<T>> grads(2, std::vector<T>(self.grad.size()));
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                grads[0][i] = self.grad[i] * b.data()[i];
                grads[1][i] = self.grad[i] * a.data()[i];
            }
            return grads;
        },
        "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor)
{
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x.data()[i] * factor;
    return make_result<T>(x.shape(), std::move(out), {x},
        [factor](const auto& self) {
            std::vector<T> g(self.grad);
            for (auto& v : g)
                v *= factor;
            return std::vector<std::vector<T>>{std::move(g)};
        },
        "scale");
}

template <class T>
Tensor<T> sum(const Tensor<T>& x)
{
    T total{0};
    for (const T v : x.data())
        total += v;
    const auto n = x.size();
    return make_result<T>({1}, {total}, {x},
        [n](const auto& self) { return std::vector<std::vector<T>>{std::vector<T>(n, self.grad[0])}; },
        "sum");
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape)
{
    if (numel(shape) != x.size())
        throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    return make_result<T>(std::move(shape), x.values(), {x},
        [](const auto& self) { return std::vector<std::vector<T>>{self.grad}; }, "reshape");
}

// [N x ...] -> [N x rest]
template <class T>
Tensor<T> flatten(const Tensor<T>& x)
{
    const auto n = x.dim(0);
    return reshape(x, {n, x.size() / n});
}

/// Bias over the channel axis: [N x F] with bias [F], or [N x C x H x W]
/// with bias [C]. The only broadcast the core supports.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias)
{
    if (x.rank() != 2 && x.rank() != 4)
        throw DimensionError("add_bias: input must be rank 2 or 4, got " + to_string(x.shape()));
    const auto n = x.dim(0), c = x.dim(1);
    const auto inner = x.size() / (n * c);
    if (bias.size() != c)
        throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " vs channels " + std::to_string(c));
    std::vector<T> out(x.values());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            T* row = out.data() + (i * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j)
                row[j] += bias.data()[ch];
        }
    return make_result<T>(x.shape(), std::move(out), {x, bias},
        [n, c, inner](const auto& self) {
            std::vector<T> gb(c, T{0});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T* row = self.grad.data() + (i * c + ch) * inner;
                    for (std::size_t j = 0; j < inner; ++j)
                        gb[ch] += row[j];
                }
            return std::vector<std::vector<T>>{self.grad, std::move(gb)};
        },
        "add_bias");
}

// Subgradient at exactly 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& x)
{
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x.data()[i] > T{0} ? x.data()[i] : T{0};
    return make_result<T>(x.shape(), std::move(out), {x},
        [x](const auto& self) {
            std::vector<T> g(self.grad.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = x.data()[i] > T{0} ? self.grad[i] : T{0};
            return std::vector<std::vector<T>>{std::move(g)};
        },
        "relu");
}

struct Conv2dGeometry {
    std::size_t n, c, h, w;
    std::size_t f, kh, kw;
    std::size_t stride, pad;
    std::size_t out_h, out_w;

    std::size_t patch() const { return c * kh * kw; }
    std::size_t pixels() const { return out_h * out_w; }
};

inline Conv2dGeometry conv2d_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad)
{
    detail::require_rank(x, 4, "conv2d");
    detail::require_rank(w, 4, "conv2d");
    if (stride < 1)
        throw ContractError("conv2d: stride must be >= 1");
    if (x[1] != w[1])
        throw DimensionError("conv2d: input channels " + to_string(x) + " vs kernel " + to_string(w));
    Conv2dGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], stride, pad, 0, 0};
    const auto padded_h = g.h + 2 * pad, padded_w = g.w + 2 * pad;
    if (g.kh > padded_h || g.kw > padded_w)
        throw DimensionError("conv2d: kernel " + to_string(w) + " larger than padded input " + to_string(x));
    g.out_h = (padded_h - g.kh) / stride + 1;
    g.out_w = (padded_w - g.kw) / stride + 1;
    if (g.out_h == 0 || g.out_w == 0)
        throw DimensionError("conv2d: non-positive output extent");
    return g;
}

namespace detail {

// Output columns [first, last) whose input column ox * stride + k - pad is inside [0, w).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_w, std::size_t w, std::size_t stride,
                                                       std::size_t k, std::size_t pad)
{
    std::size_t first = 0;
    while (first < out_w && first * stride + k < pad)
        ++first;
    std::size_t last = first;
    while (last < out_w && last * stride + k < pad + w)
        ++last;
    return {first, last};
}

// cols is [patch x (n * pixels)], column index = sample * pixels + pixel.
template <class T>
void im2col(const Conv2dGeometry& g, const T* x, T* cols)
{
    const std::size_t width = g.n * g.pixels();
    parallel_for(g.n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            for (std::size_t ch = 0; ch < g.c; ++ch)
                for (std::size_t ki = 0; ki < g.kh; ++ki)
                    for (std::size_t kj = 0; kj < g.kw; ++kj) {
                        const std::size_t row = (ch * g.kh + ki) * g.kw + kj;
                        T* dst = cols + row * width + s * g.pixels();
                        const T* plane = x + (s * g.c + ch) * g.h * g.w;
                        const auto [x0, x1] = valid_range(g.out_w, g.w, g.stride, kj, g.pad);
                        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                            T* out = dst + oy * g.out_w;
                            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                            if (iy < 0 || iy >= static_cast<long>(g.h) || x0 >= x1) {
                                std::fill_n(out, g.out_w, T{0});
                                continue;
                            }
                            std::fill_n(out, x0, T{0});
                            const T* row_in = plane + iy * g.w - static_cast<long>(g.pad) + kj;
                            for (std::size_t ox = x0; ox < x1; ++ox)
                                out[ox] = row_in[ox * g.stride];
                            std::fill_n(out + x1, g.out_w - x1, T{0});
                        }
                    }
        }
    });
}

template <class T>
void col2im(const Conv2dGeometry& g, const T* cols, T* x)
{
    const std::size_t width = g.n * g.pixels();
    parallel_for(g.n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            for (std::size_t ch = 0; ch < g.c; ++ch)
                for (std::size_t ki = 0; ki < g.kh; ++ki)
                    for (std::size_t kj = 0; kj < g.kw; ++kj) {
                        const std::size_t row = (ch * g.kh + ki) * g.kw + kj;
                        const T* src = cols + row * width + s * g.pixels();
                        T* plane = x + (s * g.c + ch) * g.h * g.w;
                        const auto [x0, x1] = valid_range(g.out_w, g.w, g.stride, kj, g.pad);
                        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                            if (iy < 0 || iy >= static_cast<long>(g.h))
                                continue;
                            T* row_out = plane + iy * g.w - static_cast<long>(g.pad) + kj;
                            for (std::size_t ox = x0; ox < x1; ++ox)
                                row_out[ox * g.stride] += src[oy * g.out_w + ox];
                        }
                    }
        }
    });
}

} // namespace detail

/// Cross-correlation with zero padding; output extent is floored.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride = 1, std::size_t pad = 0)
{
    const auto g = conv2d_geometry(x.shape(), w.shape(), stride, pad);
    const std::size_t width = g.n * g.pixels();
    std::vector<T> cols(g.patch() * width);
    detail::im2col(g, x.data().data(), cols.data());

    std::vector<T> flat(g.f * width);
    detail::MatrixMap<T>(flat.data(), g.f, width).noalias() =
        detail::ConstMatrixMap<T>(w.data().data(), g.f, g.patch()) *
        detail::ConstMatrixMap<T>(cols.data(), g.patch(), width);

    std::vector<T> out(g.n * g.f * g.pixels());
    for (std::size_t s = 0; s < g.n; ++s)
        for (std::size_t f = 0; f < g.f; ++f)
            std::copy_n(flat.data() + f * width + s * g.pixels(), g.pixels(),
                        out.data() + (s * g.f + f) * g.pixels());

    return make_result<T>({g.n, g.f, g.out_h, g.out_w}, std::move(out), {x, w},
        [x, w, g, width, cols = std::move(cols)](const auto& self) {
            std::vector<T> gflat(g.f * width);
            for (std::size_t s = 0; s < g.n; ++s)
                for (std::size_t f = 0; f < g.f; ++f)
                    std::copy_n(self.grad.data() + (s * g.f + f) * g.pixels(), g.pixels(),
                                gflat.data() + f * width + s * g.pixels());
            detail::ConstMatrixMap<T> gmat(gflat.data(), g.f, width);
            std::vector<std::vector<T>> grads(2);
            if (w.requires_grad()) {
                grads[1].resize(g.f * g.patch());
                detail::MatrixMap<T>(grads[1].data(), g.f, g.patch()).noalias() =
                    gmat * detail::ConstMatrixMap<T>(cols.data(), g.patch(), width).transpose();
            }
            if (x.requires_grad()) {
                std::vector<T> gcols(g.patch() * width);
                detail::MatrixMap<T>(gcols.data(), g.patch(), width).noalias() =
                    detail::ConstMatrixMap<T>(w.data().data(), g.f, g.patch()).transpose() * gmat;
                grads[0].assign(x.size(), T{0});
                detail::col2im(g, gcols.data(), grads[0].data());
            }
            return grads;
        },
        "conv2d");
}

/// Non-overlapping max pooling with window = stride = k; extents floored.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k = 2)
{
    detail::require_rank(x.shape(), 4, "max_pool2d");
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto oh = h / k, ow = w / k;
    if (k == 0 || oh == 0 || ow == 0)
        throw DimensionError("max_pool2d: window " + std::to_string(k) + " too large for " + to_string(x.shape()));
    std::vector<T> out(n * c * oh * ow);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const T* src = x.data().data() + plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * k) * w + ox * k;
                for (std::size_t dy = 0; dy < k; ++dy)
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::size_t idx = (oy * k + dy) * w + ox * k + dx;
                        if (src[idx] > src[best])
                            best = idx;
                    }
                const std::size_t o = (plane * oh + oy) * ow + ox;
                out[o] = src[best];
                argmax[o] = plane * h * w + best;
            }
    }
    const auto total = x.size();
    return make_result<T>({n, c, oh, ow}, std::move(out), {x},
        [total, argmax = std::move(argmax)](const auto& self) {
            std::vector<T> g(total, T{0});
            for (std::size_t o = 0; o < argmax.size(); ++o)
                g[argmax[o]] += self.grad[o];
            return std::vector<std::vector<T>>{std::move(g)};
        },
        "max_pool2d");
}

// [N x C x H x W] -> [N x C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x)
{
    detail::require_rank(x.shape(), 4, "global_avg_pool");
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> out(n * c);
    for (std::size_t p = 0; p < n * c; ++p) {
        T acc{0};
        for (std::size_t j = 0; j < hw; ++j)
            acc += x.data()[p * hw + j];
        out[p] = acc / static_cast<T>(hw);
    }
    return make_result<T>({n, c}, std::move(out), {x},
        [n, c, hw](const auto& self) {
            std::vector<T> g(n * c * hw);
            for (std::size_t p = 0; p < n * c; ++p)
                std::fill_n(g.data() + p * hw, hw, self.grad[p] / static_cast<T>(hw));
            return std::vector<std::vector<T>>{std::move(g)};
        },
        "global_avg_pool");
}

/// Parameter-free residual shortcut: spatial subsampling by `stride` and
/// symmetric zero padding of the channel axis up to `out_channels`.
template <class T>
Tensor<T> downsample_pad(const Tensor<T>& x, std::size_t stride, std::size_t out_channels)
{
    detail::require_rank(x.shape(), 4, "downsample_pad");
    const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_channels < c || stride < 1)
        throw DimensionError("downsample_pad: cannot map " + std::to_string(c) + " channels to " +
                             std::to_string(out_channels));
    const auto oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    const auto front = (out_channels - c) / 2;
    std::vector<T> out(n * out_channels * oh * ow, T{0});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx)
                    out[((s * out_channels + ch + front) * oh + y) * ow + xx] =
                        x.data()[((s * c + ch) * h + y * stride) * w + xx * stride];
    const auto total = x.size();
    return make_result<T>({n, out_channels, oh, ow}, std::move(out), {x},
        [=](const auto& self) {
            std::vector<T> g(total, T{0});
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t y = 0; y < oh; ++y)
                        for (std::size_t xx = 0; xx < ow; ++xx)
                            g[((s * c + ch) * h + y * stride) * w + xx * stride] =
                                self.grad[((s * out_channels + ch + front) * oh + y) * ow + xx];
            return std::vector<std::vector<T>>{std::move(g)};
        },
        "downsample_pad");
}

/// Per-channel batch normalization over [N x C x H x W] (or [N x C]).
/// In training mode batch statistics are used and the running estimates are
/// updated in place; otherwise the running estimates are used unchanged.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::span<T> running_mean, std::span<T> running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5))
{
    if (x.rank() != 2 && x.rank() != 4)
        throw DimensionError("batch_norm: input must be rank 2 or 4, got " + to_string(x.shape()));
    const auto n = x.dim(0), c = x.dim(1);
    const auto inner = x.size() / (n * c);
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c)
        throw DimensionError("batch_norm: parameter extents do not match " + std::to_string(c) + " channels");
    const auto count = n * inner;

    std::vector<T> mean(c), inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (training) {
            double acc = 0, acc2 = 0;
            for (std::size_t s = 0; s < n; ++s) {
                const T* row = x.data().data() + (s * c + ch) * inner;
                for (std::size_t j = 0; j < inner; ++j)
                    acc += row[j];
            }
            const double mu = acc / static_cast<double>(count);
            for (std::size_t s = 0; s < n; ++s) {
                const T* row = x.data().data() + (s * c + ch) * inner;
                for (std::size_t j = 0; j < inner; ++j)
                    acc2 += (row[j] - mu) * (row[j] - mu);
            }
            const double var = acc2 / static_cast<double>(count);
            mean[ch] = static_cast<T>(mu);
            inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
            const double unbiased = count > 1 ? acc2 / static_cast<double>(count - 1) : var;
            running_mean[ch] = static_cast<T>((1 - momentum) * running_mean[ch] + momentum * mu);
            running_var[ch] = static_cast<T>((1 - momentum) * running_var[ch] + momentum * unbiased);
        } else {
            mean[ch] = running_mean[ch];
            inv_std[ch] = T{1} / std::sqrt(running_var[ch] + eps);
        }
    }

    std::vector<T> normalized(x.size()), out(x.size());
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * inner;
            for (std::size_t j = 0; j < inner; ++j) {
                normalized[base + j] = (x.data()[base + j] - mean[ch]) * inv_std[ch];
                out[base + j] = gamma.data()[ch] * normalized[base + j] + beta.data()[ch];
            }
        }

    return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
        [gamma, n, c, inner, count, training, inv_std = std::move(inv_std),
         normalized = std::move(normalized)](const auto& self) {
            std::vector<T> gx(self.grad.size()), gg(c, T{0}), gb(c, T{0});
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t base = (s * c + ch) * inner;
                    for (std::size_t j = 0; j < inner; ++j) {
                        gg[ch] += self.grad[base + j] * normalized[base + j];
                        gb[ch] += self.grad[base + j];
                    }
                }
            const T inv_count = T{1} / static_cast<T>(count);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t base = (s * c + ch) * inner;
                    const T k = gamma.data()[ch] * inv_std[ch];
                    for (std::size_t j = 0; j < inner; ++j) {
                        const T g = self.grad[base + j];
                        gx[base + j] = training
                            ? k * (g - inv_count * gb[ch] - normalized[base + j] * inv_count * gg[ch])
                            : k * g;
                    }
                }
            return std::vector<std::vector<T>>{std::move(gx), std::move(gg), std::move(gb)};
        },
        "batch_norm");
}

/// Mean over the batch of -log softmax(logits)[label], max-subtracted.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels)
{
    detail::require_rank(logits.shape(), 2, "cross_entropy");
    const auto n = logits.dim(0), c = logits.dim(1);
    if (n == 0)
        throw ContractError("cross_entropy: empty batch");
    if (labels.size() != n)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(n) + " rows");
    std::vector<T> probs(n * c);
    T loss{0};
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                             std::to_string(c) + ")");
        const T* row = logits.data().data() + i * c;
        const T top = *std::max_element(row, row + c);
        T z{0};
        for (std::size_t j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(row[j] - top);
            z += probs[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j)
            probs[i * c + j] /= z;
        loss += std::log(z) - (row[labels[i]] - top);
    }
    loss /= static_cast<T>(n);
    std::vector<int> targets(labels.begin(), labels.end());
    return make_result<T>({1}, {loss}, {logits},
        [n, c, probs = std::move(probs), targets = std::move(targets)](const auto& self) {
            std::vector<T> g(probs);
            const T scale = self.grad[0] / static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i) {
                g[i * c + static_cast<std::size_t>(targets[i])] -= T{1};
                for (std::size_t j = 0; j < c; ++j)
                    g[i * c + j] *= scale;
            }
            return std::vector<std::vector<T>>{std::move(g)};
        },
        "cross_entropy");
}

} // namespace pege

#endif // PEGE_OPS_HPP
