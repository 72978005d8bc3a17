#ifndef PEGE_FINITE_DIFF_HPP
#define PEGE_FINITE_DIFF_HPP

#include <pege/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace pege {

/// Central-difference gradient of a scalar function of one tensor. `f` is
/// evaluated on perturbed constant copies of `x` with recording disabled, so
/// this never touches the registered backward rules it is used to check.
template <class T, class F>
Tensor<T> finite_diff_grad(F&& f, const Tensor<T>& x, T h = T(1e-5))
{
    NoGradGuard no_grad;
    std::vector<T> probe(x.values());
    std::vector<T> out(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const T saved = probe[i];
        probe[i] = saved + h;
        const T plus = f(Tensor<T>::constant(x.shape(), probe)).item();
        probe[i] = saved - h;
        const T minus = f(Tensor<T>::constant(x.shape(), probe)).item();
        probe[i] = saved;
        out[i] = (plus - minus) / (T{2} * h);
    }
    return Tensor<T>::constant(x.shape(), std::move(out));
}

// ||a - b|| / max(||a|| + ||b||, floor); the floor keeps all-zero gradients comparable.
template <class T>
T relative_error(std::span<const T> a, std::span<const T> b, T floor = T(1e-12))
{
    T diff{0}, na{0}, nb{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), floor);
}

} // namespace pege

#endif // PEGE_FINITE_DIFF_HPP
