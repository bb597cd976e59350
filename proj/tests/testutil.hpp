#pragma once

#include <cmath>
#include <functional>

#include "mmvb/rng.hpp"
#include "mmvb/tensor.hpp"

namespace mmvb::testutil {

// 2001-point trapezoid rule on [-10, 10]; the 1-d quadrature oracle.
inline double quadrature(const std::function<double(double)>& f, double lo = -10.0,
                         double hi = 10.0, int points = 2001) {
    const double h = (hi - lo) / static_cast<double>(points - 1);
    double acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i + 1 < points; ++i) acc += f(lo + h * static_cast<double>(i));
    return acc * h;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
    return t;
}

inline bool bits_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace mmvb::testutil
