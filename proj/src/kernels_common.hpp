#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "mmvb/kernels.hpp"

// Per-element routines shared by the serial and OpenMP backends. Keeping a
// single definition guarantees bit-identical arithmetic between them.

namespace mmvb::kernels::detail {

constexpr int64_t kSumBlock = 1024;
constexpr double kLogFloor = 1e-30;

inline double apply_binary(Binary op, double a, double b) {
    switch (op) {
        case Binary::Add: return a + b;
        case Binary::Sub: return a - b;
        case Binary::Mul: return a * b;
        case Binary::Div: return a / b;
    }
    return 0.0;
}

inline double apply_unary(Unary op, double a) {
    switch (op) {
        case Unary::Exp: return std::exp(a);
        case Unary::LogClamped: return std::log(a < kLogFloor ? kLogFloor : a);
        case Unary::Relu: return a > 0.0 ? a : 0.0;
        case Unary::Neg: return -a;
    }
    return 0.0;
}

inline double dot(const double* a, const double* b, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

inline void softmax_row(const double* a, double* out, int64_t c) {
    double mx = a[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, a[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) {
        out[j] = std::exp(a[j] - mx);
        denom += out[j];
    }
    for (int64_t j = 0; j < c; ++j) out[j] /= denom;
}

inline void masked_softmax_row(const double* a, const uint8_t* mask, double* out, int64_t c) {
    double mx = -1e300;
    for (int64_t j = 0; j < c; ++j)
        if (mask[j]) mx = std::max(mx, a[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) {
        out[j] = mask[j] ? std::exp(a[j] - mx) : 0.0;
        denom += out[j];
    }
    for (int64_t j = 0; j < c; ++j)
        if (mask[j]) out[j] /= denom;
}

inline double logsumexp_row(const double* a, int64_t c) {
    double mx = a[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, a[j]);
    double acc = 0.0;
    for (int64_t j = 0; j < c; ++j) acc += std::exp(a[j] - mx);
    return mx + std::log(acc);
}

inline void layer_norm_row(const double* x, const double* gain, const double* shift, double* out,
                           double* inv_std, double* mean, int64_t c, double eps) {
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += x[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
        const double d = x[j] - mu;
        var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < c; ++j) out[j] = (x[j] - mu) * is * gain[j] + shift[j];
    *inv_std = is;
    *mean = mu;
}

}  // namespace mmvb::kernels::detail
