#pragma once

#include <cstdint>

namespace mmvb::kernels {

/// Global switch between the OpenMP kernels and the serial reference
/// implementation. Both compute the identical arithmetic in the identical
/// order (reductions use a fixed block decomposition), so results are
/// bit-identical across the two backends and across thread counts.
void set_parallel(bool on);
bool parallel_enabled();

// C = A(m x k) * B(k x n)
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C = A(m x k) * B(n x k)^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C += A(m x k)^T * B(m x n)   (gradient accumulation helper)
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

enum class Binary { Add, Sub, Mul, Div };
void binary_op(Binary op, const double* a, const double* b, double* out, int64_t n);

enum class Unary { Exp, LogClamped, Relu, Neg };
void unary_op(Unary op, const double* a, double* out, int64_t n);

void leaky_relu(const double* a, double* out, int64_t n, double alpha);
void clamp(const double* a, double* out, int64_t n, double lo, double hi);
void axpy(double alpha, const double* x, double* y, int64_t n);  // y += alpha*x
void scale(const double* a, double* out, int64_t n, double c);

/// Blocked deterministic sum: serial and parallel backends produce
/// bit-identical results for any thread count.
double sum_blocked(const double* a, int64_t n);

// Row-wise ops on an (r x c) matrix.
void softmax_rows(const double* a, double* out, int64_t r, int64_t c);
// Masked variant: absent columns are excluded from the numerator and the
// denominator; their output weight is exactly zero.
void masked_softmax_rows(const double* a, const uint8_t* mask, double* out, int64_t r, int64_t c);
void logsumexp_rows(const double* a, double* out, int64_t r, int64_t c);
void layer_norm_rows(const double* x, const double* gain, const double* shift, double* out,
                     double* inv_std, double* mean, int64_t r, int64_t c, double eps);

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void binary_op(Binary op, const double* a, const double* b, double* out, int64_t n);
void unary_op(Unary op, const double* a, double* out, int64_t n);
double sum_blocked(const double* a, int64_t n);
void softmax_rows(const double* a, double* out, int64_t r, int64_t c);
void layer_norm_rows(const double* x, const double* gain, const double* shift, double* out,
                     double* inv_std, double* mean, int64_t r, int64_t c, double eps);
}  // namespace serial

namespace parallel {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void binary_op(Binary op, const double* a, const double* b, double* out, int64_t n);
void unary_op(Unary op, const double* a, double* out, int64_t n);
double sum_blocked(const double* a, int64_t n);
void softmax_rows(const double* a, double* out, int64_t r, int64_t c);
void layer_norm_rows(const double* x, const double* gain, const double* shift, double* out,
                     double* inv_std, double* mean, int64_t r, int64_t c, double eps);
}  // namespace parallel

}  // namespace mmvb::kernels
