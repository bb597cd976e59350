#include <atomic>
#include <vector>

#include "kernels_common.hpp"
#include "mmvb/kernels.hpp"

namespace mmvb::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

namespace parallel {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 16384)
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (int64_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 16384)
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c[i * n + j] = detail::dot(a + i * k, b + j * k, k);
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > 16384)
    for (int64_t p = 0; p < k; ++p) {
        double* cp = c + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const double apt = a[i * k + p];
            const double* bi = b + i * n;
            for (int64_t j = 0; j < n; ++j) cp[j] += apt * bi[j];
        }
    }
}

void binary_op(Binary op, const double* a, const double* b, double* out, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 32768)
    for (int64_t i = 0; i < n; ++i) out[i] = detail::apply_binary(op, a[i], b[i]);
}

void unary_op(Unary op, const double* a, double* out, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
    for (int64_t i = 0; i < n; ++i) out[i] = detail::apply_unary(op, a[i]);
}

double sum_blocked(const double* a, int64_t n) {
    const int64_t nb = (n + detail::kSumBlock - 1) / detail::kSumBlock;
    if (nb <= 4) return serial::sum_blocked(a, n);
    std::vector<double> partial(static_cast<size_t>(nb));
#pragma omp parallel for schedule(static)
    for (int64_t blk = 0; blk < nb; ++blk) {
        const int64_t lo = blk * detail::kSumBlock;
        const int64_t hi = std::min(n, lo + detail::kSumBlock);
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i) acc += a[i];
        partial[static_cast<size_t>(blk)] = acc;
    }
    double total = 0.0;
    for (int64_t blk = 0; blk < nb; ++blk) total += partial[static_cast<size_t>(blk)];
    return total;
}

void softmax_rows(const double* a, double* out, int64_t r, int64_t c) {
#pragma omp parallel for schedule(static) if (r * c > 16384)
    for (int64_t i = 0; i < r; ++i) detail::softmax_row(a + i * c, out + i * c, c);
}

void layer_norm_rows(const double* x, const double* gain, const double* shift, double* out,
                     double* inv_std, double* mean, int64_t r, int64_t c, double eps) {
#pragma omp parallel for schedule(static) if (r * c > 16384)
    for (int64_t i = 0; i < r; ++i)
        detail::layer_norm_row(x + i * c, gain, shift, out + i * c, inv_std + i, mean + i, c, eps);
}

}  // namespace parallel

// Dispatching front-end.

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    parallel_enabled() ? parallel::matmul(a, b, c, m, k, n) : serial::matmul(a, b, c, m, k, n);
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    parallel_enabled() ? parallel::matmul_nt(a, b, c, m, k, n) : serial::matmul_nt(a, b, c, m, k, n);
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    parallel_enabled() ? parallel::matmul_tn_acc(a, b, c, m, k, n)
                       : serial::matmul_tn_acc(a, b, c, m, k, n);
}

void binary_op(Binary op, const double* a, const double* b, double* out, int64_t n) {
    parallel_enabled() ? parallel::binary_op(op, a, b, out, n) : serial::binary_op(op, a, b, out, n);
}

void unary_op(Unary op, const double* a, double* out, int64_t n) {
    parallel_enabled() ? parallel::unary_op(op, a, out, n) : serial::unary_op(op, a, out, n);
}

void leaky_relu(const double* a, double* out, int64_t n, double alpha) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : alpha * a[i];
}

void clamp(const double* a, double* out, int64_t n, double lo, double hi) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] < lo ? lo : (a[i] > hi ? hi : a[i]);
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const double* a, double* out, int64_t n, double c) {
    for (int64_t i = 0; i < n; ++i) out[i] = c * a[i];
}

double sum_blocked(const double* a, int64_t n) {
    return parallel_enabled() ? parallel::sum_blocked(a, n) : serial::sum_blocked(a, n);
}

void softmax_rows(const double* a, double* out, int64_t r, int64_t c) {
    parallel_enabled() ? parallel::softmax_rows(a, out, r, c) : serial::softmax_rows(a, out, r, c);
}

void masked_softmax_rows(const double* a, const uint8_t* mask, double* out, int64_t r, int64_t c) {
    for (int64_t i = 0; i < r; ++i) detail::masked_softmax_row(a + i * c, mask, out + i * c, c);
}

void logsumexp_rows(const double* a, double* out, int64_t r, int64_t c) {
    for (int64_t i = 0; i < r; ++i) out[i] = detail::logsumexp_row(a + i * c, c);
}

void layer_norm_rows(const double* x, const double* gain, const double* shift, double* out,
                     double* inv_std, double* mean, int64_t r, int64_t c, double eps) {
    parallel_enabled() ? parallel::layer_norm_rows(x, gain, shift, out, inv_std, mean, r, c, eps)
                       : serial::layer_norm_rows(x, gain, shift, out, inv_std, mean, r, c, eps);
}

}  // namespace mmvb::kernels
