#include "kernels_common.hpp"
#include "mmvb/kernels.hpp"

namespace mmvb::kernels::serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
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
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c[i * n + j] = detail::dot(a + i * k, b + j * k, k);
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
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
    for (int64_t i = 0; i < n; ++i) out[i] = detail::apply_binary(op, a[i], b[i]);
}

void unary_op(Unary op, const double* a, double* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = detail::apply_unary(op, a[i]);
}

double sum_blocked(const double* a, int64_t n) {
    const int64_t nb = (n + detail::kSumBlock - 1) / detail::kSumBlock;
    double total = 0.0;
    for (int64_t blk = 0; blk < nb; ++blk) {
        const int64_t lo = blk * detail::kSumBlock;
        const int64_t hi = std::min(n, lo + detail::kSumBlock);
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i) acc += a[i];
        total += acc;
    }
    return total;
}

void softmax_rows(const double* a, double* out, int64_t r, int64_t c) {
    for (int64_t i = 0; i < r; ++i) detail::softmax_row(a + i * c, out + i * c, c);
}

void layer_norm_rows(const double* x, const double* gain, const double* shift, double* out,
                     double* inv_std, double* mean, int64_t r, int64_t c, double eps) {
    for (int64_t i = 0; i < r; ++i)
        detail::layer_norm_row(x + i * c, gain, shift, out + i * c, inv_std + i, mean + i, c, eps);
}

}  // namespace mmvb::kernels::serial
