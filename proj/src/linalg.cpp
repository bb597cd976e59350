#include "mmvb/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmvb::linalg {

namespace {
void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: inner dimensions differ");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            const double aip = a.at(i, p);
            for (int64_t j = 0; j < n; ++j) c.at(i, j) += aip * b.at(p, j);
        }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank2("matmul_nt", a);
    require_rank2("matmul_nt", b);
    if (a.dim(1) != b.dim(1)) throw ShapeError("matmul_nt: inner dimensions differ");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor c = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(j, p);
            c.at(i, j) = acc;
        }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank2("matmul_tn", a);
    require_rank2("matmul_tn", b);
    if (a.dim(0) != b.dim(0)) throw ShapeError("matmul_tn: inner dimensions differ");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c = Tensor::zeros({k, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            const double atp = a.at(i, p);
            for (int64_t j = 0; j < n; ++j) c.at(p, j) += atp * b.at(i, j);
        }
    return c;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
    require_rank2("matvec", a);
    if (x.rank() != 1 || a.dim(1) != x.dim(0)) throw ShapeError("matvec: dimensions differ");
    const int64_t m = a.dim(0), k = a.dim(1);
    Tensor y = Tensor::zeros({m});
    for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < k; ++j) acc += a.at(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

Tensor transpose(const Tensor& a) {
    require_rank2("transpose", a);
    Tensor t({a.dim(1), a.dim(0)});
    for (int64_t i = 0; i < a.dim(0); ++i)
        for (int64_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Tensor identity(int64_t n) {
    Tensor t = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("dot: lengths differ");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

Tensor cholesky(const Tensor& a) {
    require_rank2("cholesky", a);
    const int64_t n = a.dim(0);
    if (a.dim(1) != n) throw ShapeError("cholesky: matrix not square");
    Tensor l = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j <= i; ++j) {
            double s = a.at(i, j);
            for (int64_t p = 0; p < j; ++p) s -= l.at(i, p) * l.at(j, p);
            if (i == j) {
                if (s <= 0.0) throw NumericError("cholesky: matrix not positive definite");
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    return l;
}

Tensor cholesky_solve(const Tensor& l, const Tensor& b) {
    const int64_t n = l.dim(0);
    if (b.rank() != 1 || b.dim(0) != n) throw ShapeError("cholesky_solve: bad rhs");
    Tensor y({n});
    for (int64_t i = 0; i < n; ++i) {
        double s = b[i];
        for (int64_t p = 0; p < i; ++p) s -= l.at(i, p) * y[p];
        y[i] = s / l.at(i, i);
    }
    Tensor x({n});
    for (int64_t i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int64_t p = i + 1; p < n; ++p) s -= l.at(p, i) * x[p];
        x[i] = s / l.at(i, i);
    }
    return x;
}

double cholesky_logdet(const Tensor& l) {
    double acc = 0.0;
    for (int64_t i = 0; i < l.dim(0); ++i) acc += std::log(l.at(i, i));
    return 2.0 * acc;
}

SymEig jacobi_eigen(const Tensor& a, int max_sweeps, double tol) {
    require_rank2("jacobi_eigen", a);
    const int64_t n = a.dim(0);
    if (a.dim(1) != n) throw ShapeError("jacobi_eigen: matrix not square");
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < i; ++j)
            if (std::abs(a.at(i, j) - a.at(j, i)) > 1e-12 * (1.0 + std::abs(a.at(i, j))))
                throw ShapeError("jacobi_eigen: matrix not symmetric");

    Tensor m = a;
    Tensor v = identity(n);
    auto off_norm = [&]() {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j)
                if (i != j) s += m.at(i, j) * m.at(i, j);
        return std::sqrt(s);
    };

    int swept = 0;
    bool converged = n == 1 || off_norm() < tol;
    while (!converged && swept < max_sweeps) {
        for (int64_t p = 0; p < n - 1; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (apq == 0.0) continue;
                const double app = m.at(p, p), aqq = m.at(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int64_t i = 0; i < n; ++i) {
                    const double mip = m.at(i, p), miq = m.at(i, q);
                    m.at(i, p) = c * mip - s * miq;
                    m.at(i, q) = s * mip + c * miq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double mpi = m.at(p, i), mqi = m.at(q, i);
                    m.at(p, i) = c * mpi - s * mqi;
                    m.at(q, i) = s * mpi + c * mqi;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
        ++swept;
        converged = off_norm() < tol;
    }
    if (!converged) throw NumericError("jacobi_eigen: no convergence after " +
                                       std::to_string(max_sweeps) + " sweeps");

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int64_t x, int64_t y) { return m.at(x, x) > m.at(y, y); });
    SymEig out;
    out.values = Tensor({n});
    out.vectors = Tensor({n, n});
    for (int64_t j = 0; j < n; ++j) {
        out.values[j] = m.at(order[static_cast<size_t>(j)], order[static_cast<size_t>(j)]);
        for (int64_t i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[static_cast<size_t>(j)]);
    }
    out.sweeps = swept;
    return out;
}

Tensor qr_q(const Tensor& a) {
    require_rank2("qr_q", a);
    const int64_t m = a.dim(0), n = a.dim(1);
    if (m < n) throw ShapeError("qr_q: need rows >= cols");
    Tensor r = a;
    std::vector<Tensor> vs;  // Householder vectors
    for (int64_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (int64_t i = j; i < m; ++i) norm += r.at(i, j) * r.at(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw NumericError("qr_q: rank-deficient input");
        const double alpha = r.at(j, j) >= 0.0 ? -norm : norm;
        Tensor v = Tensor::zeros({m});
        v[j] = r.at(j, j) - alpha;
        for (int64_t i = j + 1; i < m; ++i) v[i] = r.at(i, j);
        double vnorm2 = 0.0;
        for (int64_t i = j; i < m; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 > 0.0) {
            for (int64_t col = j; col < n; ++col) {
                double proj = 0.0;
                for (int64_t i = j; i < m; ++i) proj += v[i] * r.at(i, col);
                proj *= 2.0 / vnorm2;
                for (int64_t i = j; i < m; ++i) r.at(i, col) -= proj * v[i];
            }
        }
        vs.push_back(std::move(v));
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the first n identity columns.
    Tensor q = Tensor::zeros({m, n});
    for (int64_t j = 0; j < n; ++j) q.at(j, j) = 1.0;
    for (int64_t h = n - 1; h >= 0; --h) {
        const Tensor& v = vs[static_cast<size_t>(h)];
        double vnorm2 = 0.0;
        for (int64_t i = h; i < m; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;
        for (int64_t col = 0; col < n; ++col) {
            double proj = 0.0;
            for (int64_t i = h; i < m; ++i) proj += v[i] * q.at(i, col);
            proj *= 2.0 / vnorm2;
            for (int64_t i = h; i < m; ++i) q.at(i, col) -= proj * v[i];
        }
    }
    return q;
}

std::vector<double> principal_angles(const Tensor& a, const Tensor& b) {
    Tensor qa = qr_q(a);
    Tensor qb = qr_q(b);
    Tensor m = matmul_tn(qa, qb);
    std::vector<double> sv = singular_values(m);
    std::vector<double> angles;
    for (double s : sv) angles.push_back(std::acos(std::clamp(s, 0.0, 1.0)));
    std::sort(angles.begin(), angles.end());
    return angles;
}

Tensor inverse_sqrt_sym(const Tensor& a, double ridge) {
    SymEig e = jacobi_eigen(a, 100, 1e-12);
    const int64_t n = a.dim(0);
    Tensor out = Tensor::zeros({n, n});
    for (int64_t k = 0; k < n; ++k) {
        const double w = e.values[k] + ridge;
        if (w <= 0.0) throw NumericError("inverse_sqrt_sym: non-positive eigenvalue");
        const double iw = 1.0 / std::sqrt(w);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j)
                out.at(i, j) += iw * e.vectors.at(i, k) * e.vectors.at(j, k);
    }
    return out;
}

std::vector<double> singular_values(const Tensor& a) {
    Tensor ata = matmul_tn(a, a);
    // symmetrize against roundoff before the eigensolve
    for (int64_t i = 0; i < ata.dim(0); ++i)
        for (int64_t j = 0; j < i; ++j) {
            const double s = 0.5 * (ata.at(i, j) + ata.at(j, i));
            ata.at(i, j) = s;
            ata.at(j, i) = s;
        }
    SymEig e = jacobi_eigen(ata, 100, 1e-12);
    std::vector<double> sv;
    for (int64_t i = 0; i < e.values.dim(0); ++i) sv.push_back(std::sqrt(std::max(0.0, e.values[i])));
    return sv;
}

}  // namespace mmvb::linalg
