#pragma once

#include <vector>

#include "mmvb/tensor.hpp"

// Dense helpers for the analytic/oracle paths. These run on plain tensors,
// independent of the tape, so oracle results never share code with the
// differentiable implementations they are used to check.

namespace mmvb::linalg {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // [m,k]^T x [m,n]
Tensor matvec(const Tensor& a, const Tensor& x);
Tensor transpose(const Tensor& a);
Tensor identity(int64_t n);
double dot(const Tensor& a, const Tensor& b);

/// Lower-triangular L with A = L L^T. Throws NumericError if A is not SPD.
Tensor cholesky(const Tensor& a);
Tensor cholesky_solve(const Tensor& l, const Tensor& b);  // b: vector
double cholesky_logdet(const Tensor& l);                  // log det(A)

struct SymEig {
    Tensor values;   // descending
    Tensor vectors;  // columns are eigenvectors, A = V diag(values) V^T
    int sweeps = 0;
};

/// Cyclic Jacobi rotations; converged when the off-diagonal Frobenius norm
/// drops below tol. Throws NumericError after max_sweeps sweeps.
SymEig jacobi_eigen(const Tensor& a, int max_sweeps = 100, double tol = 1e-12);

/// Thin Q factor (m x n, m >= n) of a Householder QR.
Tensor qr_q(const Tensor& a);

/// Angles between the column spaces of a and b (radians, ascending).
std::vector<double> principal_angles(const Tensor& a, const Tensor& b);

/// V diag((w + ridge)^(-1/2)) V^T for symmetric a.
Tensor inverse_sqrt_sym(const Tensor& a, double ridge);

/// Singular values of a general matrix (descending), via Jacobi on A^T A.
std::vector<double> singular_values(const Tensor& a);

}  // namespace mmvb::linalg
