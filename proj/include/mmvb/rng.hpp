#pragma once

#include <cstdint>
#include <random>

#include "mmvb/tensor.hpp"

namespace mmvb {

/// Deterministic random stream. Substreams are derived by hashing
/// (seed, a, b, c) so batch elements can draw independently in parallel
/// while keeping runs bit-reproducible. All transforms (uniform, normal)
/// are implemented here rather than with std:: distributions, which are
/// not pinned across standard library versions.
class Rng {
  public:
    explicit Rng(uint64_t seed);

    /// Substream for e.g. (seed, epoch, sample-index).
    static Rng stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

    uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // N(0, 1)
    int64_t uniform_int(int64_t n);        // {0, ..., n-1}
    /// Draws an index from unnormalized non-negative weights.
    int64_t categorical(const double* w, int64_t n);

    Tensor normal_tensor(Shape shape);
    Tensor uniform_tensor(Shape shape, double lo, double hi);

  private:
    std::mt19937_64 eng_;
};

uint64_t mix64(uint64_t x);

}  // namespace mmvb
