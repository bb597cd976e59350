#include "mmvb/rng.hpp"

#include <cmath>

namespace mmvb {

uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : eng_(seed) {}

Rng Rng::stream(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t s = mix64(seed);
    s = mix64(s ^ mix64(a + 0x100000001b3ULL));
    s = mix64(s ^ mix64(b + 0xcbf29ce484222325ULL));
    s = mix64(s ^ mix64(c + 0x27d4eb2f165667c5ULL));
    return Rng(s);
}

uint64_t Rng::next_u64() { return eng_(); }

double Rng::uniform() {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    // Box-Muller, cosine branch only; u clamped away from 0.
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

int64_t Rng::uniform_int(int64_t n) {
    return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
}

int64_t Rng::categorical(const double* w, int64_t n) {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) total += w[i];
    double u = uniform() * total;
    for (int64_t i = 0; i < n; ++i) {
        u -= w[i];
        if (u < 0.0) return i;
    }
    return n - 1;
}

Tensor Rng::normal_tensor(Shape shape) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal();
    return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
}

}  // namespace mmvb
