#pragma once

// Seeded, platform-independent random sampling. The generator is the
// standard-specified mt19937_64 stream; the transforms on top of it are
// fixed here rather than taken from <random> distributions (whose output is
// implementation-defined):
//
//   uniform in [0,1): high 53 bits of the next word, scaled by 2^-53
//   gaussian:         Box-Muller on uniform pairs, second value cached
//
// Identical seed + identical call sequence => identical output bits.

#include <cmath>
#include <cstdint>
#include <random>

#include "lra/error.hpp"
#include "lra/matrix.hpp"

namespace lra {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. u1 is flipped into (0,1] so the log
    /// never sees zero.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    bool next_bernoulli(double p) { return next_unit() < p; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// I.i.d. normal entries in row-major order; std = 0 yields the constant
/// matrix of `mean` without consuming the stream.
inline Matrix sample_gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double std) {
    if (std < 0.0) throw ArgumentError("sample_gaussian: std must be non-negative");
    Matrix m(rows, cols, mean);
    if (std == 0.0) return m;
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = mean + std * rng.next_gaussian();
    return m;
}

/// I.i.d. uniform entries in [-1/sqrt(n_in), +1/sqrt(n_in)].
inline Matrix sample_uniform_fan_in(Rng& rng, std::size_t rows, std::size_t cols, std::size_t n_in) {
    if (n_in == 0) throw ArgumentError("sample_uniform_fan_in: n_in must be >= 1");
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i)
        m.data()[i] = bound * (2.0 * rng.next_unit() - 1.0);
    return m;
}

}  // namespace lra
