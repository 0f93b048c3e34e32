#pragma once

// Differentiable activations f and discrete/stochastic post-ops g. A unit
// with a non-differentiable response is factored as g(f(h)): f is the smooth
// part targets attach to, g is the discretization applied on top of it
// (signum, Bernoulli sampling, winner-take-all competition). Discrete ops
// deliberately expose no derivative.

#include <cmath>
#include <cstddef>
#include <string>

#include "lra/error.hpp"
#include "lra/matrix.hpp"
#include "lra/rng.hpp"

namespace lra {

enum class Act {
    identity,
    sigmoid,
    tanh,
    hard_tanh,
    softsign,
    softplus,
    relu,
    relu6,
    softmax,
};

inline const char* act_name(Act a) {
    switch (a) {
        case Act::identity: return "identity";
        case Act::sigmoid: return "sigmoid";
        case Act::tanh: return "tanh";
        case Act::hard_tanh: return "hard_tanh";
        case Act::softsign: return "softsign";
        case Act::softplus: return "softplus";
        case Act::relu: return "relu";
        case Act::relu6: return "relu6";
        case Act::softmax: return "softmax";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    for (Act a : {Act::identity, Act::sigmoid, Act::tanh, Act::hard_tanh, Act::softsign,
                  Act::softplus, Act::relu, Act::relu6, Act::softmax})
        if (s == act_name(a)) return a;
    throw ArgumentError("unknown activation: " + s);
}

inline double sigmoid(double h) { return 1.0 / (1.0 + std::exp(-h)); }

inline double act_apply_scalar(Act a, double h) {
    switch (a) {
        case Act::identity: return h;
        case Act::sigmoid: return sigmoid(h);
        case Act::tanh: return std::tanh(h);
        case Act::hard_tanh: return h < -1.0 ? -1.0 : (h > 1.0 ? 1.0 : h);
        case Act::softsign: return h / (1.0 + std::fabs(h));
        case Act::softplus: return h > 30.0 ? h : std::log1p(std::exp(h));
        case Act::relu: return h > 0.0 ? h : 0.0;
        case Act::relu6: return h < 0.0 ? 0.0 : (h > 6.0 ? 6.0 : h);
        case Act::softmax: throw ArgumentError("softmax is not an elementwise activation");
    }
    return 0.0;
}

inline double act_deriv_scalar(Act a, double h) {
    switch (a) {
        case Act::identity: return 1.0;
        case Act::sigmoid: {
            const double s = sigmoid(h);
            return s * (1.0 - s);
        }
        case Act::tanh: {
            const double t = std::tanh(h);
            return 1.0 - t * t;
        }
        case Act::hard_tanh: return (h > -1.0 && h < 1.0) ? 1.0 : 0.0;
        case Act::softsign: {
            const double d = 1.0 + std::fabs(h);
            return 1.0 / (d * d);
        }
        case Act::softplus: return sigmoid(h);
        case Act::relu: return h > 0.0 ? 1.0 : 0.0;
        case Act::relu6: return (h > 0.0 && h < 6.0) ? 1.0 : 0.0;
        case Act::softmax: throw ArgumentError("softmax has no elementwise derivative");
    }
    return 0.0;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& h) {
    Matrix z(h.rows(), h.cols());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const double* hr = h.row(i);
        double* zr = z.row(i);
        double mx = hr[0];
        for (std::size_t j = 1; j < h.cols(); ++j) mx = std::max(mx, hr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < h.cols(); ++j) {
            zr[j] = std::exp(hr[j] - mx);
            sum += zr[j];
        }
        for (std::size_t j = 0; j < h.cols(); ++j) zr[j] /= sum;
    }
    return z;
}

inline Matrix act_apply(Act a, const Matrix& h) {
    if (a == Act::softmax) return softmax_rows(h);
    Matrix z(h.rows(), h.cols());
    for (std::size_t i = 0; i < h.size(); ++i) z.data()[i] = act_apply_scalar(a, h.data()[i]);
    return z;
}

inline Matrix act_deriv(Act a, const Matrix& h) {
    Matrix d(h.rows(), h.cols());
    for (std::size_t i = 0; i < h.size(); ++i) d.data()[i] = act_deriv_scalar(a, h.data()[i]);
    return d;
}

/// Softmax Jacobian-vector product per row: dh = z (x) (e - <e, z>).
/// e is the loss gradient with respect to the softmax output z.
inline Matrix softmax_jvp(const Matrix& z, const Matrix& e) {
    if (!z.same_shape(e)) throw ShapeError("softmax_jvp: shape mismatch");
    Matrix dh(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double* zr = z.row(i);
        const double* er = e.row(i);
        double inner = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) inner += zr[j] * er[j];
        double* dr = dh.row(i);
        for (std::size_t j = 0; j < z.cols(); ++j) dr[j] = zr[j] * (er[j] - inner);
    }
    return dh;
}

// ---------------------------------------------------------------------------
// Discrete / stochastic post-ops.

enum class DiscreteKind { none, signum, bernoulli, lwta_hard, slwta_soft };

inline const char* discrete_name(DiscreteKind k) {
    switch (k) {
        case DiscreteKind::none: return "none";
        case DiscreteKind::signum: return "signum";
        case DiscreteKind::bernoulli: return "bernoulli";
        case DiscreteKind::lwta_hard: return "lwta_hard";
        case DiscreteKind::slwta_soft: return "slwta_soft";
    }
    return "?";
}

inline DiscreteKind discrete_from_name(const std::string& s) {
    for (DiscreteKind k : {DiscreteKind::none, DiscreteKind::signum, DiscreteKind::bernoulli,
                           DiscreteKind::lwta_hard, DiscreteKind::slwta_soft})
        if (s == discrete_name(k)) return k;
    throw ArgumentError("unknown discrete op: " + s);
}

struct DiscreteOp {
    DiscreteKind kind = DiscreteKind::none;
    std::size_t block_size = 4;  // LWTA/SLWTA only
};

/// Heaviside-style signum: 1 for v >= 0, 0 for v < 0, entry-wise.
inline Matrix signum(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = z.data()[i] >= 0.0 ? 1.0 : 0.0;
    return out;
}

/// Independent draws in {0,1}, entry i set with probability p_i.
inline Matrix bernoulli_star(const Matrix& p, Rng& rng) {
    Matrix out(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p.data()[i];
        if (pi < 0.0 || pi > 1.0)
            throw ArgumentError("bernoulli_star: probability outside [0,1]");
        out.data()[i] = rng.next_bernoulli(pi) ? 1.0 : 0.0;
    }
    return out;
}

inline void check_block(const Matrix& z, std::size_t block_size, const char* op) {
    if (block_size == 0 || z.cols() % block_size != 0)
        throw ShapeError(std::string(op) + ": width " + std::to_string(z.cols()) +
                         " not divisible by block size " + std::to_string(block_size));
}

/// Hard lateral competition: within each contiguous block the maximal entry
/// keeps its value, the rest become 0. Ties go to the lowest index.
inline Matrix lwta_hard(const Matrix& z, std::size_t block_size) {
    check_block(z, block_size, "lwta_hard");
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double* zr = z.row(i);
        double* outr = out.row(i);
        for (std::size_t b = 0; b < z.cols(); b += block_size) {
            std::size_t win = b;
            for (std::size_t j = b + 1; j < b + block_size; ++j)
                if (zr[j] > zr[win]) win = j;
            outr[win] = zr[win];
        }
    }
    return out;
}

/// Soft lateral competition: each block replaced by its softmax.
inline Matrix slwta_soft(const Matrix& z, std::size_t block_size) {
    check_block(z, block_size, "slwta_soft");
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double* zr = z.row(i);
        double* outr = out.row(i);
        for (std::size_t b = 0; b < z.cols(); b += block_size) {
            double mx = zr[b];
            for (std::size_t j = b + 1; j < b + block_size; ++j) mx = std::max(mx, zr[j]);
            double sum = 0.0;
            for (std::size_t j = b; j < b + block_size; ++j) {
                outr[j] = std::exp(zr[j] - mx);
                sum += outr[j];
            }
            for (std::size_t j = b; j < b + block_size; ++j) outr[j] /= sum;
        }
    }
    return out;
}

/// Applies the configured post-op; rng is only consumed for bernoulli.
inline Matrix discrete_apply(const DiscreteOp& op, const Matrix& z, Rng* rng) {
    switch (op.kind) {
        case DiscreteKind::none: return z;
        case DiscreteKind::signum: return signum(z);
        case DiscreteKind::bernoulli:
            if (!rng) throw ConfigError("bernoulli post-op needs an rng");
            return bernoulli_star(z, *rng);
        case DiscreteKind::lwta_hard: return lwta_hard(z, op.block_size);
        case DiscreteKind::slwta_soft: return slwta_soft(z, op.block_size);
    }
    return z;
}

}  // namespace lra
