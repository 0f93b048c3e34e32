#pragma once

// Single-hidden-layer Elman network trained by feedback-driven alignment
// unfolded through time, for next-step prediction:
//
//   h1_t = W x_t + V z1_{t-1},  z1_t = phi(h1_t),  z2_t = U z1_t,  z1_0 = 0.
//
// Per step (targets are the next inputs, y2_t = x_{t+1}):
//   e2_t = -(y2_t - z2_t)
//   y1_t = phi(h1_t - beta * (E e2_t))        E fixed random, output -> hidden
//   e1_t = -(y1_t - z1_t)
//   dU  = sum_t e2_t (z1_t)^T
//   dV  = sum_t (e1_t (x) phi'(h1_t)) (z1_{t-1})^T
//   dW  = sum_t (e1_t (x) phi'(h1_t)) (x_t)^T
//
// Sequences are stored as [T x dim] matrices, one time step per row. A
// length-T sequence yields T-1 prediction steps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include "lra/activation.hpp"
#include "lra/error.hpp"
#include "lra/matrix.hpp"
#include "lra/rng.hpp"

namespace lra {

struct RnnModel {
    Matrix w_in;      // W,  [hidden x in]
    Matrix w_rec;     // V,  [hidden x hidden]
    Matrix w_out;     // U,  [out x hidden]
    Matrix feedback;  // E,  [hidden x out]
    Act phi = Act::tanh;

    std::size_t hidden_dim() const { return w_in.rows(); }
    std::size_t in_dim() const { return w_in.cols(); }
    std::size_t out_dim() const { return w_out.rows(); }
};

/// Builds a model with fan-in uniform weights and a standard-Gaussian
/// feedback matrix.
inline RnnModel make_rnn(std::size_t in_dim, std::size_t hidden, std::size_t out_dim, Rng& rng) {
    RnnModel m;
    m.w_in = sample_uniform_fan_in(rng, hidden, in_dim, in_dim);
    m.w_rec = sample_uniform_fan_in(rng, hidden, hidden, hidden);
    m.w_out = sample_uniform_fan_in(rng, out_dim, hidden, hidden);
    m.feedback = sample_gaussian(rng, hidden, out_dim, 0.0, 1.0);
    return m;
}

struct RnnTrace {
    Matrix h1;  // [T x hidden]
    Matrix z1;  // [T x hidden]
    Matrix z2;  // [T x out]
};

inline RnnTrace rnn_forward(const RnnModel& m, const Matrix& x_seq) {
    if (x_seq.rows() < 1) throw ShapeError("rnn_forward: empty sequence");
    if (x_seq.cols() != m.in_dim())
        throw ShapeError("rnn_forward: input width " + std::to_string(x_seq.cols()) +
                         " does not match " + std::to_string(m.in_dim()));
    const std::size_t T = x_seq.rows();
    RnnTrace tr;
    tr.h1 = Matrix(T, m.hidden_dim());
    tr.z1 = Matrix(T, m.hidden_dim());
    tr.z2 = Matrix(T, m.out_dim());
    Matrix state(1, m.hidden_dim());  // z1_0 = 0, the null state
    for (std::size_t t = 0; t < T; ++t) {
        Matrix xt(1, m.in_dim());
        std::copy(x_seq.row(t), x_seq.row(t) + m.in_dim(), xt.row(0));
        Matrix h = matmul_nt(xt, m.w_in) + matmul_nt(state, m.w_rec);
        Matrix z = act_apply(m.phi, h);
        Matrix out = matmul_nt(z, m.w_out);
        std::copy(h.row(0), h.row(0) + m.hidden_dim(), tr.h1.row(t));
        std::copy(z.row(0), z.row(0) + m.hidden_dim(), tr.z1.row(t));
        std::copy(out.row(0), out.row(0) + m.out_dim(), tr.z2.row(t));
        state = std::move(z);
    }
    return tr;
}

struct RnnUpdates {
    Matrix dw_in;
    Matrix dw_rec;
    Matrix dw_out;
};

/// Per-step alignment updates summed over the unfolded sequence. x_seq must
/// hold at least two steps; prediction targets stop at the last input.
inline RnnUpdates rnn_lra_updates(const RnnModel& m, const RnnTrace& tr, const Matrix& x_seq,
                                  double beta) {
    if (x_seq.rows() < 2) throw ArgumentError("rnn updates: next-step task needs T >= 2");
    const std::size_t steps = x_seq.rows() - 1;
    RnnUpdates u;
    u.dw_in = Matrix(m.hidden_dim(), m.in_dim());
    u.dw_rec = Matrix(m.hidden_dim(), m.hidden_dim());
    u.dw_out = Matrix(m.out_dim(), m.hidden_dim());

    Matrix e2(1, m.out_dim()), y1(1, m.hidden_dim());
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t j = 0; j < m.out_dim(); ++j)
            e2(0, j) = tr.z2(t, j) - x_seq(t + 1, j);  // -(y2 - z2)

        Matrix displaced(1, m.hidden_dim());
        Matrix proj = matmul_nt(e2, m.feedback);  // (E e2)^T as a row
        for (std::size_t j = 0; j < m.hidden_dim(); ++j)
            displaced(0, j) = tr.h1(t, j) - beta * proj(0, j);
        y1 = act_apply(m.phi, displaced);

        for (std::size_t j = 0; j < m.hidden_dim(); ++j) {
            const double e1 = tr.z1(t, j) - y1(0, j);  // -(y1 - z1)
            const double scaled = e1 * act_deriv_scalar(m.phi, tr.h1(t, j));
            for (std::size_t k = 0; k < m.in_dim(); ++k)
                u.dw_in(j, k) += scaled * x_seq(t, k);
            if (t > 0)
                for (std::size_t k = 0; k < m.hidden_dim(); ++k)
                    u.dw_rec(j, k) += scaled * tr.z1(t - 1, k);
            // t == 0: z1_0 = 0 contributes nothing to dV.
        }
        for (std::size_t j = 0; j < m.out_dim(); ++j)
            for (std::size_t k = 0; k < m.hidden_dim(); ++k)
                u.dw_out(j, k) += e2(0, j) * tr.z1(t, k);
    }
    return u;
}

/// Sequence MSE of next-step predictions: mean over steps and output dims of
/// the squared residual.
inline double rnn_sequence_mse(const RnnTrace& tr, const Matrix& x_seq) {
    if (x_seq.rows() < 2) throw ArgumentError("rnn mse: need T >= 2");
    const std::size_t steps = x_seq.rows() - 1;
    double s = 0.0;
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t j = 0; j < x_seq.cols(); ++j) {
            const double d = tr.z2(t, j) - x_seq(t + 1, j);
            s += d * d;
        }
    return s / static_cast<double>(steps * x_seq.cols());
}

/// Noiseless 1-d sine wave sampled at unit steps; the seed draws the phase.
inline Matrix sine_sequence(std::size_t length, double frequency, std::uint64_t seed) {
    Rng rng(seed);
    const double phase = rng.next_unit() * 2.0 * 3.141592653589793238462643383279502884;
    Matrix x(length, 1);
    for (std::size_t t = 0; t < length; ++t)
        x(t, 0) = std::sin(frequency * static_cast<double>(t) + phase);
    return x;
}

}  // namespace lra
