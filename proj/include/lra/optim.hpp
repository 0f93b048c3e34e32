#pragma once

// Parameter application (SGD / Adam) and weight initialization schemes.
// Layers absent from an UpdateSet (skipped by epsilon-halting) are left
// untouched and, under Adam, do not advance their step counters.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lra/credit.hpp"
#include "lra/error.hpp"
#include "lra/matrix.hpp"
#include "lra/network.hpp"
#include "lra/rng.hpp"

namespace lra {

enum class OptKind { sgd, adam };

struct OptimizerState {
    OptKind kind = OptKind::sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    struct Slot {
        Matrix m_w, v_w, m_b, v_b;
        std::uint64_t step = 0;
    };
    std::vector<Slot> slots;  // sized lazily against the network
};

namespace detail {

inline void adam_step(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                      const OptimizerState& st, std::uint64_t step) {
    if (m.size() != param.size()) m = Matrix(param.rows(), param.cols());
    if (v.size() != param.size()) v = Matrix(param.rows(), param.cols());
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        m.data()[i] = st.beta1 * m.data()[i] + (1.0 - st.beta1) * g;
        v.data()[i] = st.beta2 * v.data()[i] + (1.0 - st.beta2) * g * g;
        const double mhat = m.data()[i] / bc1;
        const double vhat = v.data()[i] / bc2;
        param.data()[i] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.eps);
    }
}

}  // namespace detail

/// Applies an update set in place. sgd: theta -= lr * grad; adam: standard
/// bias-corrected moment update with per-layer step counters.
inline void apply_updates(Network& net, const UpdateSet& updates, OptimizerState& state) {
    if (updates.layers.size() != net.depth())
        throw ShapeError("apply_updates: update set does not match network depth");
    if (state.slots.size() != net.depth()) state.slots.resize(net.depth());
    for (std::size_t i = 0; i < net.depth(); ++i) {
        if (!updates.layers[i]) continue;
        Layer& l = net.layer(i);
        const LayerUpdate& u = *updates.layers[i];
        if (!u.dw.same_shape(l.w) || !u.db.same_shape(l.b))
            throw ShapeError("apply_updates: layer " + std::to_string(i + 1) + " shape mismatch");
        if (state.kind == OptKind::sgd) {
            for (std::size_t j = 0; j < l.w.size(); ++j)
                l.w.data()[j] -= state.learning_rate * u.dw.data()[j];
            for (std::size_t j = 0; j < l.b.size(); ++j)
                l.b.data()[j] -= state.learning_rate * u.db.data()[j];
        } else {
            OptimizerState::Slot& s = state.slots[i];
            s.step += 1;
            detail::adam_step(l.w, u.dw, s.m_w, s.v_w, state, s.step);
            detail::adam_step(l.b, u.db, s.m_b, s.v_b, state, s.step);
        }
    }
}

struct InitScheme {
    enum class Kind { zeros, gaussian, fan_in_uniform };
    Kind kind = Kind::fan_in_uniform;
    double std = 0.05;  // gaussian only
};

inline const char* init_name(InitScheme::Kind k) {
    switch (k) {
        case InitScheme::Kind::zeros: return "zeros";
        case InitScheme::Kind::gaussian: return "gaussian";
        case InitScheme::Kind::fan_in_uniform: return "fan_in_uniform";
    }
    return "?";
}

inline InitScheme::Kind init_from_name(const std::string& s) {
    for (auto k : {InitScheme::Kind::zeros, InitScheme::Kind::gaussian,
                   InitScheme::Kind::fan_in_uniform})
        if (s == init_name(k)) return k;
    throw ArgumentError("unknown init scheme: " + s);
}

/// (Re)initializes all weights per the scheme; biases start from zero.
/// Feedback matrices are untouched -- they are fixed at attachment time.
inline void init_weights(Network& net, const InitScheme& scheme, Rng& rng) {
    for (auto& l : net.layers()) {
        switch (scheme.kind) {
            case InitScheme::Kind::zeros:
                l.w.fill(0.0);
                break;
            case InitScheme::Kind::gaussian:
                l.w = sample_gaussian(rng, l.out_dim(), l.in_dim(), 0.0, scheme.std);
                break;
            case InitScheme::Kind::fan_in_uniform:
                l.w = sample_uniform_fan_in(rng, l.out_dim(), l.in_dim(), l.in_dim());
                break;
        }
        l.b.fill(0.0);
    }
}

}  // namespace lra
