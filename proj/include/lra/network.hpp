#pragma once

// The network container and the feedforward pass.
//
// Layer l computes   h^l = z*^{l-1} W_l^T + b_l,   z^l = f_l(h^l),
//                    z*^l = g_l(z^l)               (z*^l == z^l when g = none)
// with minibatches stored row-major as [batch x width]. W_l is
// [width_l x width_{l-1}]; the optional feedback matrix E_l used for target
// displacement is [width_{l-1} x width_l]. The topmost layer is never
// discretized.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lra/activation.hpp"
#include "lra/error.hpp"
#include "lra/loss.hpp"
#include "lra/matrix.hpp"
#include "lra/rng.hpp"

namespace lra {

struct LayerSpec {
    std::size_t width = 0;
    Act f = Act::tanh;
    DiscreteOp g;
    LossKind loss = LossKind::log_penalty;
};

struct Layer {
    Matrix w;  // [out x in]
    Matrix b;  // [1 x out]
    Act f = Act::tanh;
    DiscreteOp g;
    LossKind loss = LossKind::log_penalty;
    std::optional<Matrix> feedback;  // E, [in x out]

    std::size_t in_dim() const { return w.cols(); }
    std::size_t out_dim() const { return w.rows(); }
};

class Network {
public:
    Network() = default;

    Network(std::size_t input_dim, const std::vector<LayerSpec>& specs) : input_dim_(input_dim) {
        if (specs.empty()) throw ConfigError("network needs at least one layer");
        if (specs.back().g.kind != DiscreteKind::none)
            throw ConfigError("topmost layer must not carry a discrete post-op");
        std::size_t in = input_dim;
        for (const auto& s : specs) {
            if (s.width == 0) throw ConfigError("layer width must be positive");
            Layer l;
            l.w = Matrix(s.width, in);
            l.b = Matrix(1, s.width);
            l.f = s.f;
            l.g = s.g;
            l.loss = s.loss;
            layers_.push_back(std::move(l));
            in = s.width;
        }
    }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t depth() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return layers_[i]; }
    const Layer& layer(std::size_t i) const { return layers_[i]; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t output_dim() const { return layers_.back().out_dim(); }

    bool fully_differentiable() const {
        for (const auto& l : layers_)
            if (l.g.kind != DiscreteKind::none) return false;
        return true;
    }

    /// Samples the fixed error-feedback matrices E_l (layers 2..n; the
    /// bottom layer has no subgraph below it). Entries are zero-mean
    /// Gaussians with the given standard deviation, drawn once and never
    /// updated.
    void attach_feedback(Rng& rng, double sigma_e) {
        for (std::size_t i = 1; i < layers_.size(); ++i) {
            Layer& l = layers_[i];
            l.feedback = sample_gaussian(rng, l.in_dim(), l.out_dim(), 0.0, sigma_e);
        }
    }

private:
    std::size_t input_dim_ = 0;
    std::vector<Layer> layers_;
};

struct ForwardTrace {
    Matrix input;                 // z*^0 = x
    std::vector<Matrix> h;        // pre-activations
    std::vector<Matrix> z;        // post-activations f(h)
    std::vector<Matrix> z_star;   // discrete outputs g(z); == z when g = none

    std::size_t batch() const { return input.rows(); }
};

/// Feedforward pass over a minibatch. rng is consumed only by stochastic
/// post-ops, in layer order and row-major entry order within a layer, so a
/// fixed seed reproduces the trace bit for bit.
inline ForwardTrace forward(const Network& net, const Matrix& x, Rng* rng = nullptr) {
    if (x.cols() != net.input_dim())
        throw ShapeError("forward: input width " + std::to_string(x.cols()) + " does not match " +
                         std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.input = x;
    const Matrix* below = &trace.input;
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const Layer& l = net.layer(i);
        Matrix h = add_row_broadcast(matmul_nt(*below, l.w), l.b);
        Matrix z = act_apply(l.f, h);
        Matrix zs = discrete_apply(l.g, z, rng);
        trace.h.push_back(std::move(h));
        trace.z.push_back(std::move(z));
        trace.z_star.push_back(std::move(zs));
        below = &trace.z_star.back();
    }
    return trace;
}

}  // namespace lra
