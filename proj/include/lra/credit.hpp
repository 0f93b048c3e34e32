#pragma once

// Credit assignment engines.
//
// All engines consume a frozen forward trace and emit an UpdateSet of
// parameter displacements (gradient-like: the optimizer subtracts them).
// Loss gradients are kept per sample; weight displacements are averaged over
// the minibatch.
//
// backprop_updates   exact gradients via the recursive target construction
//                    y_z^l = z^l - d L_{l+1} / d z^l with squared layer
//                    losses, which collapses to textbook backprop.
// lra_updates        local representation alignment. Walks subgraphs top
//                    down; per layer takes one constrained gradient step on
//                    the local loss for the weights, then searches a
//                    pre-activation target for the layer below, either
//                    through the transposed weights (diff) or through a
//                    fixed random feedback matrix E (fdbk). Halts early when
//                    a layer's representation already matches its target.
// lra_updates_nondiff  the fdbk walk for networks with discrete/stochastic
//                    post-ops: targets attach to the smooth part z, weight
//                    gradients use the discretized inputs z*, and no
//                    derivative of any post-op is ever taken.
// fa_updates / dfa_updates   feedback-alignment baselines.
// estimator_updates  straight-through / slope-annealed / REINFORCE
//                    estimators for Bernoulli-sigmoid stochastic networks.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lra/error.hpp"
#include "lra/loss.hpp"
#include "lra/matrix.hpp"
#include "lra/network.hpp"
#include "lra/rng.hpp"

namespace lra {

struct LraConfig {
    std::size_t steps = 1;   // K, inner target-search steps
    double epsilon = 0.0;    // halting criterion; 0 keeps the full sweep
    double beta = 0.1;       // target step size
    double c1 = 1.0;         // norm cap for parameter updates
    double c2 = 1.0;         // norm cap for pre-activation displacements

    void check() const {
        if (steps < 1) throw ConfigError("lra: steps must be >= 1");
        if (!(beta > 0.0)) throw ConfigError("lra: beta must be positive");
        if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("lra: norm constraints must be positive");
        if (epsilon < 0.0) throw ConfigError("lra: epsilon must be non-negative");
    }
};

enum class LraMode { diff, fdbk };

struct TargetSet {
    std::vector<std::optional<Matrix>> y_h;  // pre-activation targets
    std::vector<std::optional<Matrix>> y_z;  // post-activation targets

    explicit TargetSet(std::size_t n = 0) : y_h(n), y_z(n) {}
};

struct LayerUpdate {
    Matrix dw;
    Matrix db;
};

struct UpdateSet {
    std::vector<std::optional<LayerUpdate>> layers;
    std::size_t depth = 0;                        // subgraphs whose updates were computed
    std::vector<std::optional<double>> local_loss;  // value checked against epsilon

    explicit UpdateSet(std::size_t n = 0) : layers(n), local_loss(n) {}
};

namespace detail {

/// Per-sample d(loss)/dh for one layer, treating y as a constant. Softmax
/// goes through the full Jacobian-vector product; paired with cross-entropy
/// it reduces to z - y and is special-cased to keep saturated rows stable.
inline Matrix layer_error_h(const Layer& l, const Matrix& h, const Matrix& z, const Matrix& y) {
    if (l.f == Act::softmax) {
        if (l.loss == LossKind::cross_entropy) return z - y;
        return softmax_jvp(z, loss_grad(l.loss, z, y));
    }
    return hadamard(loss_grad(l.loss, z, y), act_deriv(l.f, h));
}

/// Mean weight/bias gradient for dh (per-sample rows) against input rows.
inline LayerUpdate weight_grads(const Matrix& dh, const Matrix& input) {
    LayerUpdate u;
    u.dw = matmul_tn(dh, input);
    u.dw *= 1.0 / static_cast<double>(dh.rows());
    u.db = col_mean(dh);
    return u;
}

}  // namespace detail

/// One-step gradients of the top loss, built through the recursive
/// target construction with squared lower-layer losses. Requires a fully
/// differentiable network.
inline UpdateSet backprop_updates(const Network& net, const ForwardTrace& trace, const Matrix& t) {
    if (!net.fully_differentiable())
        throw ConfigError("backprop requires a fully differentiable network (all g = none)");
    const std::size_t n = net.depth();
    UpdateSet updates(n);
    updates.depth = n;

    // Top layer: gradient of the configured top loss.
    Matrix dh = detail::layer_error_h(net.layer(n - 1), trace.h[n - 1], trace.z[n - 1], t);
    for (std::size_t li = n; li-- > 0;) {
        const Layer& l = net.layer(li);
        const Matrix& input = li == 0 ? trace.input : trace.z_star[li - 1];
        updates.layers[li] = detail::weight_grads(dh, input);
        if (li == 0) break;
        // Target for the layer below: y = z - dL/dz, so the squared layer
        // loss gradient z - y is exactly the propagated error.
        Matrix dz_below = matmul(dh, l.w);
        dh = hadamard(dz_below, act_deriv(net.layer(li - 1).f, trace.h[li - 1]));
    }
    return updates;
}

namespace detail {

struct TargetSearchResult {
    Matrix h_below;          // evolved pre-activation target for layer l-1
    Matrix z_below;          // f_{l-1}(h_below), committed as y_z^{l-1}
    double final_local_loss; // local loss at the recomputed upper activation
};

/// Inner target search on one two-layer subgraph. Walks the lower layer's
/// pre-activation against the upper layer's local loss, recomputing the
/// subgraph activities after each step. The displacement flows through
/// W^T and both activation derivatives in diff mode, or through the fixed
/// feedback matrix E and the upper derivative alone in fdbk mode.
inline TargetSearchResult target_search(const Layer& upper, Act f_below, const Matrix& h_below0,
                                        const Matrix& y_z_upper, const Matrix& h_upper0,
                                        const Matrix& z_upper0, LraMode mode, const LraConfig& cfg,
                                        bool recompute_upper) {
    Matrix h_below = h_below0;
    Matrix z_below = act_apply(f_below, h_below);
    Matrix h_upper = h_upper0;
    Matrix z_upper = z_upper0;
    double local = loss_value(upper.loss, z_upper, y_z_upper);
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        Matrix dh_upper = layer_error_h(upper, h_upper, z_upper, y_z_upper);
        Matrix delta;
        if (mode == LraMode::diff) {
            delta = hadamard(matmul(dh_upper, upper.w), act_deriv(f_below, h_below));
        } else {
            delta = matmul_nt(dh_upper, *upper.feedback);
        }
        delta = normalize_rows(std::move(delta), cfg.c2);
        delta *= cfg.beta;
        h_below -= delta;
        z_below = act_apply(f_below, h_below);
        if (recompute_upper) {
            h_upper = add_row_broadcast(matmul_nt(z_below, upper.w), upper.b);
            z_upper = act_apply(upper.f, h_upper);
            local = loss_value(upper.loss, z_upper, y_z_upper);
        }
    }
    return {std::move(h_below), std::move(z_below), local};
}

inline std::pair<UpdateSet, TargetSet> lra_walk(const Network& net, const ForwardTrace& trace,
                                                const Matrix& t, const LraConfig& cfg, LraMode mode,
                                                bool recompute_upper) {
    cfg.check();
    const std::size_t n = net.depth();
    if (mode == LraMode::fdbk)
        for (std::size_t i = 1; i < n; ++i)
            if (!net.layer(i).feedback)
                throw ConfigError("lra fdbk mode: layer " + std::to_string(i + 1) +
                                  " has no feedback matrix");

    UpdateSet updates(n);
    TargetSet targets(n);
    targets.y_z[n - 1] = t;

    for (std::size_t li = n; li-- > 0;) {
        const Layer& l = net.layer(li);
        const Matrix& y_z = *targets.y_z[li];
        const double local = loss_value(l.loss, trace.z[li], y_z);
        updates.local_loss[li] = local;
        if (local < cfg.epsilon) break;

        Matrix dh = detail::layer_error_h(l, trace.h[li], trace.z[li], y_z);
        const Matrix& input = li == 0 ? trace.input : trace.z_star[li - 1];
        LayerUpdate u = detail::weight_grads(dh, input);
        u.dw = normalize(std::move(u.dw), cfg.c1);
        u.db = normalize(std::move(u.db), cfg.c1);
        updates.layers[li] = std::move(u);
        updates.depth += 1;

        if (li == 0) break;
        auto found = detail::target_search(l, net.layer(li - 1).f, trace.h[li - 1], y_z,
                                           trace.h[li], trace.z[li], mode, cfg, recompute_upper);
        targets.y_h[li - 1] = std::move(found.h_below);
        targets.y_z[li - 1] = std::move(found.z_below);
    }
    return {std::move(updates), std::move(targets)};
}

}  // namespace detail

/// The alignment walk for differentiable networks. diff mode needs
/// differentiable activations throughout; discrete post-ops are tolerated
/// only in fdbk mode, where no derivative of them is required.
inline std::pair<UpdateSet, TargetSet> lra_updates(const Network& net, const ForwardTrace& trace,
                                                   const Matrix& t, const LraConfig& cfg,
                                                   LraMode mode) {
    if (mode == LraMode::diff && !net.fully_differentiable())
        throw ConfigError("lra diff mode requires a fully differentiable network");
    return detail::lra_walk(net, trace, t, cfg, mode, /*recompute_upper=*/true);
}

/// The alignment walk for networks with non-differentiable or stochastic
/// post-ops: fdbk mode with a single displacement step per subgraph and no
/// recomputation of the upper activity. Targets are set for the smooth z,
/// never for z*; weight gradients take the discretized z* as input factor
/// (both come directly from the trace).
inline std::pair<UpdateSet, TargetSet> lra_updates_nondiff(const Network& net,
                                                           const ForwardTrace& trace,
                                                           const Matrix& t, LraConfig cfg) {
    cfg.steps = 1;
    return detail::lra_walk(net, trace, t, cfg, LraMode::fdbk, /*recompute_upper=*/false);
}

/// Feedback alignment: the backward recursion of backprop with W^T replaced
/// by a fixed random matrix of the same shape. feedback[l] is [in_l x out_l];
/// entry 0 is unused. Updates are left un-normalized.
inline UpdateSet fa_updates(const Network& net, const ForwardTrace& trace, const Matrix& t,
                            const std::vector<Matrix>& feedback) {
    if (!net.fully_differentiable())
        throw ConfigError("feedback alignment requires a fully differentiable network");
    const std::size_t n = net.depth();
    if (feedback.size() != n) throw ShapeError("fa: need one feedback matrix per layer");
    for (std::size_t i = 1; i < n; ++i)
        if (feedback[i].rows() != net.layer(i).in_dim() || feedback[i].cols() != net.layer(i).out_dim())
            throw ShapeError("fa: feedback " + std::to_string(i + 1) + " must be shaped like W^T");

    UpdateSet updates(n);
    updates.depth = n;
    Matrix dh = detail::layer_error_h(net.layer(n - 1), trace.h[n - 1], trace.z[n - 1], t);
    for (std::size_t li = n; li-- > 0;) {
        const Matrix& input = li == 0 ? trace.input : trace.z_star[li - 1];
        updates.layers[li] = detail::weight_grads(dh, input);
        if (li == 0) break;
        Matrix dz_below = matmul_nt(dh, feedback[li]);
        dh = hadamard(dz_below, act_deriv(net.layer(li - 1).f, trace.h[li - 1]));
    }
    return updates;
}

/// Direct feedback alignment: the top-layer pre-activation error is projected
/// straight to every hidden layer. feedback[l] is [width_l x output_dim];
/// the top entry is unused.
inline UpdateSet dfa_updates(const Network& net, const ForwardTrace& trace, const Matrix& t,
                             const std::vector<Matrix>& feedback) {
    if (!net.fully_differentiable())
        throw ConfigError("direct feedback alignment requires a fully differentiable network");
    const std::size_t n = net.depth();
    if (feedback.size() != n) throw ShapeError("dfa: need one feedback matrix per layer");
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (feedback[i].rows() != net.layer(i).out_dim() || feedback[i].cols() != net.output_dim())
            throw ShapeError("dfa: feedback " + std::to_string(i + 1) +
                             " must map the output error to the layer width");

    UpdateSet updates(n);
    updates.depth = n;
    Matrix top_err = detail::layer_error_h(net.layer(n - 1), trace.h[n - 1], trace.z[n - 1], t);
    updates.layers[n - 1] = detail::weight_grads(top_err, n == 1 ? trace.input : trace.z_star[n - 2]);
    for (std::size_t li = 0; li + 1 < n; ++li) {
        Matrix dz = matmul_nt(top_err, feedback[li]);
        Matrix dh = hadamard(dz, act_deriv(net.layer(li).f, trace.h[li]));
        updates.layers[li] = detail::weight_grads(dh, li == 0 ? trace.input : trace.z_star[li - 1]);
    }
    return updates;
}

// ---------------------------------------------------------------------------
// Gradient estimators for stochastic Bernoulli-sigmoid networks.

enum class EstimatorKind { ste_passthrough, ste_sigmoid, slope_anneal, reinforce, reinforce_var_adj };

inline const char* estimator_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::ste_passthrough: return "ste_passthrough";
        case EstimatorKind::ste_sigmoid: return "ste_sigmoid";
        case EstimatorKind::slope_anneal: return "slope_anneal";
        case EstimatorKind::reinforce: return "reinforce";
        case EstimatorKind::reinforce_var_adj: return "reinforce_var_adj";
    }
    return "?";
}

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::ste_passthrough;
    double slope = 1.0;             // m, raised over training for slope_anneal
    double slope_increment = 0.04;  // per-epoch increase
    double baseline_decay = 0.99;   // EMA decay for the REINFORCE baseline

    // Running reward statistics (reinforce_var_adj), seeded from the first batch.
    bool ema_ready = false;
    double ema_loss = 0.0;
    double ema_var = 1.0;
};

namespace detail {

inline void check_stochastic_arch(const Network& net, EstimatorKind kind) {
    const std::size_t n = net.depth();
    bool any_sampling = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const Layer& l = net.layer(i);
        if (l.f != Act::sigmoid)
            throw ConfigError("estimator: hidden layer " + std::to_string(i + 1) +
                              " must be sigmoid (Bernoulli-rate architecture)");
        if (l.g.kind == DiscreteKind::bernoulli)
            any_sampling = true;
        else if (l.g.kind != DiscreteKind::none)
            throw ConfigError("estimator: hidden post-ops must be bernoulli (or none)");
    }
    if (net.layer(n - 1).g.kind != DiscreteKind::none)
        throw ConfigError("estimator: top layer must be deterministic");
    const bool reinforce =
        kind == EstimatorKind::reinforce || kind == EstimatorKind::reinforce_var_adj;
    if (reinforce && !any_sampling)
        throw ConfigError("estimator: REINFORCE needs at least one sampling layer");
}

}  // namespace detail

/// Estimated gradients through Bernoulli sampling layers.
///
/// The STE family substitutes the (nonexistent) derivative of the sampling
/// step z* = S(z): identity for ste_passthrough, the logistic-sigmoid
/// derivative for ste_sigmoid, and m * sigm'(m h) for slope_anneal.
/// REINFORCE scores every sampling layer with the per-sample top loss:
/// d/dh = (L - baseline) * (z* - z); the variance-adjusted variant keeps
/// EMA reward statistics inside cfg.
inline UpdateSet estimator_updates(const Network& net, const ForwardTrace& trace, const Matrix& t,
                                   EstimatorConfig& cfg, Rng& /*rng*/) {
    detail::check_stochastic_arch(net, cfg.kind);
    const std::size_t n = net.depth();
    UpdateSet updates(n);
    updates.depth = n;

    Matrix dh = detail::layer_error_h(net.layer(n - 1), trace.h[n - 1], trace.z[n - 1], t);
    updates.layers[n - 1] = detail::weight_grads(dh, n == 1 ? trace.input : trace.z_star[n - 2]);

    const bool reinforce =
        cfg.kind == EstimatorKind::reinforce || cfg.kind == EstimatorKind::reinforce_var_adj;

    if (reinforce) {
        const auto sample_loss = loss_row_values(net.layer(n - 1).loss, trace.z[n - 1], t);
        double mean = 0.0;
        for (double v : sample_loss) mean += v;
        mean /= static_cast<double>(sample_loss.size());

        double baseline = 0.0, scale = 1.0;
        if (cfg.kind == EstimatorKind::reinforce_var_adj) {
            if (!cfg.ema_ready) {
                double var = 0.0;
                for (double v : sample_loss) var += (v - mean) * (v - mean);
                var /= static_cast<double>(sample_loss.size());
                cfg.ema_loss = mean;
                cfg.ema_var = var;
                cfg.ema_ready = true;
            }
            baseline = cfg.ema_loss;
            scale = 1.0 / (std::sqrt(cfg.ema_var) + 1e-8);
        }

        for (std::size_t li = 0; li + 1 < n; ++li) {
            const Layer& l = net.layer(li);
            if (l.g.kind != DiscreteKind::bernoulli) continue;
            Matrix score = trace.z_star[li] - trace.z[li];
            for (std::size_t r = 0; r < score.rows(); ++r) {
                const double wgt = (sample_loss[r] - baseline) * scale;
                double* row = score.row(r);
                for (std::size_t c = 0; c < score.cols(); ++c) row[c] *= wgt;
            }
            updates.layers[li] =
                detail::weight_grads(score, li == 0 ? trace.input : trace.z_star[li - 1]);
        }

        if (cfg.kind == EstimatorKind::reinforce_var_adj) {
            double var = 0.0;
            for (double v : sample_loss) var += (v - cfg.ema_loss) * (v - cfg.ema_loss);
            var /= static_cast<double>(sample_loss.size());
            cfg.ema_loss = cfg.baseline_decay * cfg.ema_loss + (1.0 - cfg.baseline_decay) * mean;
            cfg.ema_var = cfg.baseline_decay * cfg.ema_var + (1.0 - cfg.baseline_decay) * var;
        }
        return updates;
    }

    // STE family: ordinary backward recursion with the sampling derivative
    // substituted per estimator.
    for (std::size_t li = n - 1; li-- > 0;) {
        const Layer& l = net.layer(li);
        Matrix dz_star = matmul(dh, net.layer(li + 1).w);
        Matrix sample_deriv(dz_star.rows(), dz_star.cols(), 1.0);
        if (l.g.kind == DiscreteKind::bernoulli) {
            switch (cfg.kind) {
                case EstimatorKind::ste_passthrough:
                    break;
                case EstimatorKind::ste_sigmoid:
                    sample_deriv = act_deriv(Act::sigmoid, trace.h[li]);
                    break;
                case EstimatorKind::slope_anneal: {
                    const double m = cfg.slope;
                    sample_deriv = trace.h[li].map([m](double h) {
                        return m * act_deriv_scalar(Act::sigmoid, m * h);
                    });
                    break;
                }
                default:
                    break;
            }
        }
        dh = hadamard(hadamard(dz_star, sample_deriv), act_deriv(l.f, trace.h[li]));
        updates.layers[li] = detail::weight_grads(dh, li == 0 ? trace.input : trace.z_star[li - 1]);
    }
    return updates;
}

/// Angle in degrees between two update sets, flattened over every present
/// parameter displacement. Both sets must cover the same layers.
inline double update_angle(const UpdateSet& u1, const UpdateSet& u2) {
    if (u1.layers.size() != u2.layers.size())
        throw ShapeError("update_angle: layer counts differ");
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < u1.layers.size(); ++i) {
        const bool a = u1.layers[i].has_value(), b = u2.layers[i].has_value();
        if (a != b) throw ShapeError("update_angle: update sets cover different layers");
        if (!a) continue;
        dot += dot_flat(u1.layers[i]->dw, u2.layers[i]->dw) + dot_flat(u1.layers[i]->db, u2.layers[i]->db);
        n1 += dot_flat(u1.layers[i]->dw, u1.layers[i]->dw) + dot_flat(u1.layers[i]->db, u1.layers[i]->db);
        n2 += dot_flat(u2.layers[i]->dw, u2.layers[i]->dw) + dot_flat(u2.layers[i]->db, u2.layers[i]->db);
    }
    if (n1 == 0.0 || n2 == 0.0)
        throw DegenerateAngleError("update_angle: zero-norm update set");
    double c = dot / (std::sqrt(n1) * std::sqrt(n2));
    c = std::min(1.0, std::max(-1.0, c));
    return std::acos(c) * (180.0 / 3.141592653589793238462643383279502884);
}

}  // namespace lra
