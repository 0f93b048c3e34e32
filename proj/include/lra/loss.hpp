#pragma once

// Layer-wise losses measuring the discrepancy between a representation z and
// its target y. Per-sample (per-row) definitions:
//
//   l2           0.5 * sum_i (y_i - z_i)^2
//   l1           sum_i |y_i - z_i|
//   log_penalty  sum_i log(1 + (y_i - z_i)^2)
//   cross_entropy  -sum_i y_i log z_i           (y a distribution, z in (0,1])
//
// loss_value reduces a minibatch to the mean per-row loss; loss_grad returns
// the unreduced per-row d/dz, treating y as a constant.

#include <cmath>
#include <string>
#include <vector>

#include "lra/error.hpp"
#include "lra/matrix.hpp"

namespace lra {

enum class LossKind { l2, l1, log_penalty, cross_entropy };

inline const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::l2: return "l2";
        case LossKind::l1: return "l1";
        case LossKind::log_penalty: return "log_penalty";
        case LossKind::cross_entropy: return "cross_entropy";
    }
    return "?";
}

inline LossKind loss_from_name(const std::string& s) {
    for (LossKind k : {LossKind::l2, LossKind::l1, LossKind::log_penalty, LossKind::cross_entropy})
        if (s == loss_name(k)) return k;
    throw ArgumentError("unknown loss: " + s);
}

namespace detail {
constexpr double kCrossEntropyClamp = 1e-12;
}

/// Per-row loss values over a minibatch.
inline std::vector<double> loss_row_values(LossKind kind, const Matrix& z, const Matrix& y) {
    if (!z.same_shape(y)) throw ShapeError("loss: z and y shapes differ");
    std::vector<double> out(z.rows(), 0.0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double* zr = z.row(i);
        const double* yr = y.row(i);
        double v = 0.0;
        switch (kind) {
            case LossKind::l2:
                for (std::size_t j = 0; j < z.cols(); ++j) {
                    const double d = yr[j] - zr[j];
                    v += 0.5 * d * d;
                }
                break;
            case LossKind::l1:
                for (std::size_t j = 0; j < z.cols(); ++j) v += std::fabs(yr[j] - zr[j]);
                break;
            case LossKind::log_penalty:
                for (std::size_t j = 0; j < z.cols(); ++j) {
                    const double d = yr[j] - zr[j];
                    v += std::log1p(d * d);
                }
                break;
            case LossKind::cross_entropy:
                for (std::size_t j = 0; j < z.cols(); ++j)
                    v -= yr[j] * std::log(std::max(zr[j], detail::kCrossEntropyClamp));
                break;
        }
        out[i] = v;
    }
    return out;
}

/// Mean per-row loss over the minibatch.
inline double loss_value(LossKind kind, const Matrix& z, const Matrix& y) {
    const auto rows = loss_row_values(kind, z, y);
    double s = 0.0;
    for (double v : rows) s += v;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

/// Per-row d/dz. The l1 subgradient at z == y is 0.
inline Matrix loss_grad(LossKind kind, const Matrix& z, const Matrix& y) {
    if (!z.same_shape(y)) throw ShapeError("loss_grad: z and y shapes differ");
    Matrix g(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double zi = z.data()[i];
        const double yi = y.data()[i];
        switch (kind) {
            case LossKind::l2:
                g.data()[i] = zi - yi;
                break;
            case LossKind::l1:
                g.data()[i] = zi > yi ? 1.0 : (zi < yi ? -1.0 : 0.0);
                break;
            case LossKind::log_penalty: {
                const double d = yi - zi;
                g.data()[i] = 2.0 * (zi - yi) / (1.0 + d * d);
                break;
            }
            case LossKind::cross_entropy:
                g.data()[i] = -yi / std::max(zi, detail::kCrossEntropyClamp);
                break;
        }
    }
    return g;
}

}  // namespace lra
