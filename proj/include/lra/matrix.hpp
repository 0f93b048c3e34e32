#pragma once

// Dense row-major matrix of 64-bit floats. Everything in the toolkit (weight
// matrices, minibatches of activations, bias rows) is carried by this type;
// a vector is a 1 x n matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "lra/error.hpp"

namespace lra {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            if (r.size() != m.cols_) throw ShapeError("from_rows: ragged initializer");
            std::copy(r.begin(), r.end(), m.row(i++));
        }
        return m;
    }

    static Matrix row_vector(std::initializer_list<double> v) {
        Matrix m(1, v.size());
        std::copy(v.begin(), v.end(), m.row(0));
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Matrix& operator+=(const Matrix& o) {
        check_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    Matrix map(const std::function<double(double)>& f) const {
        Matrix out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = f(data_[i]);
        return out;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    void check_same_shape(const Matrix& o, const char* op) const {
        if (!same_shape(o))
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_str() + " vs " + o.shape_str());
    }
    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

inline bool operator==(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) && a.storage() == b.storage();
}

/// Standard product a[m x k] * b[k x n]. i-k-j loop order so the inner loop
/// runs over contiguous rows of both b and the output.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// a * transpose(b); b given as [n x k].
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    return matmul(a, transpose(b));
}

/// transpose(a) * b; a given as [k x m], b as [k x n]. Accumulates rank-1
/// slices so all accesses stay row-contiguous.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: row counts differ (" + std::to_string(a.rows()) + " vs " +
                         std::to_string(b.rows()) + ")");
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Matrix c(m, n);
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = ap[i];
            double* ci = c.row(i);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
    return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("hadamard: shape mismatch");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
    return c;
}

/// Adds a 1 x n bias row to every row of a.
inline Matrix add_row_broadcast(Matrix a, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_row_broadcast: bias must be 1x" + std::to_string(a.cols()));
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* r = a.row(i);
        const double* b = bias.row(0);
        for (std::size_t j = 0; j < a.cols(); ++j) r[j] += b[j];
    }
    return a;
}

/// Column means as a 1 x n row.
inline Matrix col_mean(const Matrix& a) {
    Matrix out(1, a.cols());
    if (a.rows() == 0) return out;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += r[j];
    }
    out *= 1.0 / static_cast<double>(a.rows());
    return out;
}

inline double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

inline double dot_flat(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("dot_flat: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

/// Norm re-projection: rescale delta to norm c when its norm exceeds c,
/// otherwise return it unchanged. Vectors (1 x n) use the L2 norm, matrices
/// the Frobenius norm -- the same sum of squares either way. The scale is
/// shaded down by one ulp so re-projecting an already projected value is a
/// bitwise no-op.
inline Matrix normalize(Matrix delta, double c) {
    if (!(c > 0.0)) throw ArgumentError("normalize: constraint must be positive");
    const double n = frobenius_norm(delta);
    if (!(n > c)) return delta;
    const double s = (c / n) * (1.0 - 4.0 * std::numeric_limits<double>::epsilon());
    delta *= s;
    return delta;
}

/// Per-row norm re-projection: each row is an independent displacement
/// vector capped at L2 norm c. Lifts the single-vector rule to a minibatch.
inline Matrix normalize_rows(Matrix delta, double c) {
    if (!(c > 0.0)) throw ArgumentError("normalize_rows: constraint must be positive");
    const double shade = 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        double* r = delta.row(i);
        double sq = 0.0;
        for (std::size_t j = 0; j < delta.cols(); ++j) sq += r[j] * r[j];
        const double n = std::sqrt(sq);
        if (n > c) {
            const double s = (c / n) * shade;
            for (std::size_t j = 0; j < delta.cols(); ++j) r[j] *= s;
        }
    }
    return delta;
}

}  // namespace lra
