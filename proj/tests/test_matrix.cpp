#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lra/matrix.hpp"
#include "lra/rng.hpp"

using lra::Matrix;
using lra::Rng;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * rng.next_unit() - 1.0);
    return m;
}

// Independent entry-wise oracle for the product.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace

TEST(Matmul, IdentityCase) {
    Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    EXPECT_EQ(matmul(Matrix::identity(2), a), a);
}

TEST(Matmul, RowTimesColumn) {
    Matrix a = Matrix::from_rows({{1, 2}});
    Matrix b = Matrix::from_rows({{3}, {4}});
    Matrix c = matmul(a, b);
    ASSERT_EQ(c.rows(), 1u);
    ASSERT_EQ(c.cols(), 1u);
    EXPECT_DOUBLE_EQ(c(0, 0), 11.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
    Rng rng(11);
    Matrix a = random_matrix(rng, 5, 7);
    Matrix b = random_matrix(rng, 7, 3);
    EXPECT_LE(max_abs_diff(matmul(a, b), matmul_oracle(a, b)), 1e-12);
}

TEST(Matmul, ShapeErrorOnMismatch) {
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), lra::ShapeError);
}

TEST(Matmul, AssociativityOnRandomTriples) {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_matrix(rng, 4, 6);
        Matrix b = random_matrix(rng, 6, 5);
        Matrix c = random_matrix(rng, 5, 3);
        Matrix left = matmul(matmul(a, b), c);
        Matrix right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double denom = std::max(1.0, std::fabs(left.data()[i]));
            EXPECT_LE(std::fabs(left.data()[i] - right.data()[i]) / denom, 1e-9);
        }
    }
}

TEST(MatmulVariants, AgreeWithTransposedProducts) {
    Rng rng(33);
    Matrix a = random_matrix(rng, 4, 6);
    Matrix b = random_matrix(rng, 5, 6);
    EXPECT_LE(max_abs_diff(matmul_nt(a, b), matmul_oracle(a, transpose(b))), 1e-12);
    Matrix c = random_matrix(rng, 6, 4);
    Matrix d = random_matrix(rng, 6, 5);
    EXPECT_LE(max_abs_diff(matmul_tn(c, d), matmul_oracle(transpose(c), d)), 1e-12);
}

TEST(Normalize, BelowThresholdUnchanged) {
    Matrix v = Matrix::row_vector({3, 4});  // norm 5 < 10
    EXPECT_EQ(normalize(v, 10.0), v);
}

TEST(Normalize, RescalesToConstraint) {
    Matrix v = normalize(Matrix::row_vector({3, 4}), 1.0);
    EXPECT_NEAR(v(0, 0), 0.6, 1e-12);
    EXPECT_NEAR(v(0, 1), 0.8, 1e-12);
}

TEST(Normalize, ZeroVectorUnchanged) {
    Matrix z(1, 2);
    EXPECT_EQ(normalize(z, 1.0), z);
}

TEST(Normalize, IdempotentExactly) {
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix v = random_matrix(rng, 3, 4, 5.0);
        const double c = 0.1 + rng.next_unit() * 3.0;
        Matrix once = normalize(v, c);
        Matrix twice = normalize(once, c);
        EXPECT_EQ(once, twice);
    }
}

TEST(Normalize, NormNeverExceedsConstraint) {
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix v = random_matrix(rng, 2, 5, 10.0);
        const double c = 0.1 + rng.next_unit();
        EXPECT_LE(lra::frobenius_norm(normalize(v, c)), c + 1e-12);
    }
}

TEST(Normalize, PreservesDirection) {
    Rng rng(66);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix v = random_matrix(rng, 1, 6, 10.0);
        Matrix n = normalize(v, 0.5);
        const double cosine =
            lra::dot_flat(v, n) / (lra::frobenius_norm(v) * lra::frobenius_norm(n));
        EXPECT_NEAR(cosine, 1.0, 1e-12);
    }
}

TEST(NormalizeRows, CapsEachRowIndependently) {
    Matrix m = Matrix::from_rows({{3, 4}, {0.3, 0.4}});
    Matrix n = normalize_rows(m, 1.0);
    double r0 = std::hypot(n(0, 0), n(0, 1));
    EXPECT_NEAR(r0, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(n(1, 0), 0.3);  // below the cap, untouched
    EXPECT_DOUBLE_EQ(n(1, 1), 0.4);
}

TEST(SampleGaussian, DegenerateStdGivesConstant) {
    Rng rng(1);
    Matrix m = lra::sample_gaussian(rng, 2, 2, 0.0, 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.data()[i], 0.0);
}

TEST(SampleGaussian, LawOfLargeNumbersMean) {
    Rng rng(2);
    double sum = 0.0;
    const std::size_t n = 1000000;
    for (std::size_t i = 0; i < n; ++i) sum += rng.next_gaussian();
    EXPECT_NEAR(sum / n, 0.0, 0.005);
}

TEST(SampleGaussian, FixedSeedReproduces) {
    Rng a(77), b(77);
    Matrix ma = lra::sample_gaussian(a, 3, 5, 0.5, 2.0);
    Matrix mb = lra::sample_gaussian(b, 3, 5, 0.5, 2.0);
    EXPECT_EQ(ma, mb);
}

TEST(SampleUniformFanIn, Bounds) {
    Rng rng(3);
    Matrix m1 = lra::sample_uniform_fan_in(rng, 4, 4, 1);
    for (std::size_t i = 0; i < m1.size(); ++i) {
        EXPECT_GE(m1.data()[i], -1.0);
        EXPECT_LE(m1.data()[i], 1.0);
    }
    Matrix m4 = lra::sample_uniform_fan_in(rng, 4, 4, 4);
    for (std::size_t i = 0; i < m4.size(); ++i) {
        EXPECT_GE(m4.data()[i], -0.5);
        EXPECT_LE(m4.data()[i], 0.5);
    }
}

TEST(SampleUniformFanIn, EmpiricalRangeFillsTheInterval) {
    Rng rng(4);
    Matrix m = lra::sample_uniform_fan_in(rng, 1000, 100, 16);  // 1e5 draws, bound 0.25
    double lo = m.data()[0], hi = m.data()[0];
    for (std::size_t i = 0; i < m.size(); ++i) {
        lo = std::min(lo, m.data()[i]);
        hi = std::max(hi, m.data()[i]);
    }
    EXPECT_GE(lo, -0.25);
    EXPECT_LE(hi, 0.25);
    EXPECT_LE(lo, -0.25 * 0.99);
    EXPECT_GE(hi, 0.25 * 0.99);
}

TEST(SampleUniformFanIn, ZeroFanInRejected) {
    Rng rng(5);
    EXPECT_THROW(lra::sample_uniform_fan_in(rng, 2, 2, 0), lra::ArgumentError);
}

TEST(Rng, IdenticalSeedsIdenticalStreams) {
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}
