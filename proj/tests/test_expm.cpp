#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

#include "mvlab/expm.hpp"
#include "oracles.hpp"

using namespace mvlab;

namespace {

double rel_err(const matrix_t& a, const matrix_t& b)
{
    return (a - b).norm() / std::max(1e-300, b.norm());
}

} // namespace

// Covers every Pade branch: the 1-norm scale decides the degree.
TEST(expm, matches_taylor_oracle_across_norm_ranges)
{
    std::mt19937_64 rng(3);
    for (double scale : {1e-3, 0.1, 0.5, 1.5, 4.0, 20.0}) {
        for (int d : {2, 5, 9}) {
            matrix_t a(d, d);
            for (int j = 0; j < d; ++j)
                a.col(j) = oracle::random_vector(rng, d);
            a *= scale / a.cwiseAbs().colwise().sum().maxCoeff();
            EXPECT_LT(rel_err(expm(a), oracle::taylor_expm(a)), 1e-12) << "scale " << scale << " d " << d;
        }
    }
}

TEST(expm, matches_eigen_matrix_functions_on_stable_generators)
{
    std::mt19937_64 rng(5);
    for (int d : {3, 8, 16}) {
        const matrix_t a = oracle::random_stable(rng, d);
        for (double t : {0.01, 0.3, 2.0}) {
            const matrix_t ours = expm(t * a);
            const matrix_t ref = (t * a).exp();
            EXPECT_LT(rel_err(ours, ref), 1e-11);
        }
    }
}

TEST(expm, diagonal_fast_path_is_exact)
{
    matrix_t a = matrix_t::Zero(3, 3);
    a.diagonal() << -1.0, 0.5, -40.0;
    const matrix_t e = expm(a);
    EXPECT_EQ(e(0, 0), std::exp(-1.0));
    EXPECT_EQ(e(1, 1), std::exp(0.5));
    EXPECT_EQ(e(2, 2), std::exp(-40.0));
    EXPECT_EQ(e(0, 1), 0.0);
}

TEST(expm, errors)
{
    EXPECT_THROW(expm(matrix_t::Zero(2, 3)), dimension_error);
    matrix_t big = matrix_t::Zero(2, 2);
    big(0, 0) = 1000.0;
    EXPECT_THROW(expm(big), numerical_range_error);
}
