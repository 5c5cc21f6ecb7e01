#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mvlab/hilbert.hpp"
#include "oracles.hpp"

using namespace mvlab;

TEST(hilbert, norm_of_zero_vector)
{
    EXPECT_EQ(norm(state_vector(3)), 0.0);
}

TEST(hilbert, norm_pythagorean)
{
    EXPECT_DOUBLE_EQ(norm(state_vector{3.0, 4.0}), 5.0);
}

TEST(hilbert, norm_squared_matches_inner_product)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const state_vector x(oracle::random_vector(rng, 1 + trial % 9));
        double dot = 0.0;
        for (std::size_t i = 0; i < x.dim(); ++i)
            dot += x[i] * x[i];
        EXPECT_NEAR(norm(x) * norm(x), dot, 1e-12 * std::max(1.0, dot));
        EXPECT_NEAR(inner(x, x), dot, 1e-12 * std::max(1.0, dot));
    }
}

TEST(hilbert, apply_identity_and_zero)
{
    const state_vector x{1.5, -2.0, 0.25};
    EXPECT_EQ(apply(dense_operator::identity(3), x), x);
    EXPECT_EQ(apply(dense_operator::zero(3, 3), x), state_vector(3));
}

TEST(hilbert, apply_hand_multiply)
{
    matrix_t m(2, 2);
    m << 1, 2, 3, 4;
    const state_vector y = apply(dense_operator(m), state_vector{1.0, 1.0});
    EXPECT_EQ(y, (state_vector{3.0, 7.0}));
}

TEST(hilbert, apply_dimension_mismatch)
{
    EXPECT_THROW(apply(dense_operator::identity(2), state_vector(3)), dimension_error);
    EXPECT_THROW(inner(state_vector(2), state_vector(3)), dimension_error);
}

TEST(hilbert, rejects_non_finite)
{
    EXPECT_THROW((state_vector{1.0, std::numeric_limits<double>::quiet_NaN()}), numerical_range_error);
    EXPECT_THROW(dense_operator(matrix_t::Constant(2, 2, std::numeric_limits<double>::infinity())),
                 numerical_range_error);
}

TEST(hilbert, triangle_inequality_and_operator_bound)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 1 + trial % 7;
        const state_vector x(oracle::random_vector(rng, d));
        const state_vector y(oracle::random_vector(rng, d, 3.0));
        EXPECT_LE(norm(x + y), norm(x) + norm(y) + 1e-15);

        matrix_t g(d + 1, d);
        for (int j = 0; j < d; ++j)
            g.col(j) = oracle::random_vector(rng, d + 1);
        const dense_operator op(g);
        EXPECT_LE(norm(apply(op, x)), operator_norm(op) * norm(x) * (1.0 + 1e-10));
    }
}
