#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvlab/measure.hpp"
#include "oracles.hpp"

using namespace mvlab;

namespace {

empirical_measure scalars(std::initializer_list<double> xs)
{
    matrix_t m(1, static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs)
        m(0, i++) = x;
    return empirical_measure(m);
}

empirical_measure random_measure(std::mt19937_64& rng, int d, int m, double scale = 1.0)
{
    matrix_t a(d, m);
    for (int j = 0; j < m; ++j)
        a.col(j) = oracle::random_vector(rng, d, scale);
    return empirical_measure(a);
}

} // namespace

TEST(phi_norm, examples)
{
    EXPECT_DOUBLE_EQ(phi_norm(scalars({0.0}), 1.0), 1.0);
    EXPECT_DOUBLE_EQ(phi_norm(scalars({0.0}), 3.5), 1.0);
    EXPECT_DOUBLE_EQ(phi_norm(empirical_measure(std::vector<state_vector>{state_vector{0.6, 0.8}}), 2.0), 4.0);
    EXPECT_DOUBLE_EQ(phi_norm(scalars({0.0, 3.0}), 1.0), 2.5);
    EXPECT_THROW(phi_norm(scalars({0.0}), 0.5), numerical_range_error);
}

TEST(phi_norm, at_least_one_and_monotone_in_p)
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mu = random_measure(rng, 3, 10);
        double prev = phi_norm(mu, 1.0);
        EXPECT_GE(prev, 1.0);
        for (double p : {1.5, 2.0, 3.0, 4.0}) {
            const double cur = phi_norm(mu, p);
            EXPECT_GE(cur, prev);
            prev = cur;
        }
    }
}

TEST(rho_upper, examples)
{
    const auto mu = scalars({0.3, -1.2, 4.0});
    EXPECT_EQ(rho_upper(mu, mu), 0.0);
    EXPECT_DOUBLE_EQ(rho_upper(scalars({1.0}), scalars({3.5})), 2.5);
    EXPECT_DOUBLE_EQ(rho_upper(scalars({0.0, 2.0}), scalars({1.0, 3.0})), 1.0);
    // reversed atom order: optimal matching must undo it
    EXPECT_DOUBLE_EQ(rho_upper(scalars({0.0, 2.0}), scalars({3.0, 1.0})), 1.0);
}

TEST(rho_upper, unequal_support_is_rejected)
{
    EXPECT_THROW(rho_upper(scalars({0.0}), scalars({0.0, 1.0})), support_mismatch_error);
}

TEST(rho_upper, matches_brute_force_enumeration)
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 60; ++trial) {
        const int m = 1 + trial % 7;
        const int d = 1 + trial % 3;
        const auto mu = random_measure(rng, d, m);
        const auto nu = random_measure(rng, d, m, 2.0);
        EXPECT_NEAR(rho_upper(mu, nu), oracle::brute_force_w1(mu.atoms(), nu.atoms()), 1e-12);
    }
}

TEST(rho_upper, metric_axioms)
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 5 + trial % 20;
        const auto a = random_measure(rng, 2, m);
        const auto b = random_measure(rng, 2, m, 1.5);
        const auto c = random_measure(rng, 2, m, 0.5);
        EXPECT_EQ(rho_upper(a, b), rho_upper(b, a));
        EXPECT_LE(rho_upper(a, c), rho_upper(a, b) + rho_upper(b, c) + 1e-10);
    }
}

TEST(rho_upper, zero_iff_same_atoms_up_to_permutation)
{
    std::mt19937_64 rng(13);
    const auto a = random_measure(rng, 3, 12);
    matrix_t permuted = a.atoms().rowwise().reverse();
    EXPECT_EQ(rho_upper(a, empirical_measure(permuted)), 0.0);
    permuted(0, 0) += 1e-6;
    EXPECT_GT(rho_upper(a, empirical_measure(permuted)), 0.0);
}

TEST(rho_upper, coupling_bound_chain)
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 30; ++trial) {
        const auto a = random_measure(rng, 2, 40);
        const auto b = random_measure(rng, 2, 40);
        const double rho = rho_upper(a, b);
        const double l1 = identity_coupling_cost(a, b);
        const double l2 = std::sqrt((a.atoms() - b.atoms()).colwise().squaredNorm().mean());
        EXPECT_LE(rho, l1);
        EXPECT_LE(l1, l2 * (1.0 + 1e-14));
    }
}

TEST(rho_upper, large_supports_use_labelled_coupling_bound)
{
    std::mt19937_64 rng(15);
    const auto a = random_measure(rng, 1, 20);
    const auto b = random_measure(rng, 1, 20);
    const auto r = rho_upper_detailed(a, b, 10);
    EXPECT_EQ(r.method, rho_method::coupling_bound);
    EXPECT_DOUBLE_EQ(r.value, identity_coupling_cost(a, b));
    EXPECT_STREQ(to_string(r.method), "coupling bound");
}

TEST(d_metric, examples)
{
    law_trajectory a{{0.0, 1.0}, {scalars({0.0}), scalars({1.0})}};
    EXPECT_EQ(d_metric(a, a), 0.0);

    law_trajectory single_a{{0.5}, {scalars({0.0, 1.0})}};
    law_trajectory single_b{{0.5}, {scalars({0.25, 1.5})}};
    EXPECT_DOUBLE_EQ(d_metric(single_a, single_b), rho_upper(single_a.laws[0], single_b.laws[0]));

    // rho values 0.5 then 0.2
    law_trajectory b{{0.0, 1.0}, {scalars({0.5}), scalars({1.2})}};
    EXPECT_DOUBLE_EQ(d_metric(a, b), 0.5);
}

TEST(d_metric, grid_mismatch)
{
    law_trajectory a{{0.0, 1.0}, {scalars({0.0}), scalars({1.0})}};
    law_trajectory b{{0.0, 0.9}, {scalars({0.0}), scalars({1.0})}};
    EXPECT_THROW(d_metric(a, b), grid_error);
}
