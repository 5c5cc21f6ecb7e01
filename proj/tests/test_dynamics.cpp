#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvlab/dynamics.hpp"
#include "oracles.hpp"

using namespace mvlab;

namespace {

sde_problem scalar_ou(double a, std::size_t particles, std::size_t steps, double horizon = 1.0)
{
    sde_problem p;
    p.a = generator::scalar(a);
    affine_mean_field c;
    c.sigma = 1.0;
    c.embedding = matrix_t::Identity(1, 1);
    p.coeffs = make_coefficients(c);
    p.q = qwiener_spec({1.0});
    p.x0 = initial_law::fixed(vector_t::Zero(1));
    p.horizon = horizon;
    p.steps = steps;
    p.particles = particles;
    return p;
}

empirical_measure dummy_law(std::size_t d) { return empirical_measure(matrix_t::Zero(static_cast<Eigen::Index>(d), 1)); }

} // namespace

TEST(step_mild_euler, pure_semigroup)
{
    const auto a = generator::diagonal({-1.0, -3.0});
    affine_mean_field c;
    c.embedding = matrix_t::Identity(2, 2);
    const auto coeffs = make_coefficients(c);
    const state_vector x{1.0, 2.0};
    const auto y = step_mild_euler(a, x, dummy_law(2), 0.1, vector_t::Ones(2), coeffs, 1.0);
    EXPECT_EQ(y, semigroup_apply(a, 0.1, x));
}

TEST(step_mild_euler, constant_drift_without_generator)
{
    const auto a = generator::with_certified_bounds(matrix_t::Zero(2, 2));
    affine_mean_field c;
    c.shift = vector_t::Constant(2, 3.0);
    c.embedding = matrix_t::Identity(2, 2);
    const auto y = step_mild_euler(a, state_vector{1.0, -1.0}, dummy_law(2), 0.25, vector_t::Zero(2),
                                   make_coefficients(c), 1.0);
    EXPECT_NEAR(y[0], 1.75, 1e-15);
    EXPECT_NEAR(y[1], -0.25, 1e-15);
}

TEST(step_mild_euler, identity_diffusion_adds_increment)
{
    const auto a = generator::with_certified_bounds(matrix_t::Zero(2, 2));
    affine_mean_field c;
    c.sigma = 1.0;
    c.embedding = matrix_t::Identity(2, 2);
    vector_t dw(2);
    dw << 0.3, -0.7;
    const auto y = step_mild_euler(a, state_vector{1.0, 1.0}, dummy_law(2), 0.01, dw, make_coefficients(c), 1.0);
    EXPECT_NEAR(y[0], 1.3, 1e-15);
    EXPECT_NEAR(y[1], 0.3, 1e-15);
}

TEST(step_mild_euler, errors)
{
    const auto a = generator::diagonal({-1.0, -3.0});
    affine_mean_field c;
    c.embedding = matrix_t::Identity(2, 2);
    const auto coeffs = make_coefficients(c);
    EXPECT_THROW(step_mild_euler(a, state_vector{1.0}, dummy_law(2), 0.1, vector_t::Zero(2), coeffs, 1.0),
                 dimension_error);
    EXPECT_THROW(step_mild_euler(a, state_vector{1.0, 1.0}, dummy_law(2), 0.0, vector_t::Zero(2), coeffs, 1.0),
                 step_size_error);
}

TEST(simulate, ornstein_uhlenbeck_variance)
{
    const auto ens = simulate_particle_system(scalar_ou(-1.0, 4000, 512), 1);
    const auto m2 = estimate_moment(ens, 2);
    const double oracle = (1.0 - std::exp(-2.0)) / 2.0; // 0.432332
    EXPECT_LT(std::abs(m2.value.back() - oracle), 3.0 * m2.se.back());
}

TEST(simulate, noiseless_scalar_ode)
{
    sde_problem p;
    p.a = generator::with_certified_bounds(matrix_t::Zero(1, 1));
    affine_mean_field c;
    c.linear = -1.0;
    c.sigma = 1.0;
    c.embedding = matrix_t::Identity(1, 1);
    p.coeffs = make_coefficients(c);
    p.q = qwiener_spec({1.0});
    p.x0 = initial_law::fixed(vector_t::Ones(1));
    p.noise_scale = 0.0;
    p.horizon = 1.0;
    p.steps = 1024;
    p.particles = 3;
    const auto ens = simulate_particle_system(p, 5);
    for (std::size_t k = 0; k < ens.num_times(); ++k) {
        const double exact = std::exp(-ens.times()[k]);
        for (int i = 0; i < 3; ++i)
            EXPECT_LT(std::abs(ens.snapshot(k)(0, i) - exact), 5e-3);
    }
}

TEST(simulate, mean_field_interaction_cancels_in_the_mean)
{
    sde_problem p;
    const double a = -0.5;
    p.a = generator::scalar(a);
    affine_mean_field c;
    c.mean_field = 2.0;
    c.sigma = 0.5;
    c.embedding = matrix_t::Identity(1, 1);
    p.coeffs = make_coefficients(c);
    p.q = qwiener_spec({1.0});
    p.x0 = {vector_t::Ones(1), vector_t::Constant(1, 0.5)};
    p.horizon = 1.0;
    p.steps = 256;
    p.particles = 2000;
    const auto ens = simulate_particle_system(p, 77);
    for (std::size_t k : {std::size_t{64}, std::size_t{128}, std::size_t{256}}) {
        const vector_t xs = ens.snapshot(k).row(0).transpose();
        const double mean = xs.mean();
        const double sd = std::sqrt((xs.array() - mean).square().sum() / (xs.size() - 1));
        EXPECT_LT(std::abs(mean - std::exp(a * ens.times()[k])), 3.0 * sd / std::sqrt(2000.0));
    }
}

TEST(simulate, deterministic_across_worker_counts)
{
    sde_problem p;
    p.a = generator::heat(6);
    affine_mean_field c;
    c.mean_field = 1.0;
    c.sigma = 0.5;
    c.sigma_mean_field = 0.3;
    c.embedding = matrix_t::Identity(6, 6);
    p.coeffs = make_coefficients(c);
    p.q = qwiener_spec({1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125});
    p.x0 = {vector_t::Ones(6), vector_t::Constant(6, 0.2)};
    p.horizon = 0.5;
    p.steps = 64;
    p.particles = 300;
    const auto one = simulate_particle_system(p, 11, {.workers = 1, .record_every = 8});
    for (std::size_t w : {2, 8}) {
        const auto many = simulate_particle_system(p, 11, {.workers = w, .record_every = 8});
        ASSERT_EQ(one.num_times(), many.num_times());
        for (std::size_t k = 0; k < one.num_times(); ++k)
            EXPECT_TRUE(one.snapshot(k) == many.snapshot(k)) << "workers " << w;
    }
}

TEST(simulate, exchangeable_under_particle_relabelling)
{
    auto p = scalar_ou(-1.0, 200, 64);
    affine_mean_field c;
    c.mean_field = 1.5;
    c.sigma = 1.0;
    c.embedding = matrix_t::Identity(1, 1);
    p.coeffs = make_coefficients(c);
    p.x0 = {vector_t::Ones(1), vector_t::Ones(1)};
    std::vector<std::uint64_t> reversed(200);
    std::iota(reversed.rbegin(), reversed.rend(), std::uint64_t{0});
    const auto a = simulate_particle_system(p, 3);
    const auto b = simulate_particle_system(p, 3, {.particle_ids = reversed});
    const auto ma = estimate_moment(a, 2), mb = estimate_moment(b, 2);
    for (std::size_t k = 0; k < ma.value.size(); ++k)
        EXPECT_NEAR(ma.value[k], mb.value[k], 1e-12);
    vector_t fa = a.snapshot(a.num_times() - 1).row(0).transpose();
    vector_t fb = b.snapshot(b.num_times() - 1).row(0).transpose();
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    EXPECT_LT((fa - fb).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(simulate, record_every_must_divide_steps)
{
    EXPECT_THROW(simulate_particle_system(scalar_ou(-1.0, 4, 10), 1, {.record_every = 3}), grid_error);
    const auto ens = simulate_particle_system(scalar_ou(-1.0, 4, 12), 1, {.record_every = 3});
    EXPECT_EQ(ens.num_times(), 5u);
    EXPECT_DOUBLE_EQ(ens.times()[1], 0.25);
}

TEST(simulate, blow_up_is_reported)
{
    auto p = scalar_ou(50.0, 2, 10, 20.0);
    EXPECT_THROW(simulate_particle_system(p, 1), numerical_range_error);
}

TEST(picard, law_independent_coefficients_give_zero_gap)
{
    auto p = scalar_ou(-1.0, 50, 32, 0.5);
    const auto res = picard_law_iteration(p, 3, 4);
    ASSERT_EQ(res.gaps.size(), 2u);
    EXPECT_LE(res.gaps[0], 1e-12);
    EXPECT_LE(res.gaps[1], 1e-12);
}

TEST(picard, single_iteration_has_no_gaps)
{
    const auto res = picard_law_iteration(scalar_ou(-1.0, 10, 8), 1, 4);
    EXPECT_EQ(res.iterates.size(), 1u);
    EXPECT_TRUE(res.gaps.empty());
    EXPECT_THROW(picard_law_iteration(scalar_ou(-1.0, 10, 8), 0, 4), config_error);
}

TEST(picard, mean_field_gaps_contract)
{
    sde_problem p;
    p.a = generator::diagonal({-1.0, -2.0});
    affine_mean_field c;
    c.mean_field = 1.0;
    c.sigma = 1.0;
    c.sigma_mean_field = 0.5;
    c.embedding = matrix_t::Identity(2, 2);
    p.coeffs = make_coefficients(c);
    p.q = qwiener_spec({1.0, 0.0});
    p.x0 = {vector_t::Constant(2, 2.0), vector_t::Constant(2, 0.5)};
    p.horizon = 0.15;
    p.steps = 32;
    p.particles = 100;
    const auto res = picard_law_iteration(p, 5, 21);
    ASSERT_EQ(res.gaps.size(), 4u);
    for (std::size_t k = 1; k < res.gaps.size(); ++k)
        EXPECT_LT(res.gaps[k], res.gaps[k - 1]);
}

TEST(picard, fixed_point_is_the_interacting_system)
{
    sde_problem p;
    p.a = generator::scalar(-1.0);
    affine_mean_field c;
    c.mean_field = 1.0;
    c.sigma = 1.0;
    c.embedding = matrix_t::Identity(1, 1);
    p.coeffs = make_coefficients(c);
    p.q = qwiener_spec({1.0});
    p.x0 = {vector_t::Ones(1), vector_t::Ones(1)};
    p.horizon = 0.2;
    p.steps = 8;
    p.particles = 20;
    const auto live = simulate_particle_system(p, 6);
    const auto res = picard_law_iteration(p, 12, 6);
    const auto& last = res.iterates.back();
    EXPECT_LT((last.snapshot(last.num_times() - 1) - live.snapshot(live.num_times() - 1)).cwiseAbs().maxCoeff(),
              1e-12);
}

TEST(moments, deterministic_and_zero_ensembles)
{
    sde_problem p = scalar_ou(-1.0, 5, 16);
    p.noise_scale = 0.0;
    p.x0 = initial_law::fixed(vector_t::Constant(1, 2.0));
    const auto ens = simulate_particle_system(p, 1);
    const auto m4 = estimate_moment(ens, 4);
    for (std::size_t k = 0; k < ens.num_times(); ++k)
        EXPECT_DOUBLE_EQ(m4.value[k], std::pow(ens.snapshot(k)(0, 0), 4));
    EXPECT_DOUBLE_EQ(m4.sup, 16.0);

    p.x0 = initial_law::fixed(vector_t::Zero(1));
    const auto zero = estimate_moment(simulate_particle_system(p, 1), 2);
    EXPECT_EQ(zero.sup, 0.0);
    EXPECT_THROW(estimate_moment(ens, 3), numerical_range_error);
}

TEST(coupled_difference, identical_and_mismatched_ensembles)
{
    const auto p = scalar_ou(-1.0, 20, 16);
    const auto a = simulate_particle_system(p, 1);
    EXPECT_EQ(coupled_difference(a, a).sup, 0.0);
    const auto b = simulate_particle_system(p, 2);
    EXPECT_THROW(coupled_difference(a, b), coupling_error);
    const auto c = simulate_particle_system(scalar_ou(-1.0, 21, 16), 1);
    EXPECT_THROW(coupled_difference(a, c), coupling_error);
}

TEST(coupled_difference, single_particle_by_hand)
{
    path_ensemble a({0.0, 1.0}, {matrix_t::Constant(1, 1, 1.0), matrix_t::Constant(1, 1, 3.0)}, 0, 1, 1);
    path_ensemble b({0.0, 1.0}, {matrix_t::Constant(1, 1, 0.5), matrix_t::Constant(1, 1, 1.0)}, 0, 1, 1);
    const auto d = coupled_difference(a, b);
    EXPECT_DOUBLE_EQ(d.value[0], 0.25);
    EXPECT_DOUBLE_EQ(d.value[1], 4.0);
    EXPECT_DOUBLE_EQ(d.sup, 4.0);
    EXPECT_EQ(d.argmax, 1u);
}

TEST(coupled_difference, ou_pair_matches_moment_ode)
{
    const auto a = simulate_particle_system(scalar_ou(-1.0, 4000, 512), 9, {.record_every = 32});
    const auto b = simulate_particle_system(scalar_ou(-1.1, 4000, 512), 9, {.record_every = 32});
    const auto diff = coupled_difference(a, b);
    const auto exact = oracle::coupled_ou_difference(-1.0, -1.1, diff.times);
    const double exact_sup = *std::max_element(exact.begin(), exact.end());
    EXPECT_LT(std::abs(diff.sup - exact_sup), 3.0 * diff.sup_se);
}

TEST(coupled_difference, law_distance_bounded_by_coupled_moment)
{
    const auto a = simulate_particle_system(scalar_ou(-1.0, 300, 64), 5, {.record_every = 8});
    const auto b = simulate_particle_system(scalar_ou(-3.0, 300, 64), 5, {.record_every = 8});
    const auto diff = coupled_difference(a, b);
    for (std::size_t k = 0; k < a.num_times(); ++k)
        EXPECT_LE(rho_upper(a.law(k), b.law(k)), std::sqrt(diff.value[k]) * (1.0 + 1e-12));
}

TEST(coefficients, lipschitz_spot_check)
{
    affine_mean_field c;
    c.linear = -0.5;
    c.mean_field = 2.0;
    c.sigma = 1.0;
    c.sigma_mean_field = 0.7;
    c.embedding = matrix_t::Identity(3, 2);
    const auto coeffs = make_coefficients(c);
    std::mt19937_64 rng(2);
    std::vector<lipschitz_sample> samples;
    for (int i = 0; i < 50; ++i) {
        matrix_t ma(3, 8), mb(3, 8);
        for (int j = 0; j < 8; ++j) {
            ma.col(j) = oracle::random_vector(rng, 3);
            mb.col(j) = oracle::random_vector(rng, 3, 2.0);
        }
        samples.push_back({state_vector(oracle::random_vector(rng, 3)), state_vector(oracle::random_vector(rng, 3)),
                           empirical_measure(ma), empirical_measure(mb)});
    }
    EXPECT_TRUE(lipschitz_spot_check(coeffs, samples));
    auto understated = coeffs;
    understated.k1 = 0.1;
    EXPECT_FALSE(lipschitz_spot_check(understated, samples));
}
