#pragma once

// Interacting-particle exponential Euler scheme for mild solutions of
//
//   dx = [A x + f(x, mu)] dt + eps g(x, mu) dW,   mu(t) = law of x(t),
//
// with mu(t) replaced by the empirical law of M particles. One step is
//
//   x <- S(dt) [ x + f(x, mu) dt + eps g(x, mu) dW ],
//
// where every particle reads the same start-of-step snapshot of mu.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mvlab/errors.hpp"
#include "mvlab/hilbert.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/noise.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/semigroup.hpp"

namespace mvlab {

using state_ref = Eigen::Ref<const vector_t>;
using drift_fn = std::function<vector_t(const state_ref&, const empirical_measure&)>;
using diffusion_fn = std::function<matrix_t(const state_ref&, const empirical_measure&)>;

struct coefficient_spec {
    drift_fn f;
    diffusion_fn g;      ///< d x dim(H2)
    double k1 = 0.0;     ///< Lipschitz constant of f in |x-y| + rho
    double k2 = 0.0;     ///< Lipschitz constant of g
    double k3 = 0.0;     ///< |f|^2 <= K3 (1 + |x|^2 + ||mu||_phi^2)
    double k4 = 0.0;     ///< |g|^2 <= K4 (1 + |x|^2 + ||mu||_phi^2)
    bool law_dependent = true;
    bool diffusion_constant = false; ///< g independent of x and mu
};

/// Parameters of the affine mean-field family used by the experiments:
///   f(x, mu) = (linear - mean_field) x + mean_field * mean(mu) + shift
///   g(x, mu) = (sigma + sigma_mean_field * tanh(<mean(mu), e_1>)) * embedding
struct affine_mean_field {
    double linear = 0.0;
    double mean_field = 0.0;
    vector_t shift;                 ///< empty means zero
    double sigma = 0.0;
    double sigma_mean_field = 0.0;
    matrix_t embedding;             ///< d x dim(H2), maps noise modes into H1
};

inline coefficient_spec make_coefficients(const affine_mean_field& p)
{
    const auto d = p.embedding.rows();
    if (p.shift.size() != 0 && p.shift.size() != d)
        throw dimension_error("make_coefficients: shift dimension differs from state dimension");
    coefficient_spec c;
    const double self = p.linear - p.mean_field;
    const double theta = p.mean_field;
    const vector_t shift = p.shift.size() == 0 ? vector_t::Zero(d) : p.shift;
    c.f = [self, theta, shift](const state_ref& x, const empirical_measure& mu) -> vector_t {
        vector_t out = self * x + shift;
        if (theta != 0.0)
            out += theta * mu.mean();
        return out;
    };
    const matrix_t e = p.embedding;
    const double sigma = p.sigma;
    const double smf = p.sigma_mean_field;
    c.g = [e, sigma, smf](const state_ref&, const empirical_measure& mu) -> matrix_t {
        if (smf == 0.0)
            return sigma * e;
        return (sigma + smf * std::tanh(mu.mean()[0])) * e;
    };
    const double e_norm = operator_norm(e);
    c.k1 = std::max(std::abs(self), std::abs(theta));
    c.k2 = std::abs(smf) * e_norm;
    c.k3 = 3.0 * std::max({shift.squaredNorm(), self * self, theta * theta});
    c.k4 = std::pow((std::abs(sigma) + std::abs(smf)) * e_norm, 2);
    c.law_dependent = theta != 0.0 || smf != 0.0;
    c.diffusion_constant = smf == 0.0;
    return c;
}

/// Spot check of |f(x,mu)-f(y,nu)| <= K1(|x-y| + rho_upper(mu,nu)) (and g
/// with K2, operator norm) on the given pairs.
struct lipschitz_sample {
    state_vector x, y;
    empirical_measure mu, nu;
};

inline bool lipschitz_spot_check(const coefficient_spec& c, const std::vector<lipschitz_sample>& samples,
                                 double slack = 1e-9)
{
    for (const auto& s : samples) {
        const double dist = (s.x.coords() - s.y.coords()).norm() + rho_upper(s.mu, s.nu);
        const double df = (c.f(s.x.coords(), s.mu) - c.f(s.y.coords(), s.nu)).norm();
        const double dg = operator_norm(matrix_t(c.g(s.x.coords(), s.mu) - c.g(s.y.coords(), s.nu)));
        if (df > c.k1 * dist + slack || dg > c.k2 * dist + slack)
            return false;
    }
    return true;
}

/// Gaussian with diagonal covariance in mode space; zero std gives a fixed x0.
struct initial_law {
    vector_t mean;
    vector_t stddev; ///< empty or all zero: deterministic

    static initial_law fixed(vector_t x0) { return {std::move(x0), vector_t()}; }

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
    bool deterministic() const noexcept { return stddev.size() == 0 || stddev.isZero(0.0); }

    void sample_into(std::uint64_t seed, std::uint64_t particle, Eigen::Ref<vector_t> out) const
    {
        out = mean;
        if (deterministic())
            return;
        vector_t z(mean.size());
        standard_normals(seed, particle, initial_law_step, z);
        out += stddev.cwiseProduct(z);
    }
};

struct sde_problem {
    generator a;
    coefficient_spec coeffs;
    qwiener_spec q;
    initial_law x0;
    double noise_scale = 1.0;
    double horizon = 1.0;
    std::size_t steps = 1024;
    std::size_t particles = 1000;

    std::size_t dim() const { return a.dim(); }
};

/// Particle paths recorded every `record_every` steps on the uniform grid
/// t_j = j T / S. Snapshot k holds the d x M particle states at times[k].
class path_ensemble {
public:
    path_ensemble() = default;

    path_ensemble(std::vector<double> times, std::vector<matrix_t> snapshots, std::uint64_t seed,
                  std::size_t steps, std::size_t record_every)
        : times_(std::move(times)), snapshots_(std::move(snapshots)), seed_(seed), steps_(steps),
          record_every_(record_every)
    {
        if (times_.size() != snapshots_.size() || snapshots_.empty())
            throw grid_error("path_ensemble: times and snapshots differ in length");
    }

    const std::vector<double>& times() const noexcept { return times_; }
    const matrix_t& snapshot(std::size_t k) const { return snapshots_.at(k); }
    std::size_t num_times() const noexcept { return times_.size(); }
    std::size_t particles() const noexcept { return static_cast<std::size_t>(snapshots_.front().cols()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(snapshots_.front().rows()); }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t record_every() const noexcept { return record_every_; }

    empirical_measure law(std::size_t k) const { return empirical_measure(snapshots_.at(k)); }

    /// Laws at every `stride`-th recorded time (the last time always included).
    law_trajectory laws(std::size_t stride = 1) const
    {
        law_trajectory out;
        stride = std::max<std::size_t>(stride, 1);
        for (std::size_t k = 0; k < times_.size(); k += stride) {
            out.times.push_back(times_[k]);
            out.laws.push_back(law(k));
        }
        if ((times_.size() - 1) % stride != 0) {
            out.times.push_back(times_.back());
            out.laws.push_back(law(times_.size() - 1));
        }
        return out;
    }

private:
    std::vector<double> times_;
    std::vector<matrix_t> snapshots_;
    std::uint64_t seed_ = 0;
    std::size_t steps_ = 0;
    std::size_t record_every_ = 1;
};

struct simulation_options {
    std::size_t workers = 1;
    worker_pool* pool = nullptr; ///< overrides `workers` when set
    std::size_t record_every = 1;
    /// When set, particles read this ensemble's snapshot at each step instead
    /// of the live empirical law (frozen-law equation). Must be recorded at
    /// every step on the same grid.
    const path_ensemble* frozen_law = nullptr;
    /// Noise/initial-law stream id of each particle; default 0..M-1.
    std::vector<std::uint64_t> particle_ids;
};

/// S(dt) [ x + f(x,mu) dt + eps g(x,mu) dW ]
inline state_vector step_mild_euler(const generator& a, const state_vector& x, const empirical_measure& mu, double dt,
                                    const vector_t& dw, const coefficient_spec& coeffs, double eps)
{
    if (!(dt > 0.0))
        throw step_size_error("step_mild_euler: dt must be positive");
    if (x.dim() != a.dim())
        throw dimension_error("step_mild_euler: state dimension differs from generator");
    vector_t bracket = x.coords() + dt * coeffs.f(x.coords(), mu);
    if (eps != 0.0) {
        const matrix_t g = coeffs.g(x.coords(), mu);
        if (g.rows() != bracket.size() || g.cols() != dw.size())
            throw dimension_error("step_mild_euler: diffusion operator shape mismatch");
        bracket += eps * (g * dw);
    }
    if (bracket.size() != static_cast<Eigen::Index>(a.dim()))
        throw dimension_error("step_mild_euler: drift dimension mismatch");
    return semigroup_apply(a, dt, state_vector(std::move(bracket)));
}

namespace detail {

inline constexpr std::size_t particle_chunk = 64;

inline void check_problem(const sde_problem& prob)
{
    if (prob.particles == 0 || prob.steps == 0 || !(prob.horizon > 0.0))
        throw config_error("sde_problem: need particles > 0, steps > 0, horizon > 0");
    if (prob.x0.dim() != prob.dim())
        throw dimension_error("sde_problem: initial law dimension differs from generator");
    if (!prob.coeffs.f || !prob.coeffs.g)
        throw config_error("sde_problem: drift and diffusion must be set");
    if (!(prob.noise_scale >= 0.0))
        throw config_error("sde_problem: noise scale must be nonnegative");
}

} // namespace detail

inline path_ensemble simulate_particle_system(const sde_problem& prob, std::uint64_t seed,
                                              const simulation_options& opts = {})
{
    detail::check_problem(prob);
    const std::size_t m = prob.particles;
    const std::size_t steps = prob.steps;
    const std::size_t stride = std::max<std::size_t>(opts.record_every, 1);
    if (steps % stride != 0)
        throw grid_error("simulate_particle_system: record_every must divide steps");
    if (opts.frozen_law) {
        const auto& fz = *opts.frozen_law;
        if (fz.steps() != steps || fz.record_every() != 1 || fz.particles() != m || fz.dim() != prob.dim())
            throw grid_error("simulate_particle_system: frozen law must be recorded every step on the same grid");
    }
    std::vector<std::uint64_t> ids = opts.particle_ids;
    if (ids.empty()) {
        ids.resize(m);
        std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    } else if (ids.size() != m) {
        throw config_error("simulate_particle_system: particle_ids size differs from particle count");
    }

    std::unique_ptr<worker_pool> own_pool;
    worker_pool* pool = opts.pool;
    if (!pool) {
        own_pool = std::make_unique<worker_pool>(opts.workers);
        pool = own_pool.get();
    }

    const auto d = static_cast<Eigen::Index>(prob.dim());
    const auto n_particles = static_cast<Eigen::Index>(m);
    const auto k_noise = static_cast<Eigen::Index>(prob.q.dim());
    const double dt = prob.horizon / static_cast<double>(steps);
    const double eps = prob.noise_scale;
    const bool diagonal = prob.a.is_diagonal();
    const vector_t decay = diagonal ? vector_t((dt * prob.a.matrix().diagonal()).array().exp()) : vector_t();
    const matrix_t prop = diagonal ? matrix_t() : prob.a.propagator(dt);
    const vector_t noise_scale = prob.q.sqrt_kappas() * std::sqrt(dt);
    const bool noisy = eps != 0.0 && k_noise > 0;

    matrix_t x(d, n_particles);
    for (Eigen::Index i = 0; i < n_particles; ++i)
        prob.x0.sample_into(seed, ids[static_cast<std::size_t>(i)], x.col(i));

    std::vector<double> times{0.0};
    std::vector<matrix_t> snaps{x};
    times.reserve(steps / stride + 1);
    snaps.reserve(steps / stride + 1);

    matrix_t next(d, n_particles);
    matrix_t bracket(d, n_particles);
    const std::size_t chunks = (m + detail::particle_chunk - 1) / detail::particle_chunk;

    std::optional<empirical_measure> static_law;
    if (!prob.coeffs.law_dependent && !opts.frozen_law)
        static_law.emplace(x);
    std::optional<matrix_t> constant_g;

    for (std::size_t j = 0; j < steps; ++j) {
        std::optional<empirical_measure> live;
        const empirical_measure* mu = nullptr;
        if (opts.frozen_law) {
            live.emplace(opts.frozen_law->snapshot(j));
            mu = &*live;
        } else if (static_law) {
            mu = &*static_law;
        } else {
            live.emplace(x);
            mu = &*live;
        }
        if (noisy && prob.coeffs.diffusion_constant && !constant_g) {
            constant_g = prob.coeffs.g(x.col(0), *mu);
            if (constant_g->rows() != d || constant_g->cols() != k_noise)
                throw dimension_error("simulate_particle_system: diffusion operator shape mismatch");
        }

        const auto step_index = static_cast<std::uint32_t>(j);
        pool->parallel_for(chunks, [&](std::size_t c) {
            const auto begin = static_cast<Eigen::Index>(c * detail::particle_chunk);
            const auto end = std::min<Eigen::Index>(begin + static_cast<Eigen::Index>(detail::particle_chunk),
                                                    n_particles);
            vector_t dw(k_noise);
            for (Eigen::Index i = begin; i < end; ++i) {
                auto xi = x.col(i);
                auto bi = bracket.col(i);
                const vector_t drift = prob.coeffs.f(xi, *mu);
                if (drift.size() != d)
                    throw dimension_error("simulate_particle_system: drift dimension mismatch");
                bi = xi + dt * drift;
                if (noisy) {
                    standard_normals(seed, ids[static_cast<std::size_t>(i)], step_index, dw);
                    dw.array() *= noise_scale.array();
                    if (constant_g) {
                        bi.noalias() += eps * (*constant_g * dw);
                    } else {
                        const matrix_t g = prob.coeffs.g(xi, *mu);
                        if (g.rows() != d || g.cols() != k_noise)
                            throw dimension_error("simulate_particle_system: diffusion operator shape mismatch");
                        bi.noalias() += eps * (g * dw);
                    }
                }
            }
            const auto len = end - begin;
            if (diagonal)
                next.middleCols(begin, len).noalias() = decay.asDiagonal() * bracket.middleCols(begin, len);
            else
                next.middleCols(begin, len).noalias() = prop * bracket.middleCols(begin, len);
        });
        x.swap(next);

        if ((j + 1) % stride == 0) {
            if (!x.allFinite())
                throw numerical_range_error("simulate_particle_system: non-finite state at step " +
                                            std::to_string(j + 1));
            times.push_back(prob.horizon * static_cast<double>(j + 1) / static_cast<double>(steps));
            snaps.push_back(x);
        }
    }
    return path_ensemble(std::move(times), std::move(snaps), seed, steps, stride);
}

/// Outcome of the outer Picard iteration mu^{(k+1)} = law of the mu^{(k)}-frozen solution.
struct picard_result {
    std::vector<path_ensemble> iterates; ///< mu^{(1)}, ..., mu^{(k_max)}
    std::vector<double> gaps;            ///< gaps[k-1] = D(mu^{(k+1)}, mu^{(k)})
    rho_method method = rho_method::exact_assignment;
};

/// mu^{(0)} is the initial law held constant in time. All iterates reuse the
/// same noise (same seed and particle ids).
inline picard_result picard_law_iteration(const sde_problem& prob, std::size_t k_max, std::uint64_t seed,
                                          const simulation_options& opts = {})
{
    if (k_max == 0)
        throw config_error("picard_law_iteration: need at least one iteration");
    detail::check_problem(prob);
    simulation_options run = opts;
    run.record_every = 1;

    std::vector<std::uint64_t> ids = opts.particle_ids;
    if (ids.empty()) {
        ids.resize(prob.particles);
        std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    }
    const auto d = static_cast<Eigen::Index>(prob.dim());
    matrix_t x0(d, static_cast<Eigen::Index>(prob.particles));
    for (std::size_t i = 0; i < prob.particles; ++i)
        prob.x0.sample_into(seed, ids[i], x0.col(static_cast<Eigen::Index>(i)));
    std::vector<double> times(prob.steps + 1);
    for (std::size_t j = 0; j <= prob.steps; ++j)
        times[j] = prob.horizon * static_cast<double>(j) / static_cast<double>(prob.steps);
    path_ensemble seed_law(times, std::vector<matrix_t>(prob.steps + 1, x0), seed, prob.steps, 1);

    picard_result out;
    out.iterates.reserve(k_max);
    const path_ensemble* previous = &seed_law;
    for (std::size_t k = 0; k < k_max; ++k) {
        run.frozen_law = previous;
        out.iterates.push_back(simulate_particle_system(prob, seed, run));
        if (out.iterates.size() >= 2) {
            const auto& newer = out.iterates[out.iterates.size() - 1];
            const auto& older = out.iterates[out.iterates.size() - 2];
            const auto r = d_metric_detailed(newer.laws(), older.laws());
            out.gaps.push_back(r.value);
            if (r.method == rho_method::coupling_bound)
                out.method = rho_method::coupling_bound;
        }
        previous = &out.iterates.back();
    }
    return out;
}

/// Per-time Monte Carlo estimate with standard errors, plus its maximum.
struct time_profile {
    std::vector<double> times;
    std::vector<double> value;
    std::vector<double> se;
    double sup = 0.0;
    double sup_se = 0.0;
    std::size_t argmax = 0;
};

namespace detail {

inline void mean_and_se(const vector_t& samples, double& mean, double& se)
{
    const auto n = static_cast<double>(samples.size());
    mean = samples.mean();
    if (samples.size() < 2) {
        se = 0.0;
        return;
    }
    const double var = (samples.array() - mean).square().sum() / (n - 1.0);
    se = std::sqrt(var / n);
}

inline void finish_profile(time_profile& p)
{
    p.sup = -1.0;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
        if (p.value[k] > p.sup) {
            p.sup = p.value[k];
            p.sup_se = p.se[k];
            p.argmax = k;
        }
    }
}

} // namespace detail

/// (1/M) sum |x_i(t)|^order at every recorded time.
inline time_profile estimate_moment(const path_ensemble& ens, int order)
{
    if (order < 2 || order % 2 != 0)
        throw numerical_range_error("estimate_moment: order must be an even integer >= 2");
    time_profile out;
    out.times = ens.times();
    const int half = order / 2;
    for (std::size_t k = 0; k < ens.num_times(); ++k) {
        const vector_t sq = ens.snapshot(k).colwise().squaredNorm().transpose();
        const vector_t samples = sq.array().pow(half);
        double mean = 0.0, se = 0.0;
        detail::mean_and_se(samples, mean, se);
        out.value.push_back(mean);
        out.se.push_back(se);
    }
    detail::finish_profile(out);
    return out;
}

/// (1/M) sum |x_A,i(t) - x_B,i(t)|^2 for ensembles driven by the same noise.
inline time_profile coupled_difference(const path_ensemble& a, const path_ensemble& b)
{
    if (a.times() != b.times())
        throw coupling_error("coupled_difference: time grids differ");
    if (a.particles() != b.particles() || a.dim() != b.dim())
        throw coupling_error("coupled_difference: ensemble shapes differ");
    if (a.seed() != b.seed())
        throw coupling_error("coupled_difference: ensembles were driven by different seeds");
    time_profile out;
    out.times = a.times();
    for (std::size_t k = 0; k < a.num_times(); ++k) {
        const vector_t samples = (a.snapshot(k) - b.snapshot(k)).colwise().squaredNorm().transpose();
        double mean = 0.0, se = 0.0;
        detail::mean_and_se(samples, mean, se);
        out.value.push_back(mean);
        out.se.push_back(se);
    }
    detail::finish_profile(out);
    return out;
}

} // namespace mvlab
