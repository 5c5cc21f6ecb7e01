#pragma once

// Q-Wiener increments in the truncated noise space H2, with Q diagonal in
// the canonical basis. Increments are keyed by (seed, particle, step) so two
// systems sharing those keys are driven by the same path.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mvlab/errors.hpp"
#include "mvlab/hilbert.hpp"
#include "mvlab/philox.hpp"

namespace mvlab {

class qwiener_spec {
public:
    qwiener_spec() = default;

    explicit qwiener_spec(std::vector<double> kappas) : kappas_(std::move(kappas))
    {
        trace_ = 0.0;
        for (double k : kappas_) {
            if (!(k >= 0.0) || !std::isfinite(k))
                throw numerical_range_error("qwiener_spec: eigenvalues must be finite and nonnegative");
            trace_ += k;
        }
        sqrt_kappas_.resize(static_cast<Eigen::Index>(kappas_.size()));
        for (std::size_t k = 0; k < kappas_.size(); ++k)
            sqrt_kappas_[static_cast<Eigen::Index>(k)] = std::sqrt(kappas_[k]);
    }

    std::size_t dim() const noexcept { return kappas_.size(); }
    const std::vector<double>& kappas() const noexcept { return kappas_; }
    const vector_t& sqrt_kappas() const noexcept { return sqrt_kappas_; }
    double trace_q() const noexcept { return trace_; }

private:
    std::vector<double> kappas_;
    vector_t sqrt_kappas_;
    double trace_ = 0.0;
};

/// Step index reserved for initial-law draws.
inline constexpr std::uint32_t initial_law_step = std::numeric_limits<std::uint32_t>::max();

/// Writes out.size() standard normals for the given key. Deterministic.
inline void standard_normals(std::uint64_t seed, std::uint64_t particle, std::uint32_t step,
                             Eigen::Ref<vector_t> out) noexcept
{
    const philox_key key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const auto n = out.size();
    for (Eigen::Index i = 0; i < n; i += 2) {
        const philox_counter ctr = {static_cast<std::uint32_t>(particle), static_cast<std::uint32_t>(particle >> 32),
                                    step, static_cast<std::uint32_t>(i / 2)};
        const auto z = normal_pair(philox4x32_10(ctr, key));
        out[i] = z[0];
        if (i + 1 < n)
            out[i + 1] = z[1];
    }
}

struct noise_stream {
    std::uint64_t seed = 0;
    std::uint64_t particle_id = 0;
    std::uint32_t step = 0;
};

/// Increment over [t, t+dt]: component k ~ N(0, kappa_k dt). Advances the stream.
inline vector_t sample_increment(const qwiener_spec& q, double dt, noise_stream& stream)
{
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw step_size_error("sample_increment: dt must be positive, got " + std::to_string(dt));
    vector_t dw(static_cast<Eigen::Index>(q.dim()));
    standard_normals(stream.seed, stream.particle_id, stream.step, dw);
    ++stream.step;
    dw.array() *= q.sqrt_kappas().array() * std::sqrt(dt);
    return dw;
}

struct ito_moment_result {
    double lhs = 0.0;    ///< Monte Carlo estimate of E|y(T)|^p
    double lhs_se = 0.0; ///< its standard error
    double rhs = 0.0;    ///< [p(p-1)/2]^{p/2} (tr Q)^{p/2} T^{p/2-1} int_0^T |G|^p dr

    bool within_bound() const noexcept { return lhs <= rhs + 3.0 * lhs_se; }
};

/// Simulates y(T) = sum_j G(t_j) dW_j for a deterministic step function G
/// (one operator per step of the uniform grid on [0, horizon]) and compares
/// E|y(T)|^p with the Ito moment bound. |G| is the operator norm.
inline ito_moment_result ito_moment_check(const std::vector<dense_operator>& g_path, const qwiener_spec& q,
                                          std::size_t n_samples, int p, std::uint64_t seed, double horizon)
{
    if (p < 2 || p % 2 != 0)
        throw numerical_range_error("ito_moment_check: p must be an even integer >= 2");
    if (g_path.empty() || n_samples < 2 || !(horizon > 0.0))
        throw grid_error("ito_moment_check: need a non-empty path, >= 2 samples, positive horizon");
    const double dt = horizon / static_cast<double>(g_path.size());
    const std::size_t out_dim = g_path.front().rows();
    for (const auto& g : g_path)
        if (g.rows() != out_dim || g.cols() != q.dim())
            throw dimension_error("ito_moment_check: operator shape does not match noise dimension");

    double integral = 0.0;
    for (const auto& g : g_path)
        integral += std::pow(operator_norm(g), p) * dt;
    const double half_p = 0.5 * static_cast<double>(p);
    ito_moment_result out;
    out.rhs = std::pow(0.5 * p * (p - 1), half_p) * std::pow(q.trace_q(), half_p) * std::pow(horizon, half_p - 1.0) *
              integral;

    double sum = 0.0;
    double sum_sq = 0.0;
    vector_t y(static_cast<Eigen::Index>(out_dim));
    for (std::size_t s = 0; s < n_samples; ++s) {
        noise_stream stream{seed, s, 0};
        y.setZero();
        for (const auto& g : g_path)
            y.noalias() += g.entries() * sample_increment(q, dt, stream);
        const double v = std::pow(y.norm(), p);
        sum += v;
        sum_sq += v * v;
    }
    const auto n = static_cast<double>(n_samples);
    out.lhs = sum / n;
    const double var = std::max(0.0, (sum_sq - n * out.lhs * out.lhs) / (n - 1.0));
    out.lhs_se = std::sqrt(var / n);
    return out;
}

/// E|y(T)|^2 = sum_j tr(G_j Q G_j^T) dt for deterministic G.
inline double ito_isometry_second_moment(const std::vector<dense_operator>& g_path, const qwiener_spec& q,
                                         double horizon)
{
    if (g_path.empty())
        return 0.0;
    const double dt = horizon / static_cast<double>(g_path.size());
    double total = 0.0;
    for (const auto& g : g_path)
        total += (g.entries() * q.sqrt_kappas().asDiagonal()).squaredNorm() * dt;
    return total;
}

} // namespace mvlab
