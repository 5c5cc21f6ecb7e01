#pragma once

// Generators of type G(M, alpha), their semigroups and resolvents, Yosida
// approximations, and the 1-D divergence-form Dirichlet generator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mvlab/errors.hpp"
#include "mvlab/expm.hpp"
#include "mvlab/hilbert.hpp"

namespace mvlab {

/// Logarithmic 2-norm: largest eigenvalue of the symmetric part.
/// ||exp(tA)|| <= exp(t * log_norm(A)) for all t >= 0.
inline double log_norm(const matrix_t& a)
{
    const matrix_t sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<matrix_t> eig(sym, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
}

class generator {
public:
    generator() = default;

    generator(matrix_t a, double bound_m, double bound_alpha)
        : op_(std::move(a)), bound_m_(bound_m), bound_alpha_(bound_alpha)
    {
        if (op_.rows() != op_.cols())
            throw dimension_error("generator: matrix is not square");
        if (!(bound_m_ >= 1.0) || !std::isfinite(bound_alpha_))
            throw numerical_range_error("generator: need M >= 1 and finite alpha");
        diagonal_ = detail::is_diagonal(op_.entries());
    }

    /// Attaches M = 1 and alpha = log_norm(a), which is always a valid type.
    static generator with_certified_bounds(matrix_t a)
    {
        if (a.rows() != a.cols())
            throw dimension_error("generator: matrix is not square");
        const double alpha = a.size() == 0 ? 0.0 : log_norm(a);
        return generator(std::move(a), 1.0, alpha);
    }

    static generator scalar(double a) { return with_certified_bounds(matrix_t::Constant(1, 1, a)); }

    static generator diagonal(const std::vector<double>& entries)
    {
        vector_t d = Eigen::Map<const vector_t>(entries.data(), static_cast<Eigen::Index>(entries.size()));
        return with_certified_bounds(matrix_t(d.asDiagonal()));
    }

    /// diag(-c k^2 pi^2), k = 1..modes: Dirichlet Laplacian on (0,1) in sine modes.
    static generator heat(std::size_t modes, double diffusivity = 1.0)
    {
        std::vector<double> d(modes);
        for (std::size_t k = 0; k < modes; ++k) {
            const double kk = static_cast<double>(k + 1);
            d[k] = -diffusivity * kk * kk * std::numbers::pi * std::numbers::pi;
        }
        return diagonal(d);
    }

    std::size_t dim() const noexcept { return op_.rows(); }
    const matrix_t& matrix() const noexcept { return op_.entries(); }
    const dense_operator& op() const noexcept { return op_; }
    double bound_m() const noexcept { return bound_m_; }
    double bound_alpha() const noexcept { return bound_alpha_; }
    bool is_diagonal() const noexcept { return diagonal_; }

    /// S(t) = exp(tA) as a dense matrix.
    matrix_t propagator(double t) const
    {
        if (!(t >= 0.0))
            throw numerical_range_error("propagator: negative time");
        return expm(t * op_.entries());
    }

private:
    dense_operator op_;
    double bound_m_ = 1.0;
    double bound_alpha_ = 0.0;
    bool diagonal_ = true;
};

struct certification_result {
    bool passed = true;
    double worst_ratio = 0.0; ///< max over grid of ||S(t)|| / (M e^{alpha t})
};

/// Checks ||exp(tA)|| <= M e^{alpha t} on a uniform grid of [0, horizon].
inline certification_result certify_bounds(const generator& a, double bound_m, double bound_alpha, double horizon,
                                           std::size_t points = 33, double rel_tol = 1e-8)
{
    certification_result out;
    for (std::size_t j = 0; j < points; ++j) {
        const double t = points == 1 ? 0.0 : horizon * static_cast<double>(j) / static_cast<double>(points - 1);
        const double lhs = operator_norm(a.propagator(t));
        const double rhs = bound_m * std::exp(bound_alpha * t);
        out.worst_ratio = std::max(out.worst_ratio, lhs / rhs);
    }
    out.passed = out.worst_ratio <= 1.0 + rel_tol;
    return out;
}

inline certification_result certify_bounds(const generator& a, double horizon, std::size_t points = 33)
{
    return certify_bounds(a, a.bound_m(), a.bound_alpha(), horizon, points);
}

/// (lam I - A)^{-1}
inline dense_operator resolvent(const generator& a, double lam)
{
    if (!(lam > a.bound_alpha()))
        throw resolvent_domain_error("resolvent: lambda " + std::to_string(lam) + " not above alpha " +
                                     std::to_string(a.bound_alpha()));
    const auto n = static_cast<Eigen::Index>(a.dim());
    const matrix_t shifted = lam * matrix_t::Identity(n, n) - a.matrix();
    Eigen::PartialPivLU<matrix_t> lu(shifted);
    if (!(lu.rcond() > 1e-14))
        throw numerical_singularity_error("resolvent: singular system");
    return dense_operator(lu.solve(matrix_t::Identity(n, n)));
}

/// A_n = n A (nI - A)^{-1} = n^2 R(n; A) - n I. For A in G(M, w) the member
/// lies in G(M, n w / (n - w)).
inline generator yosida(const generator& a, double n)
{
    const auto d = static_cast<Eigen::Index>(a.dim());
    const matrix_t r = resolvent(a, n).entries();
    matrix_t an = n * n * r - n * matrix_t::Identity(d, d);
    if (a.is_diagonal())
        an = matrix_t(an.diagonal().asDiagonal());
    const double w = a.bound_alpha();
    return generator(std::move(an), a.bound_m(), n * w / (n - w));
}

/// exp(tA) x
inline state_vector semigroup_apply(const generator& a, double t, const state_vector& x)
{
    if (!(t >= 0.0))
        throw numerical_range_error("semigroup_apply: negative time");
    if (x.dim() != a.dim())
        throw dimension_error("semigroup_apply: dimension mismatch");
    if (t == 0.0)
        return x;
    vector_t y;
    if (a.is_diagonal())
        y = (t * a.matrix().diagonal()).array().exp().matrix().cwiseProduct(x.coords());
    else
        y = a.propagator(t) * x.coords();
    if (!y.allFinite())
        throw numerical_range_error("semigroup_apply: overflow");
    return state_vector(std::move(y));
}

/// Sequence {A_n} indexed by a real parameter (n, 1/eps, ...) with its limit.
class generator_family {
public:
    struct member {
        double param;
        generator gen;
    };

    generator_family(std::vector<member> members, generator limit)
        : members_(std::move(members)), limit_(std::move(limit))
    {
        for (const auto& m : members_) {
            if (m.gen.dim() != limit_.dim())
                throw dimension_error("generator_family: member dimension differs from limit");
            uniform_m_ = std::max(uniform_m_, m.gen.bound_m());
            uniform_alpha_ = std::max(uniform_alpha_, m.gen.bound_alpha());
        }
        uniform_m_ = std::max(uniform_m_, limit_.bound_m());
        uniform_alpha_ = std::max(uniform_alpha_, limit_.bound_alpha());
    }

    const std::vector<member>& members() const noexcept { return members_; }
    const generator& limit() const noexcept { return limit_; }
    double uniform_m() const noexcept { return uniform_m_; }
    double uniform_alpha() const noexcept { return uniform_alpha_; }

private:
    std::vector<member> members_;
    generator limit_;
    double uniform_m_ = 1.0;
    double uniform_alpha_ = -std::numeric_limits<double>::infinity();
};

inline generator_family yosida_family(const generator& a, const std::vector<double>& ns)
{
    std::vector<generator_family::member> members;
    members.reserve(ns.size());
    for (double n : ns)
        members.push_back({n, yosida(a, n)});
    return generator_family(std::move(members), a);
}

inline generator_family constant_family(const generator& a, const std::vector<double>& params)
{
    std::vector<generator_family::member> members;
    for (double p : params)
        members.push_back({p, a});
    return generator_family(std::move(members), a);
}

struct defect_row {
    double param;
    double defect;
};

/// For each member: max over grid and probes of |S_n(t)x - S(t)x|.
inline std::vector<defect_row> trotter_kato_defect(const generator_family& fam, const std::vector<double>& t_grid,
                                                   const std::vector<state_vector>& probes)
{
    if (t_grid.empty() || probes.empty())
        throw grid_error("trotter_kato_defect: empty grid or probe list");
    std::vector<matrix_t> limit_props;
    limit_props.reserve(t_grid.size());
    for (double t : t_grid)
        limit_props.push_back(fam.limit().propagator(t));

    std::vector<defect_row> out;
    for (const auto& m : fam.members()) {
        double worst = 0.0;
        for (std::size_t j = 0; j < t_grid.size(); ++j) {
            const matrix_t sn = m.gen.propagator(t_grid[j]);
            for (const auto& x : probes) {
                if (x.dim() != fam.limit().dim())
                    throw dimension_error("trotter_kato_defect: probe dimension mismatch");
                worst = std::max(worst, (sn * x.coords() - limit_props[j] * x.coords()).norm());
            }
        }
        out.push_back({m.param, worst});
    }
    return out;
}

using coefficient_fn = std::function<double(double)>;

struct ellipticity_bounds {
    double sigma = std::numeric_limits<double>::min(); ///< q >= sigma
    double bound_n = std::numeric_limits<double>::infinity(); ///< |q|, |r| <= N
};

/// Finite-difference discretization of (q x')' + r x' on (0,1) with x = 0 on
/// the boundary, interior nodes z_i = i/(d+1). Flux form with q at half-grid
/// points (arithmetic mean); central differences for the first-order term.
/// In the scaled nodal basis sqrt(h) e_i the Euclidean norm is the discrete
/// L2 norm, so the matrix acts on orthonormal coordinates.
inline generator build_divergence_form_generator(const coefficient_fn& q, const coefficient_fn& r, std::size_t d,
                                                 ellipticity_bounds bounds = {})
{
    if (d < 2)
        throw dimension_error("build_divergence_form_generator: need d >= 2");
    const double h = 1.0 / static_cast<double>(d + 1);
    const auto n = static_cast<Eigen::Index>(d);

    std::vector<double> qn(d + 2), rn(d + 2);
    for (std::size_t i = 0; i <= d + 1; ++i) {
        const double z = static_cast<double>(i) * h;
        qn[i] = q(z);
        rn[i] = r(z);
        if (!std::isfinite(qn[i]) || !std::isfinite(rn[i]))
            throw ellipticity_error("build_divergence_form_generator: non-finite coefficient at z=" +
                                    std::to_string(z));
        if (!(qn[i] >= bounds.sigma))
            throw ellipticity_error("build_divergence_form_generator: q(" + std::to_string(z) +
                                    ") = " + std::to_string(qn[i]) + " violates ellipticity");
        if (std::abs(qn[i]) > bounds.bound_n || std::abs(rn[i]) > bounds.bound_n)
            throw ellipticity_error("build_divergence_form_generator: coefficient exceeds bound N");
    }

    matrix_t a = matrix_t::Zero(n, n);
    const double inv_h2 = 1.0 / (h * h);
    const double inv_2h = 1.0 / (2.0 * h);
    for (std::size_t i = 1; i <= d; ++i) {
        const auto row = static_cast<Eigen::Index>(i - 1);
        const double q_minus = 0.5 * (qn[i - 1] + qn[i]);
        const double q_plus = 0.5 * (qn[i] + qn[i + 1]);
        a(row, row) = -(q_minus + q_plus) * inv_h2;
        if (i > 1)
            a(row, row - 1) = q_minus * inv_h2 - rn[i] * inv_2h;
        if (i < d)
            a(row, row + 1) = q_plus * inv_h2 + rn[i] * inv_2h;
    }
    return generator::with_certified_bounds(std::move(a));
}

/// Orthonormal discrete sine vectors sqrt(2/(d+1)) sin(k pi i/(d+1)) as columns
/// (d x k_count). These are the eigenvectors of the constant-coefficient
/// discrete Laplacian.
inline matrix_t discrete_sine_basis(std::size_t d, std::size_t k_count)
{
    const auto n = static_cast<Eigen::Index>(d);
    const auto k = static_cast<Eigen::Index>(k_count);
    matrix_t out(n, k);
    const double scale = std::sqrt(2.0 / static_cast<double>(d + 1));
    for (Eigen::Index c = 0; c < k; ++c)
        for (Eigen::Index i = 0; i < n; ++i)
            out(i, c) = scale * std::sin(static_cast<double>((c + 1) * (i + 1)) * std::numbers::pi /
                                         static_cast<double>(d + 1));
    return out;
}

} // namespace mvlab
