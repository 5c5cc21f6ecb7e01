#pragma once

// Equal-weight empirical measures standing in for the law mu(t), their
// phi-norms, and a computable upper bound for the metric rho.
//
// Any test function psi with ||psi||_rho <= 1 is 1-Lipschitz, so
// (psi, mu - nu) <= W1(mu, nu). For equal-weight measures with the same
// number of atoms W1 is an assignment problem, solved exactly up to
// exact_assignment_limit atoms. Above that the identity coupling
// (1/M) sum |x_i - y_i| is reported instead, which is still an upper bound.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mvlab/assignment.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/hilbert.hpp"

namespace mvlab {

inline constexpr std::size_t exact_assignment_limit = 512;

class empirical_measure {
public:
    empirical_measure() = default;

    /// Atoms are the columns of `atoms` (d x M).
    explicit empirical_measure(matrix_t atoms) : atoms_(std::move(atoms))
    {
        if (atoms_.cols() == 0)
            throw support_mismatch_error("empirical_measure: need at least one atom");
        mean_ = atoms_.rowwise().mean();
    }

    explicit empirical_measure(const std::vector<state_vector>& atoms)
    {
        if (atoms.empty())
            throw support_mismatch_error("empirical_measure: need at least one atom");
        const auto d = static_cast<Eigen::Index>(atoms.front().dim());
        atoms_.resize(d, static_cast<Eigen::Index>(atoms.size()));
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (atoms[i].dim() != atoms.front().dim())
                throw dimension_error("empirical_measure: atoms differ in dimension");
            atoms_.col(static_cast<Eigen::Index>(i)) = atoms[i].coords();
        }
        mean_ = atoms_.rowwise().mean();
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(atoms_.cols()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(atoms_.rows()); }
    const matrix_t& atoms() const noexcept { return atoms_; }
    state_vector atom(std::size_t i) const { return state_vector(vector_t(atoms_.col(static_cast<Eigen::Index>(i)))); }
    /// Barycenter (1/M) sum x_i.
    const vector_t& mean() const noexcept { return mean_; }

private:
    matrix_t atoms_;
    vector_t mean_;
};

/// (1/M) sum (1 + |x_i|)^p
inline double phi_norm(const empirical_measure& mu, double p)
{
    if (!(p >= 1.0))
        throw numerical_range_error("phi_norm: need p >= 1");
    double total = 0.0;
    for (Eigen::Index i = 0; i < mu.atoms().cols(); ++i)
        total += std::pow(1.0 + mu.atoms().col(i).norm(), p);
    return total / static_cast<double>(mu.size());
}

enum class rho_method { exact_assignment, coupling_bound };

inline const char* to_string(rho_method m)
{
    return m == rho_method::exact_assignment ? "exact_assignment" : "coupling bound";
}

struct rho_result {
    double value = 0.0;
    rho_method method = rho_method::exact_assignment;
};

namespace detail {

inline bool lex_less(const matrix_t& a, const matrix_t& b)
{
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// Sum in ascending order so the result depends only on the multiset of terms.
inline double canonical_sum(std::vector<double>& terms)
{
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms)
        s += t;
    return s;
}

} // namespace detail

/// (1/M) sum |x_i - y_i|: the cost of the identity coupling.
inline double identity_coupling_cost(const empirical_measure& mu, const empirical_measure& nu)
{
    if (mu.size() != nu.size())
        throw support_mismatch_error("identity_coupling_cost: atom counts differ");
    if (mu.dim() != nu.dim())
        throw dimension_error("identity_coupling_cost: dimensions differ");
    std::vector<double> terms(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        terms[i] = (mu.atoms().col(c) - nu.atoms().col(c)).norm();
    }
    return detail::canonical_sum(terms) / static_cast<double>(mu.size());
}

inline rho_result rho_upper_detailed(const empirical_measure& mu_in, const empirical_measure& nu_in,
                                     std::size_t exact_limit = exact_assignment_limit)
{
    if (mu_in.size() != nu_in.size())
        throw support_mismatch_error("rho_upper: atom counts differ (" + std::to_string(mu_in.size()) + " vs " +
                                     std::to_string(nu_in.size()) + ")");
    if (mu_in.dim() != nu_in.dim())
        throw dimension_error("rho_upper: dimensions differ");

    // Fixed argument order makes the result exactly symmetric.
    const bool swap = detail::lex_less(nu_in.atoms(), mu_in.atoms());
    const empirical_measure& mu = swap ? nu_in : mu_in;
    const empirical_measure& nu = swap ? mu_in : nu_in;

    const std::size_t m = mu.size();
    const double identity = identity_coupling_cost(mu, nu);
    if (m > exact_limit)
        return {identity, rho_method::coupling_bound};

    const auto n = static_cast<Eigen::Index>(m);
    matrix_t cost(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
            cost(i, j) = (mu.atoms().col(i) - nu.atoms().col(j)).norm();
    const auto match = solve_assignment(cost);
    std::vector<double> terms(m);
    for (std::size_t i = 0; i < m; ++i)
        terms[i] = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(match[i]));
    const double optimal = detail::canonical_sum(terms) / static_cast<double>(m);
    return {std::min(optimal, identity), rho_method::exact_assignment};
}

inline double rho_upper(const empirical_measure& mu, const empirical_measure& nu)
{
    return rho_upper_detailed(mu, nu).value;
}

/// A law trajectory t -> mu(t) sampled on a time grid.
struct law_trajectory {
    std::vector<double> times;
    std::vector<empirical_measure> laws;
};

struct d_metric_result {
    double value = 0.0;
    rho_method method = rho_method::exact_assignment;
};

/// sup over the grid of rho_upper(mu(t), nu(t)).
inline d_metric_result d_metric_detailed(const law_trajectory& mus, const law_trajectory& nus,
                                         std::size_t exact_limit = exact_assignment_limit)
{
    if (mus.times != nus.times || mus.laws.size() != mus.times.size() || nus.laws.size() != nus.times.size())
        throw grid_error("d_metric: time grids differ");
    if (mus.times.empty())
        throw grid_error("d_metric: empty grid");
    d_metric_result out;
    for (std::size_t j = 0; j < mus.times.size(); ++j) {
        const auto r = rho_upper_detailed(mus.laws[j], nus.laws[j], exact_limit);
        out.value = std::max(out.value, r.value);
        if (r.method == rho_method::coupling_bound)
            out.method = rho_method::coupling_bound;
    }
    return out;
}

inline double d_metric(const law_trajectory& mus, const law_trajectory& nus)
{
    return d_metric_detailed(mus, nus).value;
}

} // namespace mvlab
