#pragma once

// Finite-mode stand-ins for the state space H1 and the noise space H2.
// Coordinates are taken in a fixed orthonormal basis, so the Euclidean
// norm of the coordinate vector is the Hilbert norm of the element.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>

#include "mvlab/errors.hpp"

namespace mvlab {

using vector_t = Eigen::VectorXd;
using matrix_t = Eigen::MatrixXd;

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c)
{
    return std::to_string(r) + "x" + std::to_string(c);
}

} // namespace detail

class state_vector {
public:
    state_vector() = default;

    explicit state_vector(std::size_t dim) : coords_(vector_t::Zero(static_cast<Eigen::Index>(dim))) {}

    explicit state_vector(vector_t coords) : coords_(std::move(coords))
    {
        if (!coords_.allFinite())
            throw numerical_range_error("state_vector: non-finite coordinate");
    }

    state_vector(std::initializer_list<double> values)
        : coords_(static_cast<Eigen::Index>(values.size()))
    {
        Eigen::Index i = 0;
        for (double v : values)
            coords_[i++] = v;
        if (!coords_.allFinite())
            throw numerical_range_error("state_vector: non-finite coordinate");
    }

    std::size_t dim() const noexcept { return static_cast<std::size_t>(coords_.size()); }
    const vector_t& coords() const noexcept { return coords_; }
    double operator[](std::size_t i) const { return coords_[static_cast<Eigen::Index>(i)]; }

    friend state_vector operator+(const state_vector& a, const state_vector& b)
    {
        if (a.dim() != b.dim())
            throw dimension_error("state_vector +: dimension mismatch");
        return state_vector(vector_t(a.coords_ + b.coords_));
    }

    friend state_vector operator-(const state_vector& a, const state_vector& b)
    {
        if (a.dim() != b.dim())
            throw dimension_error("state_vector -: dimension mismatch");
        return state_vector(vector_t(a.coords_ - b.coords_));
    }

    friend state_vector operator*(double s, const state_vector& a)
    {
        return state_vector(vector_t(s * a.coords_));
    }

    friend bool operator==(const state_vector& a, const state_vector& b)
    {
        return a.coords_.size() == b.coords_.size() && a.coords_ == b.coords_;
    }

private:
    vector_t coords_;
};

/// Bounded linear map between two truncated spaces (d_out x d_in).
class dense_operator {
public:
    dense_operator() = default;

    explicit dense_operator(matrix_t entries) : entries_(std::move(entries))
    {
        if (!entries_.allFinite())
            throw numerical_range_error("dense_operator: non-finite entry");
    }

    static dense_operator identity(std::size_t d)
    {
        auto n = static_cast<Eigen::Index>(d);
        return dense_operator(matrix_t::Identity(n, n));
    }

    static dense_operator zero(std::size_t d_out, std::size_t d_in)
    {
        return dense_operator(matrix_t::Zero(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in)));
    }

    std::size_t rows() const noexcept { return static_cast<std::size_t>(entries_.rows()); }
    std::size_t cols() const noexcept { return static_cast<std::size_t>(entries_.cols()); }
    const matrix_t& entries() const noexcept { return entries_; }

private:
    matrix_t entries_;
};

inline double inner(const state_vector& x, const state_vector& y)
{
    if (x.dim() != y.dim())
        throw dimension_error("inner: dimension mismatch");
    return x.coords().dot(y.coords());
}

inline double norm(const state_vector& x) { return x.coords().norm(); }

inline state_vector apply(const dense_operator& g, const state_vector& x)
{
    if (g.cols() != x.dim())
        throw dimension_error("apply: operator is " + detail::dims(g.entries().rows(), g.entries().cols()) +
                              " but vector has dimension " + std::to_string(x.dim()));
    return state_vector(vector_t(g.entries() * x.coords()));
}

/// Largest singular value.
inline double operator_norm(const matrix_t& m)
{
    if (m.size() == 0)
        return 0.0;
    Eigen::JacobiSVD<matrix_t> svd(m);
    return svd.singularValues()(0);
}

inline double operator_norm(const dense_operator& g) { return operator_norm(g.entries()); }

} // namespace mvlab
