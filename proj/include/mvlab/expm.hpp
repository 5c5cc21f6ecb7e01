#pragma once

// Dense matrix exponential by scaling and squaring with diagonal Pade
// approximants of degree 3, 5, 7, 9 or 13 (Higham 2005 selection).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

#include "mvlab/errors.hpp"
#include "mvlab/hilbert.hpp"

namespace mvlab {

namespace detail {

inline bool is_diagonal(const matrix_t& a)
{
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != j && a(i, j) != 0.0)
                return false;
    return true;
}

// Fills u (odd part) and v (even part) so that (v+u)(v-u)^{-1} ~ exp(a).
template <std::size_t N>
void pade_low(const matrix_t& a, const std::array<double, N>& b, matrix_t& u, matrix_t& v)
{
    const auto n = a.rows();
    const matrix_t id = matrix_t::Identity(n, n);
    const matrix_t a2 = a * a;
    matrix_t power = id;
    matrix_t odd = b[1] * id;
    matrix_t even = b[0] * id;
    for (std::size_t k = 2; k < N; k += 2) {
        power = power * a2;
        even += b[k] * power;
        if (k + 1 < N)
            odd += b[k + 1] * power;
    }
    u = a * odd;
    v = even;
}

inline void pade13(const matrix_t& a, matrix_t& u, matrix_t& v)
{
    static constexpr std::array<double, 14> b = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
        129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
        1323241920.0,        40840800.0,          960960.0,           16380.0,
        182.0,               1.0};
    const auto n = a.rows();
    const matrix_t id = matrix_t::Identity(n, n);
    const matrix_t a2 = a * a;
    const matrix_t a4 = a2 * a2;
    const matrix_t a6 = a4 * a2;
    matrix_t tmp = b[13] * a6 + b[11] * a4 + b[9] * a2;
    u = a * (a6 * tmp + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    tmp = b[12] * a6 + b[10] * a4 + b[8] * a2;
    v = a6 * tmp + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
}

} // namespace detail

inline matrix_t expm(const matrix_t& a)
{
    if (a.rows() != a.cols())
        throw dimension_error("expm: matrix is not square");
    if (!a.allFinite())
        throw numerical_range_error("expm: non-finite input");
    const auto n = a.rows();

    if (detail::is_diagonal(a)) {
        matrix_t out = matrix_t::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            out(i, i) = std::exp(a(i, i));
        if (!out.allFinite())
            throw numerical_range_error("expm: overflow");
        return out;
    }

    static constexpr std::array<double, 4> b3 = {120.0, 60.0, 12.0, 1.0};
    static constexpr std::array<double, 6> b5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
    static constexpr std::array<double, 8> b7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                                 25200.0,    1512.0,    56.0,      1.0};
    static constexpr std::array<double, 10> b9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                                  30270240.0,    2162160.0,    110880.0,     3960.0,
                                                  90.0,          1.0};

    const double l1 = a.cwiseAbs().colwise().sum().maxCoeff();
    matrix_t u, v;
    int squarings = 0;
    if (l1 <= 1.495585217958292e-2) {
        detail::pade_low(a, b3, u, v);
    } else if (l1 <= 2.539398330063230e-1) {
        detail::pade_low(a, b5, u, v);
    } else if (l1 <= 9.504178996162932e-1) {
        detail::pade_low(a, b7, u, v);
    } else if (l1 <= 2.097847961257068e0) {
        detail::pade_low(a, b9, u, v);
    } else {
        constexpr double theta13 = 5.371920351148152;
        if (l1 > theta13)
            squarings = std::max(0, static_cast<int>(std::ceil(std::log2(l1 / theta13))));
        const matrix_t scaled = a * std::ldexp(1.0, -squarings);
        detail::pade13(scaled, u, v);
    }

    const matrix_t numer = v + u;
    const matrix_t denom = v - u;
    Eigen::PartialPivLU<matrix_t> lu(denom);
    if (!(lu.rcond() > 1e-14))
        throw numerical_singularity_error("expm: singular Pade denominator");
    matrix_t out = lu.solve(numer);
    for (int k = 0; k < squarings; ++k)
        out = out * out;
    if (!out.allFinite())
        throw numerical_range_error("expm: overflow");
    return out;
}

} // namespace mvlab
