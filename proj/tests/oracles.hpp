#pragma once

// Independent reference computations used only by the tests.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

/// exp(A) by truncated Taylor series with scaling and squaring, evaluated in
/// long double.
inline Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& a)
{
    using mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    mat x = a.cast<long double>();
    const long double norm = x.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::pow(2.0L, s) > 0.25L)
        ++s;
    x /= std::pow(2.0L, s);
    mat term = mat::Identity(a.rows(), a.cols());
    mat sum = term;
    for (int k = 1; k < 40; ++k) {
        term = (term * x) / static_cast<long double>(k);
        sum += term;
    }
    for (int i = 0; i < s; ++i)
        sum = sum * sum;
    return sum.cast<double>();
}

/// min over all permutations of (1/M) sum |x_i - y_perm(i)|.
inline double brute_force_w1(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys)
{
    std::vector<int> perm(static_cast<std::size_t>(xs.cols()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i)
            c += (xs.col(static_cast<Eigen::Index>(i)) - ys.col(perm[i])).norm();
        best = std::min(best, c / static_cast<double>(perm.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Second moments of two scalar OU processes dx = a x dt + dW, dy = b y dt + dW
/// driven by one Brownian motion, started at 0: integrates
/// P' = A P + P A^T + [[1,1],[1,1]] with classical RK4 and returns E(x-y)^2 at
/// each requested time.
inline std::vector<double> coupled_ou_difference(double a, double b, const std::vector<double>& times,
                                                 int substeps = 4000)
{
    std::array<double, 3> p{0.0, 0.0, 0.0}; // Exx, Exy, Eyy
    auto rhs = [&](const std::array<double, 3>& v) {
        return std::array<double, 3>{2.0 * a * v[0] + 1.0, (a + b) * v[1] + 1.0, 2.0 * b * v[2] + 1.0};
    };
    std::vector<double> out;
    double t = 0.0;
    for (double target : times) {
        const double span = target - t;
        if (span > 0.0) {
            const double h = span / substeps;
            for (int k = 0; k < substeps; ++k) {
                auto k1 = rhs(p);
                std::array<double, 3> tmp;
                for (int i = 0; i < 3; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
                auto k2 = rhs(tmp);
                for (int i = 0; i < 3; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
                auto k3 = rhs(tmp);
                for (int i = 0; i < 3; ++i) tmp[i] = p[i] + h * k3[i];
                auto k4 = rhs(tmp);
                for (int i = 0; i < 3; ++i) p[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
            }
            t = target;
        }
        out.push_back(p[0] - 2.0 * p[1] + p[2]);
    }
    return out;
}

/// Stable random matrix: R - (||R||_F + shift) I.
inline Eigen::MatrixXd random_stable(std::mt19937_64& rng, int d, double shift = 0.5)
{
    std::normal_distribution<double> n01;
    Eigen::MatrixXd r(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i)
            r(i, j) = n01(rng);
    return r - (r.norm() + shift) * Eigen::MatrixXd::Identity(d, d);
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int d, double scale = 1.0)
{
    std::normal_distribution<double> n01;
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i)
        v[i] = scale * n01(rng);
    return v;
}

} // namespace oracle
