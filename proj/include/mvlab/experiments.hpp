#pragma once

// Experiment runners. Each runner takes a parsed configuration, simulates
// coupled particle ensembles (common seed and particle ids) and returns a
// report with one row per checked criterion.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvlab/config.hpp"
#include "mvlab/dynamics.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/noise.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/semigroup.hpp"

#ifndef MVLAB_VERSION
#define MVLAB_VERSION "0.1.0"
#endif

namespace mvlab {

inline constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// configuration

struct problem_config {
    std::string generator = "scalar"; ///< scalar | diagonal | heat | divergence
    double a = -1.0;
    std::vector<double> diag;
    std::size_t modes = 0;
    double diffusivity = 1.0;
    std::size_t grid = 0;
    double q_const = 1.0;
    double q_sin = 0.0;
    double r_const = 0.0;
    double r_sin = 0.0;

    double drift_linear = 0.0;
    double drift_mean_field = 0.0;
    std::vector<double> drift_shift;
    double diffusion_sigma = 1.0;
    double diffusion_mean_field = 0.0;

    std::vector<double> noise_kappas;
    std::size_t noise_dim = 0; ///< 0: same as the state dimension
    double noise_decay = 2.0;  ///< kappa_k = k^-decay when noise_kappas is absent

    std::vector<double> x0{0.0};
    std::vector<double> x0_std{0.0};
    double noise_scale = 1.0;
    double horizon = 1.0;
    std::size_t steps = 1024;
    std::size_t particles = 1000;
    std::uint64_t seed = 0;
    std::size_t record_every = 1;

    std::size_t dim() const
    {
        if (generator == "scalar")
            return 1;
        if (generator == "diagonal")
            return diag.size();
        if (generator == "heat")
            return modes;
        return grid;
    }
};

struct study_config {
    std::string kind;
    std::string family = "yosida"; ///< yosida | divergence_perturbation | constant
    std::vector<double> sweep;
    std::size_t rho_points = 17;
    double slope_target = nan_value;
    double slope_tol = nan_value;
    double final_ratio = 0.1;
    std::string epsilon_generator = "fixed"; ///< fixed | yosida
    std::string mode = "bump";               ///< bump | scale
    double lambda_limit = 1.0;
    double bump_amplitude = 1.0;
    std::size_t bump_mode = 0;
    double perturb_amplitude = 1.0;
    std::vector<double> y0;
    std::vector<double> y0_std{0.0};
    std::size_t replicates = 1;
    std::vector<double> orders{2.0, 4.0};
    std::vector<double> x0_grid{0.0, 1.0, 4.0};
    std::uint64_t calibration_seed = 0;
    std::vector<std::uint64_t> check_seeds{1, 2, 3, 4, 5};
    std::size_t iterations = 6;
    std::size_t floor_seeds = 3;
};

struct experiment_config {
    config_file source;
    problem_config problem;
    study_config study;
};

inline const std::set<std::string>& runner_names()
{
    static const std::set<std::string> names = {"simulate", "trotter-kato", "zeroth-order", "parametric",
                                                "initial",  "moments",      "picard"};
    return names;
}

namespace detail {

inline void require(bool ok, const std::string& message)
{
    if (!ok)
        throw config_error(message);
}

inline std::size_t as_size(const config_file& c, const std::string& key, std::size_t fallback)
{
    return static_cast<std::size_t>(c.get_u64(key, fallback));
}

inline bool all_finite(const std::vector<double>& v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace detail

inline experiment_config load_experiment(const config_file& c)
{
    experiment_config cfg;
    cfg.source = c;
    auto& p = cfg.problem;
    p.generator = c.get_string("problem.generator", p.generator);
    p.a = c.get_double("problem.a", p.a);
    p.diag = c.get_list("problem.diag", p.diag);
    p.modes = detail::as_size(c, "problem.modes", p.modes);
    p.diffusivity = c.get_double("problem.diffusivity", p.diffusivity);
    p.grid = detail::as_size(c, "problem.grid", p.grid);
    p.q_const = c.get_double("problem.q_const", p.q_const);
    p.q_sin = c.get_double("problem.q_sin", p.q_sin);
    p.r_const = c.get_double("problem.r_const", p.r_const);
    p.r_sin = c.get_double("problem.r_sin", p.r_sin);
    p.drift_linear = c.get_double("problem.drift_linear", p.drift_linear);
    p.drift_mean_field = c.get_double("problem.drift_mean_field", p.drift_mean_field);
    p.drift_shift = c.get_list("problem.drift_shift", p.drift_shift);
    p.diffusion_sigma = c.get_double("problem.diffusion_sigma", p.diffusion_sigma);
    p.diffusion_mean_field = c.get_double("problem.diffusion_mean_field", p.diffusion_mean_field);
    p.noise_kappas = c.get_list("problem.noise_kappas", p.noise_kappas);
    p.noise_dim = detail::as_size(c, "problem.noise_dim", p.noise_dim);
    p.noise_decay = c.get_double("problem.noise_decay", p.noise_decay);
    p.x0 = c.get_list("problem.x0", p.x0);
    p.x0_std = c.get_list("problem.x0_std", p.x0_std);
    p.noise_scale = c.get_double("problem.noise_scale", p.noise_scale);
    p.horizon = c.get_double("problem.T", p.horizon);
    p.steps = detail::as_size(c, "problem.steps", p.steps);
    p.particles = detail::as_size(c, "problem.particles", p.particles);
    p.seed = c.get_u64("problem.seed", p.seed);
    p.record_every = detail::as_size(c, "problem.record_every", p.record_every);

    auto& s = cfg.study;
    s.kind = c.get_string("study.kind", s.kind);
    s.family = c.get_string("study.family", s.family);
    s.sweep = c.get_list("study.sweep", s.sweep);
    s.rho_points = detail::as_size(c, "study.rho_points", s.rho_points);
    s.slope_target = c.get_double("study.slope_target", s.slope_target);
    s.slope_tol = c.get_double("study.slope_tol", s.slope_tol);
    s.final_ratio = c.get_double("study.final_ratio", s.final_ratio);
    s.epsilon_generator = c.get_string("study.epsilon_generator", s.epsilon_generator);
    s.mode = c.get_string("study.mode", s.mode);
    s.lambda_limit = c.get_double("study.lambda_limit", s.lambda_limit);
    s.bump_amplitude = c.get_double("study.bump_amplitude", s.bump_amplitude);
    s.bump_mode = detail::as_size(c, "study.bump_mode", s.bump_mode);
    s.perturb_amplitude = c.get_double("study.perturb_amplitude", s.perturb_amplitude);
    s.y0 = c.get_list("study.y0", s.y0);
    s.y0_std = c.get_list("study.y0_std", s.y0_std);
    s.replicates = detail::as_size(c, "study.replicates", s.replicates);
    s.orders = c.get_list("study.orders", s.orders);
    s.x0_grid = c.get_list("study.x0_grid", s.x0_grid);
    s.calibration_seed = c.get_u64("study.calibration_seed", s.calibration_seed);
    s.check_seeds = c.get_u64_list("study.check_seeds", s.check_seeds);
    s.iterations = detail::as_size(c, "study.iterations", s.iterations);
    s.floor_seeds = detail::as_size(c, "study.floor_seeds", s.floor_seeds);

    using detail::require;
    static const std::set<std::string> generators = {"scalar", "diagonal", "heat", "divergence"};
    require(generators.contains(p.generator), "problem.generator: unknown generator '" + p.generator + "'");
    require(p.dim() > 0, "problem: state dimension is zero (set diag, modes or grid)");
    require(p.generator != "divergence" || p.grid >= 2, "problem.grid: need at least 2 interior nodes");
    require(p.steps > 0 && p.particles > 0, "problem: steps and particles must be positive");
    require(p.horizon > 0.0 && std::isfinite(p.horizon), "problem.T: must be positive");
    require(p.record_every > 0 && p.steps % p.record_every == 0, "problem.record_every: must divide steps");
    require(p.noise_scale >= 0.0, "problem.noise_scale: must be nonnegative");
    require(!p.x0.empty() && detail::all_finite(p.x0), "problem.x0: need finite values");
    require(!p.x0_std.empty() && detail::all_finite(p.x0_std), "problem.x0_std: need finite values");
    require(detail::all_finite(p.diag) && detail::all_finite(p.drift_shift) && detail::all_finite(p.noise_kappas),
            "problem: list values must be finite");

    static const std::set<std::string> families = {"yosida", "divergence_perturbation", "constant"};
    require(s.kind.empty() || runner_names().contains(s.kind), "study.kind: unknown runner '" + s.kind + "'");
    require(families.contains(s.family), "study.family: unknown family '" + s.family + "'");
    require(s.family != "divergence_perturbation" || p.generator == "divergence",
            "study.family: divergence_perturbation needs problem.generator = divergence");
    require(s.epsilon_generator == "fixed" || s.epsilon_generator == "yosida",
            "study.epsilon_generator: expected fixed or yosida");
    require(s.mode == "bump" || s.mode == "scale", "study.mode: expected bump or scale");
    require(detail::all_finite(s.sweep), "study.sweep: values must be finite");
    require(s.rho_points >= 2, "study.rho_points: need at least 2");
    require(s.replicates >= 1 && s.floor_seeds >= 1, "study: replicates and floor_seeds must be positive");
    require(s.iterations >= 2, "study.iterations: need at least 2");
    require(s.bump_mode < p.dim(), "study.bump_mode: outside the state dimension");
    for (double o : s.orders)
        require(o == 2.0 || o == 4.0, "study.orders: only 2 and 4 are supported");
    return cfg;
}

inline experiment_config load_experiment_file(const std::string& path)
{
    return load_experiment(config_file::load(path));
}

// ---------------------------------------------------------------------------
// problem assembly

namespace detail {

/// One value is broadcast; otherwise the length must match.
inline vector_t expand(const std::vector<double>& v, std::size_t d, const std::string& key)
{
    if (v.empty())
        return vector_t::Zero(static_cast<Eigen::Index>(d));
    if (v.size() == 1)
        return vector_t::Constant(static_cast<Eigen::Index>(d), v.front());
    if (v.size() != d)
        throw config_error(key + ": expected 1 or " + std::to_string(d) + " values, got " +
                           std::to_string(v.size()));
    return Eigen::Map<const vector_t>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace detail

inline generator build_generator(const problem_config& p, double q_perturb = 0.0)
{
    if (p.generator == "scalar")
        return generator::scalar(p.a);
    if (p.generator == "diagonal")
        return generator::diagonal(p.diag);
    if (p.generator == "heat")
        return generator::heat(p.modes, p.diffusivity);
    const double qc = p.q_const, qs = p.q_sin + q_perturb, rc = p.r_const, rs = p.r_sin;
    const auto q = [qc, qs](double z) { return qc + qs * std::sin(std::numbers::pi * z); };
    const auto r = [rc, rs](double z) { return rc + rs * std::sin(std::numbers::pi * z); };
    return build_divergence_form_generator(q, r, p.grid);
}

inline qwiener_spec build_noise(const problem_config& p)
{
    if (!p.noise_kappas.empty())
        return qwiener_spec(p.noise_kappas);
    const std::size_t k = p.noise_dim == 0 ? p.dim() : p.noise_dim;
    std::vector<double> kappas(k);
    for (std::size_t i = 0; i < k; ++i)
        kappas[i] = std::pow(static_cast<double>(i + 1), -p.noise_decay);
    return qwiener_spec(std::move(kappas));
}

/// Noise modes into state coordinates: sine vectors on the divergence-form
/// grid, coordinate vectors otherwise.
inline matrix_t build_embedding(const problem_config& p, std::size_t noise_dim)
{
    const std::size_t d = p.dim();
    if (noise_dim > d)
        throw config_error("problem: noise dimension " + std::to_string(noise_dim) + " exceeds state dimension " +
                           std::to_string(d));
    if (p.generator == "divergence")
        return discrete_sine_basis(d, noise_dim);
    return matrix_t::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(noise_dim));
}

inline affine_mean_field build_affine(const problem_config& p)
{
    affine_mean_field a;
    a.linear = p.drift_linear;
    a.mean_field = p.drift_mean_field;
    a.shift = detail::expand(p.drift_shift, p.dim(), "problem.drift_shift");
    a.sigma = p.diffusion_sigma;
    a.sigma_mean_field = p.diffusion_mean_field;
    a.embedding = build_embedding(p, build_noise(p).dim());
    return a;
}

inline sde_problem build_problem(const problem_config& p)
{
    sde_problem prob;
    prob.a = build_generator(p);
    prob.q = build_noise(p);
    prob.coeffs = make_coefficients(build_affine(p));
    prob.x0 = initial_law{detail::expand(p.x0, p.dim(), "problem.x0"),
                          detail::expand(p.x0_std, p.dim(), "problem.x0_std")};
    prob.noise_scale = p.noise_scale;
    prob.horizon = p.horizon;
    prob.steps = p.steps;
    prob.particles = p.particles;
    return prob;
}

/// Generator family named by study.family, indexed by the sweep values.
inline generator_family build_family(const experiment_config& cfg, const generator& limit)
{
    const auto& s = cfg.study;
    if (s.family == "constant")
        return constant_family(limit, s.sweep);
    if (s.family == "yosida") {
        for (double n : s.sweep)
            if (!(n > limit.bound_alpha()))
                throw config_error("study.sweep: Yosida index " + std::to_string(n) +
                                   " must exceed the generator growth bound");
        return yosida_family(limit, s.sweep);
    }
    std::vector<generator_family::member> members;
    for (double n : s.sweep) {
        if (!(n > 0.0))
            throw config_error("study.sweep: perturbation index must be positive");
        members.push_back({n, build_generator(cfg.problem, s.perturb_amplitude / n)});
    }
    return generator_family(std::move(members), limit);
}

/// Full assembly of everything a runner would build, without simulating.
inline void validate_experiment(const experiment_config& cfg)
{
    const sde_problem prob = build_problem(cfg.problem);
    if (cfg.study.kind == "trotter-kato")
        (void)build_family(cfg, prob.a);
    if (cfg.study.kind == "initial" && cfg.study.y0.empty())
        throw config_error("study.y0: required by the initial runner");
}

// ---------------------------------------------------------------------------
// reports

struct report_row {
    std::string sweep_param;
    double sup_coupled_err = nan_value;
    double sup_coupled_err_se = nan_value;
    double sup_rho_upper = nan_value;
    double slope_fit = nan_value;
    std::string criterion;
    bool pass = true;
};

struct convergence_report {
    std::string runner;
    std::uint64_t seed = 0;
    std::vector<std::string> config_echo;
    std::vector<std::string> overrides;
    std::vector<std::string> notes;
    std::vector<report_row> rows;

    bool all_pass() const
    {
        return std::all_of(rows.begin(), rows.end(), [](const report_row& r) { return r.pass; });
    }
};

inline constexpr const char* report_columns =
    "sweep_param,sup_coupled_err,sup_coupled_err_se,sup_rho_upper,slope_fit,criterion,pass";

/// Shortest round-trip representation; "nan" for NaN.
inline std::string format_number(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string render_header(const std::string& runner, std::uint64_t seed,
                                 const std::vector<std::string>& config_echo,
                                 const std::vector<std::string>& overrides, const std::vector<std::string>& notes)
{
    std::ostringstream out;
    out << "# mvlab " << MVLAB_VERSION << "\n";
    out << "# runner: " << runner << "\n";
    out << "# seed: " << seed << "\n";
    out << "# config:\n";
    for (const auto& line : config_echo)
        out << "#   " << line << "\n";
    for (const auto& line : overrides)
        out << "# override: " << line << "\n";
    for (const auto& line : notes)
        out << "# " << line << "\n";
    return out.str();
}

inline std::string render_report(const convergence_report& rep)
{
    std::ostringstream out;
    out << render_header(rep.runner, rep.seed, rep.config_echo, rep.overrides, rep.notes);
    out << report_columns << "\n";
    for (const auto& r : rep.rows) {
        out << r.sweep_param << ',' << format_number(r.sup_coupled_err) << ','
            << format_number(r.sup_coupled_err_se) << ',' << format_number(r.sup_rho_upper) << ','
            << format_number(r.slope_fit) << ',' << r.criterion << ',' << (r.pass ? "true" : "false") << "\n";
    }
    return out.str();
}

inline void write_text_file(const std::string& text, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw io_error("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out)
        throw io_error("write to '" + path + "' failed");
}

inline void emit_report(const convergence_report& rep, const std::string& path)
{
    write_text_file(render_report(rep), path);
}

// ---------------------------------------------------------------------------
// shared runner machinery

struct run_options {
    std::size_t workers = 1;
};

/// Least-squares slope of log(y) against log(x) over positive pairs.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    if (lx.size() < 2)
        return nan_value;
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : nan_value;
}

/// Each step strictly decreases unless both values are already at the floor.
inline bool decreasing_to_floor(const std::vector<double>& v, double floor)
{
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] < v[k - 1]) && !(v[k] <= floor && v[k - 1] <= floor))
            return false;
    return true;
}

/// sup_t rho <= sqrt(sup_t coupled error), up to rounding in the last place.
inline bool coupling_bound_holds(double rho, double err)
{
    return rho <= std::sqrt(err) * (1.0 + 1e-12);
}

struct comparison {
    time_profile err;
    double rho = 0.0;
    rho_method method = rho_method::exact_assignment;
};

inline std::size_t rho_stride(const path_ensemble& ens, std::size_t rho_points)
{
    const std::size_t intervals = ens.num_times() - 1;
    const std::size_t target = std::max<std::size_t>(rho_points, 2) - 1;
    return std::max<std::size_t>(1, (intervals + target - 1) / target);
}

inline comparison compare_ensembles(const path_ensemble& a, const path_ensemble& b, std::size_t rho_points)
{
    comparison out;
    out.err = coupled_difference(a, b);
    const std::size_t stride = rho_stride(a, rho_points);
    const auto r = d_metric_detailed(a.laws(stride), b.laws(stride));
    out.rho = r.value;
    out.method = r.method;
    return out;
}

namespace detail {

inline convergence_report start_report(const experiment_config& cfg, const std::string& runner)
{
    if (!cfg.study.kind.empty() && cfg.study.kind != runner)
        throw config_error("config is for the '" + cfg.study.kind + "' runner, not '" + runner + "'");
    convergence_report rep;
    rep.runner = runner;
    rep.seed = cfg.problem.seed;
    rep.config_echo = cfg.source.raw_lines();
    rep.overrides = cfg.source.overrides();
    return rep;
}

inline void note_method(convergence_report& rep, rho_method m)
{
    rep.notes.push_back(std::string("rho_method: ") + to_string(m));
}

inline rho_method worse(rho_method a, rho_method b)
{
    return a == rho_method::coupling_bound || b == rho_method::coupling_bound ? rho_method::coupling_bound
                                                                              : rho_method::exact_assignment;
}

inline simulation_options sim_options(worker_pool& pool, std::size_t record_every)
{
    simulation_options so;
    so.pool = &pool;
    so.record_every = record_every;
    return so;
}

inline report_row coupling_row(double param, const comparison& c)
{
    return {format_number(param), c.err.sup,    c.err.sup_se, c.rho, nan_value, "coupling_bound",
            coupling_bound_holds(c.rho, c.err.sup)};
}

inline double spread(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

inline constexpr double absolute_floor = 1e-10;

/// Convergence rows shared by the sweep runners: monotone trend, final
/// value against the first, and the matching bound on the law distance.
inline void convergence_summary(convergence_report& rep, const std::vector<double>& errs,
                                const std::vector<double>& rhos, double final_ratio, double floor)
{
    if (errs.empty())
        return;
    const double threshold = std::max(absolute_floor, 5.0 * floor);
    const double final_bound = std::max(errs.front() * final_ratio, threshold);
    rep.rows.push_back({"all", errs.back(), nan_value, rhos.back(), nan_value, "strictly_decreasing",
                        decreasing_to_floor(errs, threshold)});
    rep.rows.push_back({"final", errs.back(), nan_value, rhos.back(), nan_value, "final_below_threshold",
                        errs.back() < final_bound || errs.back() <= threshold});
    rep.rows.push_back({"final", errs.back(), nan_value, rhos.back(), nan_value, "rho_final_below_bound",
                        rhos.back() < 2.0 * std::sqrt(final_bound) || rhos.back() == 0.0});
    rep.notes.push_back("final_threshold: " + format_number(final_bound));
}

} // namespace detail

// ---------------------------------------------------------------------------
// runners

/// Generator family A_n -> A: coupled errors and law distances per member.
inline convergence_report run_trotter_kato(const experiment_config& cfg, const run_options& opts = {})
{
    auto rep = detail::start_report(cfg, "trotter-kato");
    const auto& p = cfg.problem;
    const auto& s = cfg.study;
    const sde_problem base = build_problem(p);
    const generator_family fam = build_family(cfg, base.a);
    rep.notes.push_back("family: " + s.family);
    if (fam.members().empty())
        return rep;
    rep.notes.push_back("family_bounds: M=" + format_number(fam.uniform_m()) +
                        " alpha=" + format_number(fam.uniform_alpha()));

    worker_pool pool(opts.workers);
    const auto so = detail::sim_options(pool, p.record_every);

    const bool closed_form = p.generator == "scalar" && p.drift_linear == 0.0 && p.drift_mean_field == 0.0 &&
                             detail::expand(p.drift_shift, 1, "problem.drift_shift").isZero(0.0) &&
                             (p.noise_scale == 0.0 || (p.diffusion_sigma == 0.0 && p.diffusion_mean_field == 0.0)) &&
                             base.x0.deterministic();

    const auto limit = simulate_particle_system(base, p.seed, so);
    std::vector<double> params, errs, rhos;
    rho_method method = rho_method::exact_assignment;
    for (const auto& m : fam.members()) {
        sde_problem prob = base;
        prob.a = m.gen;
        const auto ens = simulate_particle_system(prob, p.seed, so);
        const auto c = compare_ensembles(ens, limit, s.rho_points);
        method = detail::worse(method, c.method);
        params.push_back(m.param);
        errs.push_back(c.err.sup);
        rhos.push_back(c.rho);
        rep.rows.push_back(detail::coupling_row(m.param, c));
        if (closed_form) {
            const double an = m.gen.matrix()(0, 0);
            const double a = base.a.matrix()(0, 0);
            const double x0 = base.x0.mean[0];
            double exact = 0.0;
            for (double t : limit.times())
                exact = std::max(exact, std::pow(x0 * (std::exp(t * an) - std::exp(t * a)), 2));
            rep.rows.push_back({format_number(m.param), exact, nan_value, nan_value, nan_value, "closed_form",
                                std::abs(c.err.sup - exact) <= 1e-10});
        }
    }

    double floor = 0.0;
    if (s.replicates > 1) {
        std::vector<double> finals{errs.back()};
        sde_problem prob = base;
        prob.a = fam.members().back().gen;
        for (std::size_t r = 1; r < s.replicates; ++r) {
            const auto lim = simulate_particle_system(base, p.seed + r, so);
            const auto ens = simulate_particle_system(prob, p.seed + r, so);
            finals.push_back(coupled_difference(ens, lim).sup);
        }
        floor = detail::spread(finals);
    }
    rep.notes.push_back("mc_floor: " + format_number(floor));
    detail::convergence_summary(rep, errs, rhos, s.final_ratio, floor);
    rep.rows.push_back({"all", errs.back(), nan_value, rhos.back(), loglog_slope(params, errs), "slope_fit", true});
    detail::note_method(rep, method);
    return rep;
}

/// Small-noise limit: x_eps against the eps = 0 deterministic evolution.
inline convergence_report run_zeroth_order(const experiment_config& cfg, const run_options& opts = {})
{
    auto rep = detail::start_report(cfg, "zeroth-order");
    const auto& p = cfg.problem;
    const auto& s = cfg.study;
    for (double e : s.sweep)
        if (!(e >= 0.0))
            throw config_error("study.sweep: noise intensities must be nonnegative");
    const sde_problem base = build_problem(p);
    const bool fixed_a = s.epsilon_generator == "fixed";
    rep.notes.push_back("epsilon_generator: " + s.epsilon_generator);
    if (s.sweep.empty())
        return rep;

    worker_pool pool(opts.workers);
    const auto so = detail::sim_options(pool, p.record_every);
    sde_problem det = base;
    det.noise_scale = 0.0;
    const auto limit = simulate_particle_system(det, p.seed, so);

    // Pure additive noise on a diagonal generator: the difference is a
    // centred Ornstein-Uhlenbeck process with known variance.
    const bool closed_form = fixed_a && base.a.is_diagonal() && p.drift_mean_field == 0.0 &&
                             p.diffusion_mean_field == 0.0;
    const auto variance_at = [&](double eps, double t) {
        double v = 0.0;
        const auto& kappas = base.q.kappas();
        for (std::size_t k = 0; k < kappas.size(); ++k) {
            const double rate = base.a.matrix()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) +
                                p.drift_linear;
            const double integral = rate == 0.0 ? t : std::expm1(2.0 * rate * t) / (2.0 * rate);
            v += kappas[k] * integral;
        }
        return std::pow(eps * p.noise_scale * p.diffusion_sigma, 2) * v;
    };

    std::vector<double> eps_values, errs, rhos;
    rho_method method = rho_method::exact_assignment;
    for (double eps : s.sweep) {
        sde_problem prob = base;
        prob.noise_scale = eps * p.noise_scale;
        if (!fixed_a && eps > 0.0)
            prob.a = yosida(base.a, 1.0 / eps);
        const auto ens = simulate_particle_system(prob, p.seed, so);
        const auto c = compare_ensembles(ens, limit, s.rho_points);
        method = detail::worse(method, c.method);
        rep.rows.push_back(detail::coupling_row(eps, c));
        if (eps == 0.0 && fixed_a)
            rep.rows.push_back({format_number(eps), c.err.sup, c.err.sup_se, c.rho, nan_value, "zero_noise_exact",
                                c.err.sup == 0.0});
        if (closed_form) {
            double exact = 0.0;
            for (double t : limit.times())
                exact = std::max(exact, variance_at(eps, t));
            rep.rows.push_back({format_number(eps), exact, nan_value, nan_value, nan_value, "closed_form_3se",
                                std::abs(c.err.sup - exact) <= 3.0 * c.err.sup_se + 1e-14});
        }
        if (eps > 0.0) {
            eps_values.push_back(eps);
            errs.push_back(c.err.sup);
            rhos.push_back(c.rho);
        }
    }

    std::vector<std::size_t> order(eps_values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return eps_values[i] > eps_values[j]; });
    std::vector<double> by_eps;
    for (auto i : order)
        by_eps.push_back(errs[i]);
    if (!by_eps.empty())
        rep.rows.push_back({"all", by_eps.back(), nan_value, nan_value, nan_value, "decreasing_in_eps",
                            decreasing_to_floor(by_eps, detail::absolute_floor)});

    const double slope = loglog_slope(eps_values, errs);
    const bool asserted = fixed_a && !base.coeffs.law_dependent;
    const double target = std::isnan(s.slope_target) ? 2.0 : s.slope_target;
    const double tol = std::isnan(s.slope_tol) ? 0.2 : s.slope_tol;
    if (asserted && eps_values.size() >= 2)
        rep.rows.push_back({"all", nan_value, nan_value, nan_value, slope, "slope_in_range",
                            std::abs(slope - target) <= tol});
    else
        rep.rows.push_back({"all", nan_value, nan_value, nan_value, slope, "slope_fit", true});
    detail::note_method(rep, method);
    return rep;
}

/// Coefficient families f_n -> f (bump) or f_lambda = lambda f (scale).
inline convergence_report run_parametric(const experiment_config& cfg, const run_options& opts = {})
{
    auto rep = detail::start_report(cfg, "parametric");
    const auto& p = cfg.problem;
    const auto& s = cfg.study;
    const sde_problem base = build_problem(p);
    const affine_mean_field limit_coeffs = build_affine(p);
    rep.notes.push_back("mode: " + s.mode);
    if (s.sweep.empty())
        return rep;

    const auto member_coeffs = [&](double param) {
        affine_mean_field c = limit_coeffs;
        if (s.mode == "bump") {
            if (!(param > 0.0))
                throw config_error("study.sweep: bump index must be positive");
            c.shift[static_cast<Eigen::Index>(s.bump_mode)] += s.bump_amplitude / param;
        } else {
            c.linear *= param;
            c.mean_field *= param;
            c.shift *= param;
        }
        return c;
    };
    affine_mean_field reference = limit_coeffs;
    if (s.mode == "scale") {
        reference.linear *= s.lambda_limit;
        reference.mean_field *= s.lambda_limit;
        reference.shift *= s.lambda_limit;
    }

    worker_pool pool(opts.workers);
    const auto so = detail::sim_options(pool, p.record_every);
    sde_problem limit_prob = base;
    limit_prob.coeffs = make_coefficients(reference);
    const auto limit = simulate_particle_system(limit_prob, p.seed, so);

    // Probe set for sup |f_n - f|: Gaussian states paired with one probe law.
    const auto d = static_cast<Eigen::Index>(p.dim());
    matrix_t probe_states(d, 16);
    for (Eigen::Index i = 0; i < probe_states.cols(); ++i)
        standard_normals(p.seed, static_cast<std::uint64_t>(i), 0, probe_states.col(i));
    const empirical_measure probe_law(probe_states);
    const coefficient_spec ref_spec = make_coefficients(reference);

    std::vector<double> params, errs, rhos, premise;
    rho_method method = rho_method::exact_assignment;
    for (double param : s.sweep) {
        sde_problem prob = base;
        prob.coeffs = make_coefficients(member_coeffs(param));
        double sup_diff = 0.0;
        for (Eigen::Index i = 0; i < probe_states.cols(); ++i)
            sup_diff = std::max(sup_diff, (prob.coeffs.f(probe_states.col(i), probe_law) -
                                           ref_spec.f(probe_states.col(i), probe_law))
                                              .norm());
        const auto ens = simulate_particle_system(prob, p.seed, so);
        const auto c = compare_ensembles(ens, limit, s.rho_points);
        method = detail::worse(method, c.method);
        rep.rows.push_back(detail::coupling_row(param, c));
        params.push_back(param);
        errs.push_back(c.err.sup);
        rhos.push_back(c.rho);
        premise.push_back(sup_diff);
    }

    if (s.mode == "bump") {
        rep.rows.push_back({"all", premise.back(), nan_value, nan_value, nan_value, "premise_sup_f_diff_decreasing",
                            decreasing_to_floor(premise, detail::absolute_floor)});
        detail::convergence_summary(rep, errs, rhos, s.final_ratio, 0.0);
        const double slope = loglog_slope(params, errs);
        const double target = std::isnan(s.slope_target) ? -2.0 : s.slope_target;
        const double tol = std::isnan(s.slope_tol) ? 0.3 : s.slope_tol;
        const bool negligible = std::all_of(errs.begin(), errs.end(),
                                            [](double e) { return e <= detail::absolute_floor; });
        rep.rows.push_back({"all", nan_value, nan_value, nan_value, slope, "slope_in_range",
                            negligible || (params.size() >= 2 && std::abs(slope - target) <= tol)});
    } else {
        std::vector<std::size_t> order(params.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            return std::abs(params[i] - s.lambda_limit) > std::abs(params[j] - s.lambda_limit);
        });
        std::vector<double> by_distance, premise_by_distance;
        for (auto i : order) {
            by_distance.push_back(errs[i]);
            premise_by_distance.push_back(premise[i]);
        }
        rep.rows.push_back({"all", premise_by_distance.back(), nan_value, nan_value, nan_value,
                            "premise_sup_f_diff_decreasing",
                            decreasing_to_floor(premise_by_distance, detail::absolute_floor)});
        rep.rows.push_back({"all", by_distance.back(), nan_value, nan_value, nan_value, "monotone_in_distance",
                            decreasing_to_floor(by_distance, detail::absolute_floor)});
        rep.notes.push_back("lambda_limit: " + format_number(s.lambda_limit));
    }
    detail::note_method(rep, method);
    return rep;
}

/// 3 M^2 e^{2 alpha T} exp{12 T M^2 e^{2 alpha T} [T K1^2 + tr(Q) K2^2]}
inline double initial_dependence_constant(double m, double alpha, double horizon, double k1, double k2,
                                          double trace_q)
{
    const double growth = m * m * std::exp(2.0 * alpha * horizon);
    return 3.0 * growth * std::exp(12.0 * horizon * growth * (horizon * k1 * k1 + trace_q * k2 * k2));
}

/// Ratio sup_t E|x - y|^2 / E|x0 - y0|^2 for two coupled initial laws.
inline convergence_report run_initial_dependence(const experiment_config& cfg, const run_options& opts = {})
{
    auto rep = detail::start_report(cfg, "initial");
    const auto& p = cfg.problem;
    const auto& s = cfg.study;
    if (s.y0.empty())
        throw config_error("study.y0: required by the initial runner");
    const sde_problem x_prob = build_problem(p);
    sde_problem y_prob = x_prob;
    y_prob.x0 = initial_law{detail::expand(s.y0, p.dim(), "study.y0"),
                            detail::expand(s.y0_std, p.dim(), "study.y0_std")};
    if (x_prob.x0.mean == y_prob.x0.mean && x_prob.x0.stddev == y_prob.x0.stddev)
        throw degenerate_input_error("initial: the two initial laws coincide, E|x0 - y0|^2 = 0");

    const double k2 = x_prob.coeffs.k2 * x_prob.noise_scale;
    const double c = initial_dependence_constant(x_prob.a.bound_m(), x_prob.a.bound_alpha(), p.horizon,
                                                 x_prob.coeffs.k1, k2, x_prob.q.trace_q());
    rep.notes.push_back("constants: M=" + format_number(x_prob.a.bound_m()) +
                        " alpha=" + format_number(x_prob.a.bound_alpha()) + " T=" + format_number(p.horizon) +
                        " K1=" + format_number(x_prob.coeffs.k1) + " K2=" + format_number(k2) +
                        " trQ=" + format_number(x_prob.q.trace_q()));
    // With alpha < 0 the formula can fall below 1 although the ratio is 1 at
    // s = 0; the same expression with max(alpha, 0) is reported alongside.
    const double c_plus = initial_dependence_constant(x_prob.a.bound_m(), std::max(x_prob.a.bound_alpha(), 0.0),
                                                      p.horizon, x_prob.coeffs.k1, k2, x_prob.q.trace_q());
    rep.notes.push_back("C: " + format_number(c));
    rep.notes.push_back("C_alpha_plus: " + format_number(c_plus));
    rep.notes.push_back("ratio rows hold ratios to E|x0-y0|^2 in sup_coupled_err");

    worker_pool pool(opts.workers);
    const auto so = detail::sim_options(pool, p.record_every);
    rho_method method = rho_method::exact_assignment;
    for (std::size_t r = 0; r < s.replicates; ++r) {
        const std::uint64_t seed = p.seed + r;
        const auto xs = simulate_particle_system(x_prob, seed, so);
        const auto ys = simulate_particle_system(y_prob, seed, so);
        const auto cmp = compare_ensembles(xs, ys, s.rho_points);
        method = detail::worse(method, cmp.method);
        const double denom = cmp.err.value.front();
        if (!(denom > 0.0))
            throw degenerate_input_error("initial: sampled E|x0 - y0|^2 is zero");
        const double ratio = cmp.err.sup / denom;
        const double ratio_se = cmp.err.sup_se / denom;
        const double terminal = cmp.err.value.back() / denom;
        const std::string tag = "seed=" + std::to_string(seed);
        rep.rows.push_back({tag, cmp.err.sup, cmp.err.sup_se, cmp.rho, nan_value, "coupling_bound",
                            coupling_bound_holds(cmp.rho, cmp.err.sup)});
        rep.rows.push_back({tag, ratio, ratio_se, nan_value, nan_value, "ratio_le_C", ratio - 3.0 * ratio_se <= c});
        rep.rows.push_back({tag, ratio, ratio_se, nan_value, nan_value, "ratio_le_C_alpha_plus",
                            ratio - 3.0 * ratio_se <= c_plus});
        rep.rows.push_back({tag, terminal, cmp.err.se.back() / denom, nan_value, nan_value, "terminal_ratio",
                            terminal <= c});
    }
    detail::note_method(rep, method);
    return rep;
}

/// Fits J on the calibration seed and checks sup_t E|x|^2p <= J (1 + E|x0|^2p)
/// on the check seeds.
inline convergence_report run_moment_bound(const experiment_config& cfg, const run_options& opts = {})
{
    auto rep = detail::start_report(cfg, "moments");
    const auto& p = cfg.problem;
    const auto& s = cfg.study;
    rep.notes.push_back("rows hold sup_t E|x|^2p in sup_coupled_err and the bound J(1+E|x0|^2p) in slope_fit");
    if (s.orders.empty() || s.x0_grid.empty())
        return rep;

    worker_pool pool(opts.workers);
    const auto so = detail::sim_options(pool, p.record_every);
    const sde_problem base = build_problem(p);

    struct moment_run {
        double sup, sup_se, initial;
    };
    const auto run = [&](double magnitude, std::uint64_t seed) {
        sde_problem prob = base;
        prob.x0.mean = vector_t::Zero(static_cast<Eigen::Index>(p.dim()));
        prob.x0.mean[0] = magnitude;
        const auto ens = simulate_particle_system(prob, seed, so);
        std::map<int, moment_run> out;
        for (double o : s.orders) {
            const auto prof = estimate_moment(ens, static_cast<int>(o));
            out[static_cast<int>(o)] = {prof.sup, prof.sup_se, prof.value.front()};
        }
        return out;
    };

    std::map<int, double> j_fit;
    for (double m : s.x0_grid) {
        for (const auto& [order, r] : run(m, s.calibration_seed))
            j_fit[order] = std::max(j_fit[order], r.sup / (1.0 + r.initial));
    }
    for (const auto& [order, j] : j_fit) {
        rep.notes.push_back("J[2p=" + std::to_string(order) + "]: " + format_number(j));
        rep.rows.push_back({"2p=" + std::to_string(order) + ";calibration_seed=" +
                                std::to_string(s.calibration_seed),
                            nan_value, nan_value, nan_value, j, "calibration", true});
    }
    for (std::uint64_t seed : s.check_seeds) {
        for (double m : s.x0_grid) {
            for (const auto& [order, r] : run(m, seed)) {
                const double bound = j_fit[order] * (1.0 + r.initial);
                rep.rows.push_back({"2p=" + std::to_string(order) + ";x0=" + format_number(m) +
                                        ";seed=" + std::to_string(seed),
                                    r.sup, r.sup_se, nan_value, bound, "moment_bound",
                                    r.sup <= bound + 3.0 * r.sup_se});
            }
        }
    }
    return rep;
}

/// 4 T M^2 e^{2 alpha T} [T K1^2 + tr(Q) K2^2]; the law iteration contracts below 1/3.
inline double picard_smallness(double m, double alpha, double horizon, double k1, double k2, double trace_q)
{
    return 4.0 * horizon * m * m * std::exp(2.0 * alpha * horizon) * (horizon * k1 * k1 + trace_q * k2 * k2);
}

/// Successive law-iteration gaps D(mu^{(k+1)}, mu^{(k)}).
inline convergence_report run_picard(const experiment_config& cfg, const run_options& opts = {})
{
    auto rep = detail::start_report(cfg, "picard");
    const auto& p = cfg.problem;
    const auto& s = cfg.study;
    const sde_problem prob = build_problem(p);
    const double k2 = prob.coeffs.k2 * prob.noise_scale;
    const double smallness = picard_smallness(prob.a.bound_m(), prob.a.bound_alpha(), p.horizon, prob.coeffs.k1, k2,
                                              prob.q.trace_q());

    worker_pool pool(opts.workers);
    simulation_options so;
    so.pool = &pool;
    const auto main = picard_law_iteration(prob, s.iterations, p.seed, so);
    std::vector<double> finals{main.gaps.back()};
    for (std::size_t r = 1; r < s.floor_seeds; ++r)
        finals.push_back(picard_law_iteration(prob, s.iterations, p.seed + r, so).gaps.back());
    const double floor = std::max(detail::spread(finals), 1e-12);
    rep.notes.push_back("mc_floor: " + format_number(floor));

    rep.rows.push_back({"condition", smallness, nan_value, nan_value, nan_value, "premise_smallness",
                        smallness < 1.0 / 3.0});
    for (std::size_t k = 0; k < main.gaps.size(); ++k) {
        report_row row{std::to_string(k + 1), main.gaps[k], nan_value, main.gaps[k], nan_value, "gap", true};
        if (k > 0) {
            row.criterion = "gap_decreasing";
            row.pass = main.gaps[k] < main.gaps[k - 1] || main.gaps[k] <= floor;
        }
        rep.rows.push_back(row);
    }
    if (!prob.coeffs.law_dependent)
        rep.rows.push_back({"1", main.gaps.front(), nan_value, main.gaps.front(), nan_value,
                            "law_independent_gap_zero", main.gaps.front() <= 1e-12});
    detail::note_method(rep, main.method);
    return rep;
}

/// Trajectory summary of one ensemble: second moment with its standard
/// error, phi_2 norm of the empirical law and the mean of the first coordinate.
inline std::string run_simulate(const experiment_config& cfg, const run_options& opts = {})
{
    if (!cfg.study.kind.empty() && cfg.study.kind != "simulate")
        throw config_error("config is for the '" + cfg.study.kind + "' runner, not 'simulate'");
    const auto& p = cfg.problem;
    worker_pool pool(opts.workers);
    const auto ens = simulate_particle_system(build_problem(p), p.seed, detail::sim_options(pool, p.record_every));
    const auto moment = estimate_moment(ens, 2);
    std::ostringstream out;
    out << render_header("simulate", p.seed, cfg.source.raw_lines(), cfg.source.overrides(), {});
    out << "t,second_moment,second_moment_se,phi2_norm,mean_x1\n";
    for (std::size_t k = 0; k < ens.num_times(); ++k) {
        const auto law = ens.law(k);
        out << format_number(ens.times()[k]) << ',' << format_number(moment.value[k]) << ','
            << format_number(moment.se[k]) << ',' << format_number(phi_norm(law, 2.0)) << ','
            << format_number(law.mean()[0]) << "\n";
    }
    return out.str();
}

/// Dispatch by runner name.
inline convergence_report run_study(const std::string& runner, const experiment_config& cfg,
                                    const run_options& opts = {})
{
    if (runner == "trotter-kato")
        return run_trotter_kato(cfg, opts);
    if (runner == "zeroth-order")
        return run_zeroth_order(cfg, opts);
    if (runner == "parametric")
        return run_parametric(cfg, opts);
    if (runner == "initial")
        return run_initial_dependence(cfg, opts);
    if (runner == "moments")
        return run_moment_bound(cfg, opts);
    if (runner == "picard")
        return run_picard(cfg, opts);
    throw config_error("unknown runner '" + runner + "'");
}

} // namespace mvlab
