#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmflow/core.hpp"
#include "mmflow/prox.hpp"

namespace mmflow {

enum class SlopeMethod { Analytic, FiniteDifference, DescentProbe };

struct SlopeMethodSpec {
    SlopeMethod kind = SlopeMethod::Analytic;
    /// Finite-difference step.
    double h = 1e-6;
    /// Shrinking radii for the descent probe.
    std::vector<double> radii;
    /// Sampled sphere directions per radius (d > 1).
    std::size_t directions = 64;

    static SlopeMethodSpec analytic() { return {}; }
    static SlopeMethodSpec finite_difference(double h) { return {SlopeMethod::FiniteDifference, h, {}, 0}; }
    static SlopeMethodSpec descent_probe(std::vector<double> radii, std::size_t directions = 64) {
        return {SlopeMethod::DescentProbe, 0.0, std::move(radii), directions};
    }
};

struct SlopeEstimate {
    Point point;
    double local_slope = 0.0;
    SlopeMethodSpec method;
};

/// |d f|(u): analytic |grad f(u)|, central differences, or a descent probe over spheres.
inline SlopeEstimate local_slope(const Functional& f, const Point& u, const SlopeMethodSpec& method) {
    const ExtReal fu = f(u);
    if (!fu.is_finite()) throw Error(ErrorKind::InfiniteValue, "local_slope needs f(u) finite");
    SlopeEstimate out{u, 0.0, method};
    switch (method.kind) {
        case SlopeMethod::Analytic: {
            if (!f.analytic_derivative) {
                throw Error(ErrorKind::MissingAnalyticSlope, "functional carries no analytic derivative");
            }
            out.local_slope = distance((*f.analytic_derivative)(u), Point(u.dim()));
            break;
        }
        case SlopeMethod::FiniteDifference: {
            if (!(method.h > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be > 0");
            double sum = 0.0;
            for (std::size_t i = 0; i < u.dim(); ++i) {
                Point plus = u;
                Point minus = u;
                plus.set(i, u[i] + method.h);
                minus.set(i, u[i] - method.h);
                const ExtReal fp = f(plus);
                const ExtReal fm = f(minus);
                if (!fp.is_finite() || !fm.is_finite()) {
                    throw Error(ErrorKind::InfiniteValue, "finite-difference stencil leaves the domain");
                }
                const double g = (fp.value() - fm.value()) / (2.0 * method.h);
                sum += g * g;
            }
            out.local_slope = std::sqrt(sum);
            break;
        }
        case SlopeMethod::DescentProbe: {
            if (method.radii.empty()) throw Error(ErrorKind::InvalidArgument, "descent probe needs radii");
            std::vector<Point> dirs;
            if (u.dim() == 1) {
                dirs = {Point{1.0}, Point{-1.0}};
            } else {
                for (std::size_t i = 0; i < u.dim(); ++i) {
                    for (double s : {1.0, -1.0}) {
                        Point e(u.dim());
                        e.set(i, s);
                        dirs.push_back(e);
                    }
                }
                std::mt19937_64 rng(12345);
                std::normal_distribution<double> normal;
                for (std::size_t k = 0; k < method.directions; ++k) {
                    Point e(u.dim());
                    double n2 = 0.0;
                    for (std::size_t i = 0; i < u.dim(); ++i) {
                        e.set(i, normal(rng));
                        n2 += e[i] * e[i];
                    }
                    const double n = std::sqrt(n2);
                    if (n == 0.0) continue;
                    for (std::size_t i = 0; i < u.dim(); ++i) e.set(i, e[i] / n);
                    dirs.push_back(e);
                }
            }
            double best = 0.0;
            for (double r : method.radii) {
                if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "probe radii must be > 0");
                for (const Point& e : dirs) {
                    Point w = u;
                    for (std::size_t i = 0; i < u.dim(); ++i) w.set(i, u[i] + r * e[i]);
                    const ExtReal fw = f(w);
                    if (!fw.is_finite()) continue;
                    best = std::max(best, std::max(0.0, fu.value() - fw.value()) / distance(u, w));
                }
            }
            out.local_slope = best;
            break;
        }
    }
    return out;
}

/// chi_{eps,tau}(u) = (phi_eps(u) - Y_tau phi_eps(u))/tau. The true ratio lies in
/// [ratio, ratio + gap].
struct DeGiorgiRatio {
    double tau = 0.0;
    double epsilon = 0.0;
    Point point;
    double ratio = 0.0;
    double gap = 0.0;
};

inline DeGiorgiRatio de_giorgi_ratio_of(const Functional& f, const CoercivityCertificate& cert, double tau,
                                        double epsilon, const Point& u, const InnerSolverConfig& cfg = {}) {
    const ExtReal fu = f(u);
    if (!fu.is_finite()) throw Error(ErrorKind::InfiniteValue, "De Giorgi ratio needs a finite value at u");
    const ProxResult r = moreau_yosida(f, cert, tau, u, cfg);
    return {tau, epsilon, u, (fu.value() - r.value) / tau, r.certified_gap / tau};
}

inline DeGiorgiRatio de_giorgi_ratio(const FunctionalFamily& family, const CouplingSchedule& coupling, double tau,
                                     const Point& u, const InnerSolverConfig& cfg = {}) {
    const double eps = coupling(tau);
    return de_giorgi_ratio_of(family.member(eps), family.certificate, tau, eps, u, cfg);
}

enum class ProbeVerdict { Satisfied, Violated, Inconclusive };

inline const char* to_string(ProbeVerdict v) {
    switch (v) {
        case ProbeVerdict::Satisfied: return "satisfied";
        case ProbeVerdict::Violated: return "violated";
        case ProbeVerdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

/// A violated verdict refutes the condition; a satisfied one is evidence for the supplied
/// sequence only.
inline const char* verdict_strength(ProbeVerdict v) {
    return v == ProbeVerdict::Violated ? "conclusive" : "evidence";
}

inline ProbeVerdict compare_to_target(double liminf, double target, double tolerance) {
    if (liminf >= target - tolerance) return ProbeVerdict::Satisfied;
    if (liminf < target - tolerance) return ProbeVerdict::Violated;
    return ProbeVerdict::Inconclusive;
}

struct CrucialProbeOptions {
    /// Number of smallest tau values forming the tail.
    std::size_t tail = 3;
    double tolerance_factor = 10.0;
    /// Also check phi_eps(u_tau) -> phi(u) along the sequence.
    bool check_convergence_condition = false;
    /// Absolute tolerance for the energy convergence check; relative to 1 + |phi(u)|.
    double energy_tolerance = 1e-2;
};

struct EnergyConvergenceCheck {
    std::vector<double> member_values;
    double limit_value = 0.0;
    std::vector<double> deviations;
    double tolerance = 0.0;
    ProbeVerdict verdict = ProbeVerdict::Inconclusive;
};

struct CrucialAssumptionReport {
    Point limit_point;
    std::vector<DeGiorgiRatio> ratios;
    /// (phi(u_tau) - Y_tau phi(u_tau))/tau for the limit functional, per tau.
    std::vector<double> limit_ratios;
    double liminf_estimate = 0.0;
    double target = 0.0;
    /// 10 * max tail gap/tau plus the limit functional's own deviation from the target.
    double tolerance = 0.0;
    double gap_term = 0.0;
    double limit_bias = 0.0;
    ProbeVerdict verdict = ProbeVerdict::Inconclusive;
    std::optional<EnergyConvergenceCheck> convergence_condition;
};

namespace detail {

inline std::vector<std::size_t> tail_indices(const std::vector<double>& params, std::size_t tail) {
    std::vector<std::size_t> idx(params.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return params[a] < params[b]; });
    idx.resize(std::min(tail, idx.size()));
    return idx;
}

}  // namespace detail

/// Estimates liminf chi_{eps(tau),tau}(u_tau) against 1/2 |d^- phi|^2(u).
inline CrucialAssumptionReport crucial_assumption_probe(const FunctionalFamily& family,
                                                        const CouplingSchedule& coupling,
                                                        const std::function<Point(double)>& point_sequence,
                                                        const Point& limit_point,
                                                        const std::vector<double>& tau_list,
                                                        const InnerSolverConfig& cfg = {},
                                                        const CrucialProbeOptions& options = {},
                                                        std::size_t jobs = detail::default_jobs()) {
    if (!family.limit_slope) {
        throw Error(ErrorKind::MissingAnalyticSlope, "crucial assumption probe needs the limit slope");
    }
    if (tau_list.empty()) throw Error(ErrorKind::InvalidArgument, "empty tau list");
    CrucialAssumptionReport rep;
    rep.limit_point = limit_point;
    const double slope = (*family.limit_slope)(limit_point);
    rep.target = 0.5 * slope * slope;

    rep.ratios.resize(tau_list.size());
    rep.limit_ratios.resize(tau_list.size());
    detail::parallel_for(tau_list.size(), jobs, [&](std::size_t i) {
        const double tau = tau_list[i];
        const Point u = point_sequence(tau);
        rep.ratios[i] = de_giorgi_ratio(family, coupling, tau, u, cfg);
        rep.limit_ratios[i] = de_giorgi_ratio_of(family.limit, family.certificate, tau, 0.0, u, cfg).ratio;
    });

    const auto tail = detail::tail_indices(tau_list, options.tail);
    rep.liminf_estimate = std::numeric_limits<double>::infinity();
    for (std::size_t i : tail) {
        rep.liminf_estimate = std::min(rep.liminf_estimate, rep.ratios[i].ratio);
        rep.gap_term = std::max(rep.gap_term, options.tolerance_factor * rep.ratios[i].gap);
        rep.limit_bias = std::max(rep.limit_bias, std::abs(rep.limit_ratios[i] - rep.target));
    }
    rep.tolerance = rep.gap_term + rep.limit_bias;
    rep.verdict = compare_to_target(rep.liminf_estimate, rep.target, rep.tolerance);

    if (options.check_convergence_condition) {
        EnergyConvergenceCheck cc;
        const ExtReal lv = family.limit(limit_point);
        if (!lv.is_finite()) throw Error(ErrorKind::InfiniteValue, "limit functional infinite at the limit point");
        cc.limit_value = lv.value();
        cc.tolerance = options.energy_tolerance * (1.0 + std::abs(cc.limit_value));
        double max_dev = 0.0;
        double min_dev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < tau_list.size(); ++i) {
            const double eps = coupling(tau_list[i]);
            const ExtReal mv = family.member(eps)(rep.ratios[i].point);
            const double v = mv.is_finite() ? mv.value() : std::numeric_limits<double>::infinity();
            cc.member_values.push_back(v);
            cc.deviations.push_back(std::abs(v - cc.limit_value));
        }
        for (std::size_t i : tail) {
            max_dev = std::max(max_dev, cc.deviations[i]);
            min_dev = std::min(min_dev, cc.deviations[i]);
        }
        if (max_dev <= cc.tolerance) {
            cc.verdict = ProbeVerdict::Satisfied;
        } else if (min_dev > cc.tolerance) {
            cc.verdict = ProbeVerdict::Violated;
        } else {
            cc.verdict = ProbeVerdict::Inconclusive;
        }
        rep.convergence_condition = cc;
    }
    return rep;
}

/// phi(u(s)) - phi(u(t)) - 1/2 int_s^t |d^- phi|^2(u) - 1/2 int_s^t |u'|^2.
///
/// The slope term uses the trapezoid rule on a uniform grid; |u'| on each cell is the
/// symmetric difference quotient about the cell midpoint.
inline double edi_residual(const std::function<Point(double)>& curve, const Functional& phi,
                           const std::function<double(const Point&)>& slope_fn, double s, double t,
                           double quadrature_step) {
    if (!(t > s) || !(quadrature_step > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "edi_residual needs s < t and a positive step");
    }
    const auto cells = static_cast<std::size_t>(std::ceil((t - s) / quadrature_step - 1e-9));
    const double h = (t - s) / static_cast<double>(cells);
    std::vector<Point> nodes;
    nodes.reserve(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k) nodes.push_back(curve(k == cells ? t : s + h * static_cast<double>(k)));

    double slope_int = 0.0;
    double speed_int = 0.0;
    for (std::size_t k = 0; k < cells; ++k) {
        const double ga = slope_fn(nodes[k]);
        const double gb = slope_fn(nodes[k + 1]);
        slope_int += 0.5 * h * (ga * ga + gb * gb);
        const double v = distance(nodes[k + 1], nodes[k]) / h;
        speed_int += h * v * v;
    }
    const ExtReal ps = phi(nodes.front());
    const ExtReal pt = phi(nodes.back());
    if (!ps.is_finite() || !pt.is_finite()) throw Error(ErrorKind::InfiniteValue, "curve leaves the domain");
    return ps.value() - pt.value() - 0.5 * slope_int - 0.5 * speed_int;
}

enum class SlopeMode { RelaxedSlopeProxy, LocalSlope };

struct SlopeLiminfReport {
    Point limit_point;
    std::vector<double> epsilons;
    std::vector<double> slopes;
    double liminf_estimate = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    ProbeVerdict verdict = ProbeVerdict::Inconclusive;
};

/// Compares liminf |d phi_eps|(u_eps) with |d phi|(u) over the three smallest eps.
///
/// Tolerance is 10 times the last tail increment of the slope sequence; when that exceeds
/// half of max(target, 1) the sequence is too erratic and the verdict is inconclusive.
inline SlopeLiminfReport slope_liminf_probe(const FunctionalFamily& family,
                                            const std::function<Point(double)>& point_sequence,
                                            const Point& limit_point, const std::vector<double>& epsilon_list,
                                            SlopeMode mode = SlopeMode::RelaxedSlopeProxy, std::size_t tail = 3) {
    if (!family.limit_slope) throw Error(ErrorKind::MissingAnalyticSlope, "slope probe needs the limit slope");
    if (epsilon_list.empty()) throw Error(ErrorKind::InvalidArgument, "empty epsilon list");
    SlopeLiminfReport rep;
    rep.limit_point = limit_point;
    rep.epsilons = epsilon_list;
    rep.target = (*family.limit_slope)(limit_point);
    for (double eps : epsilon_list) {
        const Functional m = family.member(eps);
        if (!m.analytic_derivative) {
            throw Error(ErrorKind::MissingAnalyticSlope, "slope probe needs member derivatives");
        }
        const Point u = point_sequence(eps);
        SlopeMethodSpec method = SlopeMethodSpec::analytic();
        if (mode == SlopeMode::LocalSlope) {
            const double scale = m.feature_scale ? *m.feature_scale : 1.0;
            method = SlopeMethodSpec::finite_difference(1e-6 * std::min(1.0, scale));
        }
        rep.slopes.push_back(local_slope(m, u, method).local_slope);
    }
    const auto idx = detail::tail_indices(epsilon_list, tail);
    rep.liminf_estimate = std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) rep.liminf_estimate = std::min(rep.liminf_estimate, rep.slopes[i]);
    const double increment = idx.size() >= 2 ? std::abs(rep.slopes[idx[0]] - rep.slopes[idx[1]]) : 0.0;
    rep.tolerance = 10.0 * increment + 1e-12 * (1.0 + rep.target);
    if (rep.tolerance > 0.5 * std::max(rep.target, 1.0)) {
        rep.verdict = ProbeVerdict::Inconclusive;
    } else {
        rep.verdict = compare_to_target(rep.liminf_estimate, rep.target, rep.tolerance);
    }
    return rep;
}

/// Odd extension of t/(1+t): strictly increasing, 1-Lipschitz, maps [0, inf] onto [0, 1].
inline double default_homeomorphism(double t) {
    if (std::isinf(t)) return t > 0 ? 1.0 : -1.0;
    return t / (1.0 + std::abs(t));
}

struct GammaDistanceSpec {
    std::vector<Point> dense_points;
    std::vector<double> kappas;
    std::function<double(double)> homeomorphism = default_homeomorphism;

    std::size_t I() const { return dense_points.size(); }
    std::size_t J() const { return kappas.size(); }
    double truncation_bound() const {
        return std::ldexp(1.0, -static_cast<int>(I())) + std::ldexp(1.0, -static_cast<int>(J()));
    }
};

/// Midpoint-refinement enumeration of [lo, hi]: lo, hi, mid, then successive midpoints.
inline std::vector<double> midpoint_enumeration(double lo, double hi, std::size_t count) {
    std::vector<double> out;
    if (count == 0) return out;
    out.push_back(lo);
    if (count > 1) out.push_back(hi);
    for (std::size_t level = 1; out.size() < count; ++level) {
        const std::size_t parts = std::size_t{1} << level;
        for (std::size_t k = 1; k < parts && out.size() < count; k += 2) {
            out.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(parts));
        }
    }
    return out;
}

inline GammaDistanceSpec default_gamma_spec(std::size_t I = 8, std::size_t J = 8) {
    GammaDistanceSpec spec;
    for (double x : midpoint_enumeration(-4.0, 4.0, I)) spec.dense_points.push_back(Point{x});
    for (std::size_t j = 1; j <= J; ++j) spec.kappas.push_back(std::ldexp(1.0, -static_cast<int>(j)));
    return spec;
}

/// Solver settings for gamma_delta on [-4, 4] with kappa up to 1/2: the grid resolves a
/// feature scale of 1e-3.
inline InnerSolverConfig default_gamma_solver_config() {
    InnerSolverConfig cfg;
    cfg.coarse_grid_points = 65536;
    return cfg;
}

struct GammaDelta {
    double value = 0.0;
    double truncation_bound = 0.0;
    /// Sum of weighted certified gaps of both functionals.
    double accumulated_gap = 0.0;
};

/// Truncated sum over i <= I, j <= J of 2^{-i-j} |Phi(Y_kj f(x_i)) - Phi(Y_kj g(x_i))|.
inline GammaDelta gamma_delta(const Functional& f, const Functional& g, const GammaDistanceSpec& spec,
                              const CoercivityCertificate& cert_f, const CoercivityCertificate& cert_g,
                              const InnerSolverConfig& cfg = {}, std::size_t jobs = detail::default_jobs()) {
    const std::size_t I = spec.I();
    const std::size_t J = spec.J();
    std::vector<double> terms(I * J, 0.0);
    std::vector<double> gaps(I * J, 0.0);
    detail::parallel_for(I * J, jobs, [&](std::size_t k) {
        const std::size_t i = k / J;
        const std::size_t j = k % J;
        const ProxResult rf = moreau_yosida(f, cert_f, spec.kappas[j], spec.dense_points[i], cfg);
        const ProxResult rg = moreau_yosida(g, cert_g, spec.kappas[j], spec.dense_points[i], cfg);
        const double w = std::ldexp(1.0, -static_cast<int>(i + j + 2));
        terms[k] = w * std::abs(spec.homeomorphism(rf.value) - spec.homeomorphism(rg.value));
        gaps[k] = w * (rf.certified_gap + rg.certified_gap);
    });
    GammaDelta out;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        out.value += terms[k];
        out.accumulated_gap += gaps[k];
    }
    out.truncation_bound = spec.truncation_bound();
    return out;
}

/// F_{eps,tau,alpha} = chi_{eps,tau} + alpha (phi_eps + A + B d^2(., u*)) + d(., u*).
/// Each evaluation solves an inner prox with `inner`.
inline Functional auxiliary_functional(const Functional& phi, const CoercivityCertificate& cert, double tau,
                                       double alpha, const InnerSolverConfig& inner) {
    Functional F;
    F.evaluate = [phi, cert, tau, alpha, inner](const Point& v) {
        const ExtReal pv = phi(v);
        if (!pv.is_finite()) return ExtReal::infinity();
        const ProxResult r = moreau_yosida(phi, cert, tau, v, inner);
        const double chi = std::max(0.0, (pv.value() - r.value) / tau);
        const double d2 = distance_squared(v, cert.u_star);
        return ExtReal(chi + alpha * (pv.value() + cert.A + cert.B * d2) + std::sqrt(d2));
    };
    F.domain_hint = phi.domain_hint;
    return F;
}

struct EpsilonSearchOptions {
    double eps_max = 1.0;
    double eps_min = 1e-8;
    std::size_t samples = 17;
    /// Solver for the outer Y_kappa F evaluations.
    InnerSolverConfig outer = [] {
        InnerSolverConfig c;
        c.coarse_grid_points = 257;
        c.refine_iterations = 40;
        c.refine_brackets = 2;
        c.max_bound_evaluations = 2000;
        c.gap_tolerance = 1e-6;
        return c;
    }();
    /// Solver for the prox inside each F evaluation.
    InnerSolverConfig inner = [] {
        InnerSolverConfig c;
        c.coarse_grid_points = 257;
        c.refine_iterations = 40;
        c.refine_brackets = 2;
        c.max_bound_evaluations = 2000;
        c.gap_tolerance = 1e-9;
        return c;
    }();
};

struct EpsilonSearchEntry {
    double tau = 0.0;
    double theta = 0.0;
    /// Largest admissible sampled eps; absent when none qualifies.
    std::optional<double> epsilon;
    std::optional<double> delta;
    std::optional<ErrorKind> error;
};

/// For each tau, the largest sampled eps with delta(F_{eps,tau,alpha}, F_{tau,alpha}) <= theta(tau),
/// found by bisection over a log-spaced sample of [eps_min, eps_max].
inline std::vector<EpsilonSearchEntry> epsilon_schedule_search(const FunctionalFamily& family,
                                                               const std::vector<double>& tau_list, double alpha,
                                                               const std::function<double(double)>& theta,
                                                               const GammaDistanceSpec& spec,
                                                               const EpsilonSearchOptions& options = {},
                                                               std::size_t jobs = detail::default_jobs()) {
    if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be positive");
    if (options.samples < 2 || !(options.eps_min > 0.0) || !(options.eps_max > options.eps_min)) {
        throw Error(ErrorKind::InvalidArgument, "epsilon sample needs 0 < eps_min < eps_max and >= 2 points");
    }
    const CoercivityCertificate& cert = family.certificate;
    std::vector<double> eps(options.samples);
    const double ratio = std::log(options.eps_min / options.eps_max) / static_cast<double>(options.samples - 1);
    for (std::size_t k = 0; k < eps.size(); ++k) eps[k] = options.eps_max * std::exp(ratio * static_cast<double>(k));
    eps.back() = options.eps_min;

    // F >= 0 up to the inner gap, so the trivial certificate applies.
    const CoercivityCertificate f_cert{0.0, 0.0, cert.u_star};

    std::vector<EpsilonSearchEntry> table;
    for (double tau : tau_list) {
        if (2.0 * tau * cert.B >= 1.0) throw Error(ErrorKind::TauTooLarge, "need tau < 1/(2B)");
        EpsilonSearchEntry entry;
        entry.tau = tau;
        entry.theta = theta(tau);
        const Functional limit_F = auxiliary_functional(family.limit, cert, tau, alpha, options.inner);
        auto delta_at = [&](double e) {
            const Functional Fe = auxiliary_functional(family.member(e), cert, tau, alpha, options.inner);
            return gamma_delta(Fe, limit_F, spec, f_cert, f_cert, options.outer, jobs).value;
        };
        const double d_max = delta_at(eps.front());
        if (d_max <= entry.theta) {
            entry.epsilon = eps.front();
            entry.delta = d_max;
        } else {
            const double d_min = delta_at(eps.back());
            if (d_min > entry.theta) {
                entry.error = ErrorKind::NoAdmissibleEpsilon;
                entry.delta = d_min;
            } else {
                // eps[lo] fails, eps[hi] is admissible.
                std::size_t lo = 0;
                std::size_t hi = eps.size() - 1;
                double d_hi = d_min;
                while (hi - lo > 1) {
                    const std::size_t mid = (lo + hi) / 2;
                    const double d = delta_at(eps[mid]);
                    if (d <= entry.theta) {
                        hi = mid;
                        d_hi = d;
                    } else {
                        lo = mid;
                    }
                }
                entry.epsilon = eps[hi];
                entry.delta = d_hi;
            }
        }
        table.push_back(entry);
    }
    return table;
}

}  // namespace mmflow
