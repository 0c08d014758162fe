#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmflow/core.hpp"
#include "mmflow/prox.hpp"

namespace mmflow {

/// Well-prepared initial data: u_tau^0 for each tau together with the limit point u^0.
struct RecoveryData {
    std::function<Point(double)> initial_for;
    Point limit_point;

    static RecoveryData constant(const Point& u0) {
        return {[u0](double) { return u0; }, u0};
    }
};

/// Discrete solution u_tau^0..u_tau^N of the relaxed scheme on [0, horizon].
struct Trajectory {
    double tau = 0.0;
    double epsilon = 0.0;
    double horizon = 0.0;
    Point initial;
    /// u_tau^n for n = 1..N.
    std::vector<Point> values;
    /// d(u^n, u^{n-1}) / tau for n = 1..N.
    std::vector<double> step_speeds;
    /// phi_eps(u^n) for n = 1..N.
    std::vector<double> energies;
    double initial_energy = 0.0;
    /// Additive error budget of step n.
    std::vector<double> budgets;
    /// Inner-solver gap at step n (the oracle gap for external selectors).
    std::vector<double> certified_gaps;
    /// Steps of an external selector that the checker could not decide.
    std::size_t uncertain_steps = 0;

    std::size_t steps() const { return values.size(); }

    /// u^n for n = 0..N.
    const Point& at_step(std::size_t n) const { return n == 0 ? initial : values[n - 1]; }

    /// Step index n with t in ((n-1) tau, n tau], clamped to [0, N].
    std::size_t step_index(double t) const {
        if (t <= 0.0) return 0;
        auto n = static_cast<std::size_t>(std::ceil(t / tau));
        if (n > 0 && static_cast<double>(n - 1) * tau >= t) --n;
        return std::min(n, steps());
    }

    /// Piecewise-constant interpolant.
    const Point& eval(double t) const { return at_step(step_index(t)); }

    /// Sum of d(u^j,u^{j-1})^2 / (2 tau) over j = 1..n.
    double displacement_sum(std::size_t n) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += 0.5 * step_speeds[j] * step_speeds[j] * tau;
        return s;
    }
};

/// Information handed to a step selector.
struct StepContext {
    double tau;
    double epsilon;
    std::size_t n;
    const Point& previous;
    const Functional& member;
    double budget;
};

/// User-supplied rule producing u^n; its output is validated against the relaxed inequality.
using StepSelector = std::function<Point(const StepContext&)>;

inline std::size_t step_count(double tau, double horizon) {
    return static_cast<std::size_t>(std::ceil(horizon / tau - 1e-9));
}

/// Explicit constant C with d^2(u_tau^n, u_star) <= C for n tau <= horizon.
///
/// B > 0: Young's inequality with delta = 1/(4B) gives
///   a_n <= 2 a_0 + E/B + 8B sum_{j<=n} tau a_j,  E = phi(u^0) + A + total budget,
/// and the discrete Gronwall lemma (m = 8B tau < 1) yields C = A1/(1-m) exp(8B T/(1-m)).
/// B = 0: the displacement estimate plus Cauchy-Schwarz give C = (d_0 + sqrt(2 T E))^2.
inline double gronwall_bound(const FunctionalFamily& family, const CouplingSchedule& coupling,
                             const ErrorSchedule& errors, const RecoveryData& recovery, double tau,
                             double horizon) {
    const CoercivityCertificate& cert = family.certificate;
    cert.validate();
    const double eps = coupling(tau);
    const Functional member = family.member(eps);
    const Point u0 = recovery.initial_for(tau);
    const ExtReal e0 = member(u0);
    if (!e0.is_finite()) throw Error(ErrorKind::InfiniteValue, "initial energy is +inf");
    const std::size_t n = step_count(tau, horizon);
    const double t_eff = static_cast<double>(n) * tau;
    const double energy = std::max(0.0, e0.value() + cert.A + errors.total_budget(tau, n));
    const double a0 = distance_squared(u0, cert.u_star);
    if (cert.B == 0.0) {
        const double r = std::sqrt(a0) + std::sqrt(2.0 * t_eff * energy);
        return r * r;
    }
    const double alpha = 8.0 * cert.B;
    const double m = alpha * tau;
    if (!(m < 1.0)) throw Error(ErrorKind::TauTooLarge, "Gronwall bound needs 8 B tau < 1");
    const double a1 = 2.0 * a0 + energy / cert.B;
    return a1 / (1.0 - m) * std::exp(alpha / (1.0 - m) * t_eff);
}

/// One run of the relaxed minimizing-movement scheme at time step tau.
inline Trajectory run_single(const FunctionalFamily& family, const CouplingSchedule& coupling,
                             const ErrorSchedule& errors, const RecoveryData& recovery, double tau,
                             double horizon, const InnerSolverConfig& cfg = {},
                             const StepSelector& selector = {}) {
    if (!(tau > 0.0) || !(horizon > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "tau and horizon must be positive");
    }
    const CoercivityCertificate& cert = family.certificate;
    if (!(2.0 * tau * cert.B < 1.0)) throw Error(ErrorKind::TauTooLarge, "2 tau B >= 1");

    Trajectory traj;
    traj.tau = tau;
    traj.horizon = horizon;
    traj.epsilon = coupling(tau);
    const Functional member = family.member(traj.epsilon);
    traj.initial = recovery.initial_for(tau);
    const ExtReal e0 = member(traj.initial);
    if (!e0.is_finite()) throw Error(ErrorKind::InfiniteValue, "phi_eps(u_tau^0) = +inf");
    traj.initial_energy = e0.value();

    std::optional<double> divergence_radius;
    try {
        divergence_radius = 1e3 * std::sqrt(gronwall_bound(family, coupling, errors, recovery, tau, horizon));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::TauTooLarge) throw;
    }

    const std::size_t n_steps = step_count(tau, horizon);
    traj.values.reserve(n_steps);
    traj.step_speeds.reserve(n_steps);
    traj.energies.reserve(n_steps);
    traj.budgets.reserve(n_steps);
    traj.certified_gaps.reserve(n_steps);

    Point prev = traj.initial;
    for (std::size_t n = 1; n <= n_steps; ++n) {
        const double budget = errors.budget(tau, n);
        Point next;
        double gap = 0.0;
        if (selector) {
            next = selector(StepContext{tau, traj.epsilon, n, prev, member, budget});
            // The oracle only has to resolve the inequality to a small fraction of the budget.
            const ProxResult oracle =
                detail::solve_prox(member, cert, tau, prev, cfg, std::max(cfg.gap_tolerance, 1e-3 * budget));
            const InequalityVerdict v = check_relaxed_inequality(member, tau, prev, next, budget, oracle);
            if (v.kind == VerdictKind::Fails) {
                throw Error(ErrorKind::SelectorRejected,
                            "selector output violates the relaxed inequality at step " + std::to_string(n));
            }
            if (v.kind == VerdictKind::Uncertain) ++traj.uncertain_steps;
            gap = oracle.certified_gap;
        } else {
            const ProxResult r = relaxed_step_result(member, cert, tau, prev, budget, cfg);
            next = r.minimizer;
            gap = r.certified_gap;
        }
        const ExtReal en = member(next);
        if (!en.is_finite()) throw Error(ErrorKind::InfiniteValue, "step produced an infinite energy");
        if (divergence_radius && distance(next, cert.u_star) > *divergence_radius) {
            throw Error(ErrorKind::DivergedTrajectory,
                        "trajectory left 1e3 x the Gronwall radius at step " + std::to_string(n));
        }
        traj.step_speeds.push_back(distance(next, prev) / tau);
        traj.energies.push_back(en.value());
        traj.budgets.push_back(budget);
        traj.certified_gaps.push_back(gap);
        traj.values.push_back(next);
        prev = next;
    }
    return traj;
}

/// Behaviour of the interpolants at one probe time across the tau sequence.
struct ProbeConvergence {
    double time = 0.0;
    /// ubar_{tau_k}(t) for each k.
    std::vector<Point> values;
    /// d(ubar_{tau_k}(t), ubar_{tau_{k-1}}(t)) for k >= 1.
    std::vector<double> successive_distances;
    /// successive_distances[k-1] / successive_distances[k].
    std::vector<double> distance_ratios;
    /// Value at the finest tau.
    Point limit_estimate;
    /// First-order Richardson extrapolation from the two finest runs.
    Point extrapolated;
    /// Successive distances strictly decreasing (or all zero).
    bool cauchy_like = true;
};

struct ConvergenceSummary {
    std::vector<ProbeConvergence> probes;
    /// sum_j d^2/(2 tau) over each whole trajectory.
    std::vector<double> displacement_sums;
};

struct RefinementResult {
    std::vector<Trajectory> trajectories;
    ConvergenceSummary summary;
};

inline ConvergenceSummary summarize_refinement(const std::vector<Trajectory>& trajs,
                                               const std::vector<double>& probe_times) {
    ConvergenceSummary s;
    for (const Trajectory& t : trajs) s.displacement_sums.push_back(t.displacement_sum(t.steps()));
    for (double time : probe_times) {
        ProbeConvergence pc;
        pc.time = time;
        for (const Trajectory& t : trajs) pc.values.push_back(t.eval(time));
        for (std::size_t k = 1; k < pc.values.size(); ++k) {
            pc.successive_distances.push_back(distance(pc.values[k], pc.values[k - 1]));
        }
        for (std::size_t k = 1; k < pc.successive_distances.size(); ++k) {
            const double num = pc.successive_distances[k - 1];
            const double den = pc.successive_distances[k];
            pc.distance_ratios.push_back(den > 0.0 ? num / den : std::numeric_limits<double>::infinity());
            if (!(den < num) && !(den == 0.0 && num == 0.0)) pc.cauchy_like = false;
        }
        if (!pc.values.empty()) {
            pc.limit_estimate = pc.values.back();
            pc.extrapolated = pc.values.back();
        }
        if (trajs.size() >= 2) {
            const double t1 = trajs[trajs.size() - 2].tau;
            const double t2 = trajs.back().tau;
            const Point& v1 = pc.values[pc.values.size() - 2];
            const Point& v2 = pc.values.back();
            Point ex = v2;
            for (std::size_t i = 0; i < v2.dim(); ++i) ex.set(i, v2[i] + (v2[i] - v1[i]) * t2 / (t1 - t2));
            pc.extrapolated = ex;
        }
        s.probes.push_back(std::move(pc));
    }
    return s;
}

/// Runs the scheme for each tau of a strictly decreasing list (concurrently over tau) and
/// summarizes the interpolants at the probe times.
inline RefinementResult run_refinement(const FunctionalFamily& family, const CouplingSchedule& coupling,
                                       const ErrorSchedule& errors, const RecoveryData& recovery,
                                       const std::vector<double>& tau_list, double horizon,
                                       const InnerSolverConfig& cfg, const std::vector<double>& probe_times,
                                       const StepSelector& selector = {},
                                       std::size_t jobs = detail::default_jobs()) {
    if (tau_list.empty()) throw Error(ErrorKind::InvalidArgument, "empty tau list");
    for (std::size_t i = 1; i < tau_list.size(); ++i) {
        if (!(tau_list[i] < tau_list[i - 1])) {
            throw Error(ErrorKind::InvalidArgument, "tau list must be strictly decreasing");
        }
    }
    RefinementResult out;
    out.trajectories.resize(tau_list.size());
    detail::parallel_for(tau_list.size(), jobs, [&](std::size_t k) {
        out.trajectories[k] = run_single(family, coupling, errors, recovery, tau_list[k], horizon, cfg, selector);
    });
    out.summary = summarize_refinement(out.trajectories, probe_times);
    return out;
}

/// Violation counts of the discrete a-priori estimates for one trajectory.
struct InvariantReport {
    std::size_t energy_monotonicity = 0;
    std::size_t displacement_estimate = 0;
    std::size_t gronwall_containment = 0;
    std::size_t interpolant_consistency = 0;
    double gronwall_constant = std::numeric_limits<double>::quiet_NaN();
    double max_observed_d2 = 0.0;

    std::size_t total() const {
        return energy_monotonicity + displacement_estimate + gronwall_containment + interpolant_consistency;
    }
};

/// Checks energy quasi-monotonicity (exact), the displacement-sum estimate, Gronwall
/// containment and interpolant consistency on `pairs` random (s, t) pairs.
inline InvariantReport check_invariants(const Trajectory& traj, const FunctionalFamily& family,
                                        const CouplingSchedule& coupling, const ErrorSchedule& errors,
                                        const RecoveryData& recovery, std::size_t pairs = 200,
                                        std::uint64_t seed = 1) {
    InvariantReport rep;
    double prev_energy = traj.initial_energy;
    double displacement = 0.0;
    double budget_sum = 0.0;
    double magnitude = std::abs(traj.initial_energy);
    for (std::size_t n = 1; n <= traj.steps(); ++n) {
        const double en = traj.energies[n - 1];
        if (!(en <= prev_energy + traj.budgets[n - 1])) ++rep.energy_monotonicity;
        const double sp = traj.step_speeds[n - 1];
        displacement += 0.5 * sp * sp * traj.tau;
        budget_sum += traj.budgets[n - 1];
        magnitude += std::abs(en) + displacement;
        const double slack = 64.0 * std::numeric_limits<double>::epsilon() * magnitude;
        if (displacement > traj.initial_energy - en + budget_sum + slack) ++rep.displacement_estimate;
        prev_energy = en;
    }

    const Point& u_star = family.certificate.u_star;
    rep.max_observed_d2 = distance_squared(traj.initial, u_star);
    for (const Point& p : traj.values) rep.max_observed_d2 = std::max(rep.max_observed_d2, distance_squared(p, u_star));
    try {
        rep.gronwall_constant = gronwall_bound(family, coupling, errors, recovery, traj.tau, traj.horizon);
        for (const Point& p : traj.values) {
            if (distance_squared(p, u_star) > rep.gronwall_constant) ++rep.gronwall_containment;
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::TauTooLarge) throw;
    }

    // Prefix sums of the step speeds give the integral of |U'| over whole steps.
    std::vector<double> prefix(traj.steps() + 1, 0.0);
    for (std::size_t j = 0; j < traj.steps(); ++j) prefix[j + 1] = prefix[j] + traj.step_speeds[j] * traj.tau;
    const double t_end = static_cast<double>(traj.steps()) * traj.tau;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, t_end);
    for (std::size_t k = 0; k < pairs; ++k) {
        double s = dist(rng), t = dist(rng);
        if (s > t) std::swap(s, t);
        const std::size_t ns = traj.step_index(s);
        const std::size_t nt = traj.step_index(t);
        const double lhs = distance(traj.at_step(ns), traj.at_step(nt));
        // Integral of |U'| over [s, t + tau] dominates the whole steps ns+1..nt.
        const double upper = std::min(t + traj.tau, t_end);
        const std::size_t hi_step = traj.step_index(upper);
        const double rhs = prefix[hi_step] - prefix[std::min(ns, hi_step)];
        if (lhs > rhs * (1.0 + 1e-12) + 1e-300) ++rep.interpolant_consistency;
    }
    return rep;
}

}  // namespace mmflow
