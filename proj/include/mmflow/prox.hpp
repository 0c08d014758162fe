#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "mmflow/core.hpp"

namespace mmflow {

/// Tuning for the inner global minimization of v -> f(v) + d(v,u)^2/(2 tau).
struct InnerSolverConfig {
    /// Nodes of the coarse grid over the search ball (per axis count is derived for d > 1).
    std::size_t coarse_grid_points = 4096;
    /// Golden-section iterations per refined bracket.
    std::size_t refine_iterations = 60;
    /// Coordinate-wise golden sweeps for d > 1.
    std::size_t sweeps = 8;
    /// Required grid resolution for oscillatory f; overrides Functional::feature_scale / 4.
    std::optional<double> min_feature_scale;
    /// Number of best local-minimum brackets refined by golden section.
    std::size_t refine_brackets = 4;
    /// Evaluation cap of the branch-and-bound lower-bound stage.
    std::size_t max_bound_evaluations = 200000;
    /// Absolute gap targeted by moreau_yosida when no budget is given.
    double gap_tolerance = 1e-13;
    /// Multiplier on the sampled curvature used by the Hermite lower bounds.
    double curvature_safety = 2.0;
};

/// Approximate Moreau-Yosida value with its certificate.
struct ProxResult {
    Point minimizer;
    /// f(minimizer) + d(minimizer,u)^2/(2 tau), an upper bound of Y_tau f(u).
    double value = 0.0;
    /// Upper bound on value - Y_tau f(u).
    double certified_gap = 0.0;
};

enum class VerdictKind { Holds, Fails, Uncertain };

struct InequalityVerdict {
    VerdictKind kind = VerdictKind::Uncertain;
    /// Left side f(v) + d(v,u_prev)^2/(2 tau).
    double lhs = 0.0;
    /// Indeterminacy width (the oracle's certified gap) when uncertain.
    double gap = 0.0;
};

inline const char* to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::Holds: return "holds";
        case VerdictKind::Fails: return "fails";
        case VerdictKind::Uncertain: return "uncertain";
    }
    return "?";
}

namespace detail {

inline double fp_floor(double a, double b) {
    return 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(a) + std::abs(b));
}

struct Candidate {
    Point x;
    double value = std::numeric_limits<double>::infinity();

    /// Strictly better value, or equal value with lexicographically smaller point.
    bool improves_on(const Candidate& other) const {
        if (value < other.value) return true;
        return value == other.value && lex_less(x, other.x);
    }
};

/// v -> g(v) + d(v,u)^2/(2 tau) for g = f or its minorant.
class ProxObjective {
public:
    ProxObjective(const EvalFn& g, const std::optional<GradFn>& dg, const Point& u, double tau)
        : g_(g), dg_(dg), u_(u), tau_(tau) {}

    double operator()(const Point& v) const {
        const ExtReal gv = g_(v);
        if (!gv.is_finite()) return std::numeric_limits<double>::infinity();
        return gv.value() + distance_squared(v, u_) / (2.0 * tau_);
    }

    double at(double x) const {
        Point p = u_;
        p.set(0, x);
        return (*this)(p);
    }

    bool has_derivative() const { return dg_.has_value(); }

    /// d/dx in 1-D.
    double slope(double x) const {
        Point p = u_;
        p.set(0, x);
        return (*dg_)(p)[0] + (x - u_[0]) / tau_;
    }

    Point gradient(const Point& v) const {
        Point g = (*dg_)(v);
        for (std::size_t i = 0; i < v.dim(); ++i) g.set(i, g[i] + (v[i] - u_[i]) / tau_);
        return g;
    }

    const Point& center() const { return u_; }
    double tau() const { return tau_; }

private:
    const EvalFn& g_;
    const std::optional<GradFn>& dg_;
    Point u_;
    double tau_;
};

struct RouteOutcome {
    Candidate best;
    /// Lower bound of the objective on the searched region; -inf when not certifiable.
    double lower_bound = -std::numeric_limits<double>::infinity();
};

/// Golden-section search of a scalar function on [a, b].
template <typename F>
Candidate golden_1d(const F& fn, double a, double b, std::size_t iterations, const Point& templ,
                    std::size_t axis) {
    constexpr double inv_phi = 0.6180339887498949;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c);
    double fd = fn(d);
    for (std::size_t it = 0; it < iterations && b - a > 0.0; ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    Candidate out;
    out.x = templ;
    if (fc <= fd) {
        out.x.set(axis, c);
        out.value = fc;
    } else {
        out.x.set(axis, d);
        out.value = fd;
    }
    return out;
}

/// Hermite lower bound on [a, b] given endpoint values, slopes and |F''| <= M.
inline double hermite_cell_bound(double w, double fa, double fb, double sa, double sb, double M) {
    const double q = M * w * w / 8.0;
    const double left = std::min(fa, fa + sa * w / 2.0 - q);
    const double right = std::min(fb, fb - sb * w / 2.0 - q);
    return std::min(left, right);
}

/// 1-D route: coarse grid, golden refinement of the best brackets, then branch-and-bound on
/// Hermite cell bounds until the gap to the incumbent is at most `target`.
inline RouteOutcome grid_route_1d(const ProxObjective& F, double lo, double hi,
                                  const InnerSolverConfig& cfg, double target, Candidate seed) {
    RouteOutcome out;
    out.best = std::move(seed);
    const Point& templ = F.center();
    auto consider = [&](double x, double v) {
        Candidate c{templ, v};
        c.x.set(0, x);
        if (c.improves_on(out.best)) out.best = c;
    };

    const std::size_t n = std::max<std::size_t>(cfg.coarse_grid_points, 3);
    if (!(hi > lo)) {
        consider(lo, F.at(lo));
        out.lower_bound = out.best.value;
        return out;
    }
    const double h = (hi - lo) / static_cast<double>(n - 1);
    std::vector<double> xs(n), fs(n);
    bool all_finite = true;
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = (i + 1 == n) ? hi : lo + static_cast<double>(i) * h;
        fs[i] = F.at(xs[i]);
        all_finite = all_finite && std::isfinite(fs[i]);
        consider(xs[i], fs[i]);
    }

    // Golden refinement around the best discrete local minima.
    std::vector<std::size_t> minima;
    for (std::size_t i = 0; i < n; ++i) {
        const bool left_ok = i == 0 || fs[i] <= fs[i - 1];
        const bool right_ok = i + 1 == n || fs[i] <= fs[i + 1];
        if (left_ok && right_ok && std::isfinite(fs[i])) minima.push_back(i);
    }
    std::stable_sort(minima.begin(), minima.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    if (minima.size() > cfg.refine_brackets) minima.resize(cfg.refine_brackets);
    for (std::size_t i : minima) {
        const double a = xs[i == 0 ? 0 : i - 1];
        const double b = xs[i + 1 == n ? n - 1 : i + 1];
        Candidate c = golden_1d([&](double x) { return F.at(x); }, a, b, cfg.refine_iterations, templ, 0);
        if (c.improves_on(out.best)) out.best = c;
    }

    if (!all_finite) return out;

    // Slopes: analytic when available, otherwise finite differences of the grid values.
    const bool analytic = F.has_derivative();
    auto slope_at = [&](double x, double width) {
        if (analytic) return F.slope(x);
        const double dx = width / 8.0;
        return (F.at(x + dx) - F.at(x - dx)) / (2.0 * dx);
    };
    std::vector<double> ss(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (analytic) {
            ss[i] = F.slope(xs[i]);
        } else if (i == 0) {
            ss[i] = (fs[1] - fs[0]) / h;
        } else if (i + 1 == n) {
            ss[i] = (fs[n - 1] - fs[n - 2]) / h;
        } else {
            ss[i] = (fs[i + 1] - fs[i - 1]) / (2.0 * h);
        }
    }
    double curvature = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        curvature = std::max(curvature, std::abs(ss[i + 1] - ss[i]) / (xs[i + 1] - xs[i]));
    }
    double M = cfg.curvature_safety * curvature;

    struct Cell {
        double a, b, fa, fb, sa, sb, lb;
    };
    auto bound = [&](Cell& c) { c.lb = hermite_cell_bound(c.b - c.a, c.fa, c.fb, c.sa, c.sb, M); };
    auto cmp = [](const Cell& l, const Cell& r) { return l.lb > r.lb; };
    std::vector<Cell> cells;
    cells.reserve(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        Cell c{xs[i], xs[i + 1], fs[i], fs[i + 1], ss[i], ss[i + 1], 0.0};
        bound(c);
        cells.push_back(c);
    }
    std::priority_queue<Cell, std::vector<Cell>, decltype(cmp)> heap(cmp, std::move(cells));

    std::size_t evals = 0;
    std::vector<Cell> frozen;  // cells too narrow to split
    while (!heap.empty() && heap.top().lb < out.best.value - target &&
           evals < cfg.max_bound_evaluations) {
        Cell c = heap.top();
        heap.pop();
        const double w = c.b - c.a;
        const double m = c.a + 0.5 * w;
        if (!(m > c.a && m < c.b) || w <= 1e-15 * (1.0 + std::abs(m))) {
            frozen.push_back(c);
            continue;
        }
        const double fm = F.at(m);
        const double sm = slope_at(m, w);
        evals += analytic ? 1 : 3;
        if (!std::isfinite(fm)) {
            // Lost smoothness inside the cell; keep the parent bound.
            frozen.push_back(c);
            continue;
        }
        consider(m, fm);
        const double local = cfg.curvature_safety *
                             std::max(std::abs(sm - c.sa), std::abs(c.sb - sm)) / (0.5 * w);
        Cell left{c.a, m, c.fa, fm, c.sa, sm, 0.0};
        Cell right{m, c.b, fm, c.fb, sm, c.sb, 0.0};
        if (local > M) {
            // Sampled curvature grew: rebound every cell with the larger constant.
            M = local;
            std::vector<Cell> all{left, right};
            while (!heap.empty()) {
                all.push_back(heap.top());
                heap.pop();
            }
            for (Cell& x : frozen) all.push_back(x);
            frozen.clear();
            for (Cell& x : all) {
                bound(x);
                heap.push(x);
            }
            continue;
        }
        bound(left);
        bound(right);
        heap.push(left);
        heap.push(right);
    }
    double lb = out.best.value;
    if (!heap.empty()) lb = std::min(lb, heap.top().lb);
    for (const Cell& c : frozen) lb = std::min(lb, c.lb);
    out.lower_bound = lb;
    return out;
}

/// d > 1 route: tensor grid, coordinate-wise golden sweeps, Lipschitz-type bound.
inline RouteOutcome grid_route_nd(const ProxObjective& F, const Box& box, const InnerSolverConfig& cfg,
                                  Candidate seed) {
    RouteOutcome out;
    out.best = std::move(seed);
    const std::size_t d = box.lo.dim();
    const auto per_axis = std::max<std::size_t>(
        3, static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(cfg.coarse_grid_points),
                                                        1.0 / static_cast<double>(d)))));
    std::vector<double> h(d);
    for (std::size_t i = 0; i < d; ++i) h[i] = (box.hi[i] - box.lo[i]) / static_cast<double>(per_axis - 1);

    std::size_t total = 1;
    for (std::size_t i = 0; i < d; ++i) total *= per_axis;
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> vals(total);
    double max_step_change = 0.0;
    bool all_finite = true;
    Point p = box.lo;
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        for (std::size_t i = d; i-- > 0;) {
            idx[i] = rem % per_axis;
            rem /= per_axis;
            p.set(i, idx[i] + 1 == per_axis ? box.hi[i] : box.lo[i] + static_cast<double>(idx[i]) * h[i]);
        }
        vals[k] = F(p);
        all_finite = all_finite && std::isfinite(vals[k]);
        Candidate c{p, vals[k]};
        if (c.improves_on(out.best)) out.best = c;
        // Neighbor along the last axis has index k - 1 when idx[d-1] > 0; track the largest
        // grid difference as a Lipschitz proxy when no gradient is available.
        if (idx[d - 1] > 0 && std::isfinite(vals[k]) && std::isfinite(vals[k - 1])) {
            max_step_change = std::max(max_step_change, std::abs(vals[k] - vals[k - 1]) / h[d - 1]);
        }
    }

    double node_min = out.best.value;
    for (std::size_t s = 0; s < cfg.sweeps; ++s) {
        for (std::size_t i = 0; i < d; ++i) {
            Point base = out.best.x;
            const double a = std::max(box.lo[i], base[i] - h[i]);
            const double b = std::min(box.hi[i], base[i] + h[i]);
            auto along = [&](double t) {
                Point q = base;
                q.set(i, t);
                return F(q);
            };
            Candidate c = golden_1d(along, a, b, cfg.refine_iterations, base, i);
            if (c.improves_on(out.best)) out.best = c;
        }
    }
    if (!all_finite) return out;

    double lip = max_step_change;
    if (F.has_derivative()) {
        lip = 0.0;
        Point q = box.lo;
        for (std::size_t k = 0; k < total; ++k) {
            std::size_t rem = k;
            for (std::size_t i = d; i-- > 0;) {
                const std::size_t j = rem % per_axis;
                rem /= per_axis;
                q.set(i, j + 1 == per_axis ? box.hi[i] : box.lo[i] + static_cast<double>(j) * h[i]);
            }
            const Point g = F.gradient(q);
            double norm = 0.0;
            for (std::size_t i = 0; i < d; ++i) norm += g[i] * g[i];
            lip = std::max(lip, std::sqrt(norm));
        }
    }
    double diag = 0.0;
    for (double hi : h) diag += hi * hi;
    out.lower_bound = std::min(out.best.value, node_min - cfg.curvature_safety * lip * std::sqrt(diag) / 2.0);
    return out;
}

inline double effective_feature_scale(const Functional& f, const InnerSolverConfig& cfg) {
    if (cfg.min_feature_scale) return *cfg.min_feature_scale;
    if (f.feature_scale) return *f.feature_scale / 4.0;
    return std::numeric_limits<double>::infinity();
}

/// Search box: the certified ball around u clipped to the domain hint.
inline Box search_box(const Functional& f, const Point& u, double radius) {
    const Box dom = f.domain_or_default(u.dim());
    Point lo(u.dim()), hi(u.dim());
    for (std::size_t i = 0; i < u.dim(); ++i) {
        lo.set(i, std::max(dom.lo[i], u[i] - radius));
        hi.set(i, std::min(dom.hi[i], u[i] + radius));
        if (lo[i] > hi[i]) lo.set(i, hi[i]);
    }
    return {lo, hi};
}

inline RouteOutcome run_grid(const ProxObjective& F, const Box& box, const InnerSolverConfig& cfg,
                             double target, Candidate seed) {
    if (box.lo.dim() == 1) return grid_route_1d(F, box.lo[0], box.hi[0], cfg, target, std::move(seed));
    return grid_route_nd(F, box, cfg, std::move(seed));
}

/// Core solver shared by moreau_yosida and relaxed_step. `target` is the gap at which
/// the search may stop early.
inline ProxResult solve_prox(const Functional& f, const CoercivityCertificate& cert, double tau,
                             const Point& u, const InnerSolverConfig& cfg, double target) {
    const double radius = prox_search_radius(f, cert, tau, u);
    const double fu = f(u).value();
    const Box box = search_box(f, u, radius);

    Candidate best{u, fu};
    double lower = -std::numeric_limits<double>::infinity();
    const ProxObjective objective(f.evaluate, f.analytic_derivative, u, tau);

    if (f.minorant) {
        const ContactMinorant& m = *f.minorant;
        const ProxObjective lower_obj(m.lower, m.lower_derivative, u, tau);
        RouteOutcome lo_route = run_grid(lower_obj, box, cfg, 0.5 * target,
                                         Candidate{u, lower_obj(u)});
        lower = lo_route.lower_bound;
        for (const Point& c : m.contacts_near(lo_route.best.x)) {
            if (!box.contains(c)) continue;
            Candidate cand{c, objective(c)};
            if (cand.improves_on(best)) best = cand;
        }
        if (best.value - lower <= target) {
            return {best.x, best.value, best.value - lower + fp_floor(best.value, fu)};
        }
    }

    double spacing = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) spacing = std::max(spacing, box.hi[i] - box.lo[i]);
    const std::size_t per_axis =
        u.dim() == 1 ? std::max<std::size_t>(cfg.coarse_grid_points, 3)
                     : std::max<std::size_t>(3, static_cast<std::size_t>(std::floor(std::pow(
                                                    static_cast<double>(cfg.coarse_grid_points),
                                                    1.0 / static_cast<double>(u.dim())))));
    spacing /= static_cast<double>(per_axis - 1);
    const bool resolvable = spacing <= effective_feature_scale(f, cfg);
    if (resolvable) {
        RouteOutcome g = run_grid(objective, box, cfg, target, best);
        if (g.best.improves_on(best)) best = g.best;
        lower = std::max(lower, g.lower_bound);
    } else if (!f.minorant) {
        throw Error(ErrorKind::GridTooCoarse,
                    "coarse grid spacing " + std::to_string(spacing) +
                        " exceeds the minimum feature scale; enlarge coarse_grid_points");
    }
    lower = std::min(lower, best.value);
    const double gap = std::isfinite(lower) ? best.value - lower + fp_floor(best.value, fu)
                                            : std::numeric_limits<double>::infinity();
    return {best.x, best.value, gap};
}

}  // namespace detail

/// Approximate Y_tau f(u) = inf_v f(v) + d(v,u)^2/(2 tau) with a certified gap.
inline ProxResult moreau_yosida(const Functional& f, const CoercivityCertificate& cert, double tau,
                                const Point& u, const InnerSolverConfig& cfg = {}) {
    return detail::solve_prox(f, cert, tau, u, cfg, cfg.gap_tolerance);
}

/// Relaxed step: a point v with f(v) + d(v,u_prev)^2/(2 tau) <= Y_tau f(u_prev) + budget,
/// certified through the solver's lower bound. Returns the full prox result.
inline ProxResult relaxed_step_result(const Functional& f, const CoercivityCertificate& cert, double tau,
                                      const Point& u_prev, double error_budget,
                                      const InnerSolverConfig& cfg = {}) {
    if (!(error_budget > 0.0)) throw Error(ErrorKind::InvalidArgument, "error budget must be positive");
    ProxResult r = detail::solve_prox(f, cert, tau, u_prev, cfg, 0.5 * error_budget);
    if (!(r.certified_gap <= error_budget)) {
        throw Error(ErrorKind::BudgetTooTight,
                    "certified gap " + std::to_string(r.certified_gap) + " exceeds budget " +
                        std::to_string(error_budget));
    }
    return r;
}

inline Point relaxed_step(const Functional& f, const CoercivityCertificate& cert, double tau,
                          const Point& u_prev, double error_budget, const InnerSolverConfig& cfg = {}) {
    return relaxed_step_result(f, cert, tau, u_prev, error_budget, cfg).minimizer;
}

/// Checks f(v) + d(v,u_prev)^2/(2 tau) against the oracle's achieved prox value:
/// holds when lhs <= value + budget, fails when lhs > value + gap + budget.
inline InequalityVerdict check_relaxed_inequality(const Functional& f, double tau, const Point& u_prev,
                                                  const Point& v, double error_budget,
                                                  const ProxResult& oracle_result) {
    const ExtReal fu = f(u_prev);
    const ExtReal fv = f(v);
    if (!fu.is_finite() || !fv.is_finite()) {
        throw Error(ErrorKind::InfiniteValue, "inequality check needs finite f(u_prev) and f(v)");
    }
    InequalityVerdict out;
    out.lhs = fv.value() + distance_squared(v, u_prev) / (2.0 * tau);
    if (out.lhs <= oracle_result.value + error_budget) {
        out.kind = VerdictKind::Holds;
    } else if (out.lhs > oracle_result.value + oracle_result.certified_gap + error_budget) {
        out.kind = VerdictKind::Fails;
    } else {
        out.kind = VerdictKind::Uncertain;
        out.gap = oracle_result.certified_gap;
    }
    return out;
}

}  // namespace mmflow
