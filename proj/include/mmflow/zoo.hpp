#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmflow/core.hpp"
#include "mmflow/prox.hpp"
#include "mmflow/scheme.hpp"

namespace mmflow {

/// Initial data rule: (tau, eps(tau), u0) -> u_tau^0.
using RecoveryMap = std::function<Point(double, double, const Point&)>;

/// A named family with its parameters and expected-behaviour annotations.
struct FamilySpec {
    std::string name;
    std::map<std::string, double> parameters;
    std::map<std::string, std::string> options;
    FunctionalFamily family;
    /// (coupling description, qualitative outcome).
    std::vector<std::pair<std::string, std::string>> expected;
    /// Explicit recovery map; absent means u_tau^0 = u0.
    std::optional<RecoveryMap> recovery_map;
    /// Local minimizer of the member at eps nearest to x (used to build probe sequences).
    std::optional<std::function<Point(double, const Point&)>> local_minimizer_near;

    RecoveryData recovery(const CouplingSchedule& coupling, const Point& u0) const {
        if (!recovery_map) return RecoveryData::constant(u0);
        RecoveryMap map = *recovery_map;
        return {[map, coupling, u0](double tau) { return map(tau, coupling(tau), u0); }, u0};
    }
};

/// 1-D base functional with its certificate and analytic data.
struct BaseFunctional {
    std::string name;
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    CoercivityCertificate certificate;
    /// Exact flow x0 -> x(t), when known.
    std::optional<std::function<double(double, double)>> flow;
};

inline BaseFunctional half_square_base() {
    return {"half_square", [](double x) { return 0.5 * x * x; }, [](double x) { return x; },
            CoercivityCertificate{0.0, 0.0, Point{0.0}},
            [](double x0, double t) { return x0 * std::exp(-t); }};
}

inline BaseFunctional square_base() {
    return {"square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; },
            CoercivityCertificate{0.0, 0.0, Point{0.0}},
            [](double x0, double t) { return x0 * std::exp(-2.0 * t); }};
}

namespace detail {

inline Functional smooth_1d(std::function<double(double)> value, std::function<double(double)> derivative) {
    Functional f;
    f.evaluate = [value](const Point& p) { return ExtReal(value(p.x())); };
    f.analytic_derivative = [derivative](const Point& p) { return Point{derivative(p.x())}; };
    return f;
}

inline FunctionalFamily family_from_base(const BaseFunctional& base) {
    FunctionalFamily fam;
    fam.limit = smooth_1d(base.value, base.derivative);
    fam.certificate = base.certificate;
    auto d = base.derivative;
    fam.limit_slope = [d](const Point& p) { return std::abs(d(p.x())); };
    if (base.flow) {
        auto fl = *base.flow;
        fam.exact_flow = [fl](const Point& x0, double t) { return Point{fl(x0.x(), t)}; };
    }
    return fam;
}

/// Golden-section minimizer of a 1-D function on [a, b].
inline double golden_argmin(const std::function<double(double)>& g, double a, double b, int iterations = 200) {
    const Point templ{0.0};
    auto c = golden_1d([&](double x) { return g(x); }, a, b, static_cast<std::size_t>(iterations), templ, 0);
    return c.x.x();
}

}  // namespace detail

/// psi = x^2/2 with Y_tau psi(u) = u^2/(2(1+tau)), prox u/(1+tau), flow u0 e^{-t}.
inline FamilySpec quadratic_reference() {
    const BaseFunctional base = half_square_base();
    FamilySpec spec;
    spec.name = "quadratic";
    spec.family = detail::family_from_base(base);
    const Functional limit = spec.family.limit;
    spec.family.member = [limit](double) { return limit; };
    spec.expected = {{"any eps(tau)", "relaxed scheme converges to u0 e^{-t}"}};
    return spec;
}

inline double quadratic_prox_value(double tau, double u) { return u * u / (2.0 * (1.0 + tau)); }
inline double quadratic_prox_point(double tau, double u) { return u / (1.0 + tau); }

/// Nonnegative amplitude a(x) with derivative and sup bound.
struct Amplitude {
    std::string name;
    std::function<double(double)> value;
    std::function<double(double)> derivative;
};

inline Amplitude constant_amplitude(double a0) {
    return {"constant", [a0](double) { return a0; }, [](double) { return 0.0; }};
}

/// a(x) = a0 + a1 x^2/(1+x^2): bounded and Lipschitz.
inline Amplitude saturating_amplitude(double a0, double a1) {
    return {"saturating", [a0, a1](double x) { return a0 + a1 * x * x / (1.0 + x * x); },
            [a1](double x) {
                const double q = 1.0 + x * x;
                return a1 * 2.0 * x / (q * q);
            }};
}

/// f_eps(x) = x^2 + rho(eps) a(x) cos^2(x/eps), limit x^2.
///
/// The member's minorant is x^2, touched at the zeros of cos(x/eps). With a vanishing
/// rho the initial data is kept fixed; otherwise it is snapped to the nearest zero so that
/// f_eps(u_tau^0) -> x^2(u0).
inline FamilySpec oscillatory_family(const Amplitude& a, std::function<double(double)> rho,
                                     bool rho_vanishes = true) {
    FamilySpec spec;
    spec.name = "oscillatory";
    spec.family = detail::family_from_base(square_base());
    auto av = a.value;
    auto ad = a.derivative;
    spec.family.member = [av, ad, rho](double eps) {
        const double r = rho(eps);
        Functional f;
        f.evaluate = [av, r, eps](const Point& p) {
            const double x = p.x();
            const double c = std::cos(x / eps);
            return ExtReal(x * x + r * av(x) * c * c);
        };
        f.analytic_derivative = [av, ad, r, eps](const Point& p) {
            const double x = p.x();
            const double c = std::cos(x / eps);
            return Point{2.0 * x + r * (ad(x) * c * c - av(x) / eps * std::sin(2.0 * x / eps))};
        };
        ContactMinorant m;
        m.lower = [](const Point& p) { return ExtReal(p.x() * p.x()); };
        m.lower_derivative = [](const Point& p) { return Point{2.0 * p.x()}; };
        m.contacts_near = [eps](const Point& p) {
            const double period = std::numbers::pi * eps;
            const double k = std::floor(p.x() / period - 0.5);
            return std::vector<Point>{Point{(k + 0.5) * period}, Point{(k + 1.5) * period}};
        };
        f.minorant = std::move(m);
        f.feature_scale = eps;
        return f;
    };
    if (!rho_vanishes) {
        spec.recovery_map = [](double, double eps, const Point& u0) {
            const double period = std::numbers::pi * eps;
            return Point{(std::round(u0.x() / period - 0.5) + 0.5) * period};
        };
    }
    spec.local_minimizer_near = [member = spec.family.member](double eps, const Point& x) {
        const Functional f = member(eps);
        const double period = std::numbers::pi * eps;
        const double zero = (std::round(x.x() / period - 0.5) + 0.5) * period;
        auto g = [&f](double y) { return f(Point{y}).value(); };
        return Point{detail::golden_argmin(g, zero - 0.5 * period, zero + 0.5 * period)};
    };
    spec.expected = {{"eps(tau)/tau -> 0", "converges to the x^2 flow u0 e^{-2t}"},
                     {"eps(tau) >> tau with rho_eps >> eps", "pinning: limit curve constant"}};
    return spec;
}

/// Perturbation zeta_eps with a shared coercivity certificate.
struct Perturbation {
    std::string name;
    std::function<double(double, double)> value;       // (eps, x)
    std::function<double(double, double)> derivative;  // (eps, x)
    CoercivityCertificate certificate;
    /// Oscillation length at eps, when zeta oscillates.
    std::optional<std::function<double(double)>> feature_scale;
};

inline Perturbation zero_perturbation() {
    return {"zero", [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
            CoercivityCertificate{0.0, 0.0, Point{0.0}}, std::nullopt};
}

/// zeta_eps(x) = sin(x / sqrt(eps)).
inline Perturbation sin_sqrt_perturbation() {
    return {"sin_sqrt", [](double eps, double x) { return std::sin(x / std::sqrt(eps)); },
            [](double eps, double x) { return std::cos(x / std::sqrt(eps)) / std::sqrt(eps); },
            CoercivityCertificate{1.0, 0.0, Point{0.0}},
            std::function<double(double)>([](double eps) { return 2.0 * std::sqrt(eps); })};
}

/// zeta_eps(x) = sin(x).
inline Perturbation sin_perturbation() {
    return {"sin", [](double, double x) { return std::sin(x); }, [](double, double x) { return std::cos(x); },
            CoercivityCertificate{1.0, 0.0, Point{0.0}}, std::nullopt};
}

/// zeta_eps(x) = sin(x + eps), converging locally uniformly to sin.
inline Perturbation sin_shift_perturbation() {
    return {"sin_shift", [](double eps, double x) { return std::sin(x + eps); },
            [](double eps, double x) { return std::cos(x + eps); },
            CoercivityCertificate{1.0, 0.0, Point{0.0}}, std::nullopt};
}

/// phi_eps = base + eps zeta_eps for eps in (0, eps_max]; limit = base.
inline FamilySpec perturbation_family(const BaseFunctional& base, const Perturbation& zeta,
                                      double eps_max = 1.0, std::uint64_t seed = 7) {
    FamilySpec spec;
    spec.name = "perturbation";
    spec.parameters["eps_max"] = eps_max;
    spec.options["base"] = base.name;
    spec.options["zeta"] = zeta.name;
    spec.family = detail::family_from_base(base);

    const CoercivityCertificate& cb = base.certificate;
    const CoercivityCertificate& cz = zeta.certificate;
    const double shift = distance_squared(cb.u_star, cz.u_star);
    spec.family.certificate = {cb.A + eps_max * (cz.A + 2.0 * cz.B * shift), cb.B + 2.0 * eps_max * cz.B, cb.u_star};

    auto bv = base.value;
    auto bd = base.derivative;
    auto zv = zeta.value;
    auto zd = zeta.derivative;
    auto zs = zeta.feature_scale;
    spec.family.member = [bv, bd, zv, zd, zs](double eps) {
        Functional f;
        f.evaluate = [bv, zv, eps](const Point& p) { return ExtReal(bv(p.x()) + eps * zv(eps, p.x())); };
        f.analytic_derivative = [bd, zd, eps](const Point& p) {
            return Point{bd(p.x()) + eps * zd(eps, p.x())};
        };
        if (zs) f.feature_scale = (*zs)(eps);
        return f;
    };

    // Spot-check the shared certificate on samples of [-10, 10] for a few eps.
    const auto samples = sample_box(Box::symmetric(1, 10.0), 1000, seed);
    for (double eps : {eps_max, 0.1 * eps_max, 1e-3 * eps_max}) {
        const Functional m = spec.family.member(eps);
        if (coercivity_violations(m, spec.family.certificate, samples) != 0) {
            throw Error(ErrorKind::CoercivityViolation,
                        "perturbation member violates the shared coercivity certificate");
        }
        for (const Point& p : samples) {
            if (!std::isfinite(zv(eps, p.x()))) {
                throw Error(ErrorKind::CoercivityViolation, "perturbation is not locally bounded");
            }
        }
    }
    spec.expected = {{"eps(tau)/tau -> 0", "converges to the base flow"},
                     {"eps(tau)/tau <= C", "converges to the base flow (finite-dimensional case)"}};
    return spec;
}

/// psi(x) = x^2 + [x == 0], not lower semicontinuous; its envelope psi_sc(x) = x^2.
/// Recovery for u0 = 0 uses u_tau^0 = tau so that psi(u_tau^0) -> psi_sc(0).
inline FamilySpec lsc_envelope_pair() {
    FamilySpec spec;
    spec.name = "lsc_envelope";
    spec.family = detail::family_from_base(square_base());
    Functional psi;
    psi.evaluate = [](const Point& p) {
        const double x = p.x();
        return ExtReal(x == 0.0 ? x * x + 1.0 : x * x);
    };
    psi.analytic_derivative = [](const Point& p) { return Point{2.0 * p.x()}; };
    ContactMinorant m;
    m.lower = [](const Point& p) { return ExtReal(p.x() * p.x()); };
    m.lower_derivative = [](const Point& p) { return Point{2.0 * p.x()}; };
    m.contacts_near = [](const Point& p) {
        if (p.x() != 0.0) return std::vector<Point>{p};
        const double tiny = std::numeric_limits<double>::denorm_min();
        return std::vector<Point>{Point{-tiny}, Point{tiny}};
    };
    psi.minorant = std::move(m);
    spec.family.member = [psi](double) { return psi; };
    spec.recovery_map = [](double tau, double, const Point& u0) {
        return u0.x() == 0.0 ? Point{tau} : u0;
    };
    spec.expected = {{"any eps(tau)", "follows the flow of the envelope x^2"}};
    return spec;
}

/// phi_eps = base + indicator of W_eps = {k h(eps)} within [-r(eps), r(eps)].
inline FamilySpec grid_restricted_family(const BaseFunctional& base, std::function<double(double)> spacing,
                                         std::function<double(double)> box_radius) {
    FamilySpec spec;
    spec.name = "grid_restricted";
    spec.options["base"] = base.name;
    spec.family = detail::family_from_base(base);
    auto bv = base.value;
    auto bd = base.derivative;
    spec.family.member = [bv, bd, spacing, box_radius](double eps) {
        const double h = spacing(eps);
        const double r = box_radius(eps);
        Functional f;
        f.evaluate = [bv, h, r](const Point& p) {
            const double x = p.x();
            if (std::abs(x) > r) return ExtReal::infinity();
            const double k = std::nearbyint(x / h);
            if (x != k * h) return ExtReal::infinity();
            return ExtReal(bv(x));
        };
        f.analytic_derivative = [bd](const Point& p) { return Point{bd(p.x())}; };
        f.domain_hint = Box::symmetric(1, r);
        ContactMinorant m;
        m.lower = [bv](const Point& p) { return ExtReal(bv(p.x())); };
        m.lower_derivative = [bd](const Point& p) { return Point{bd(p.x())}; };
        m.contacts_near = [h, r](const Point& p) {
            const double k = std::floor(p.x() / h);
            std::vector<Point> out;
            for (double kk : {k, k + 1.0}) {
                const double x = kk * h;
                if (std::abs(x) <= r) out.push_back(Point{x});
            }
            return out;
        };
        f.minorant = std::move(m);
        f.feature_scale = h;
        return f;
    };
    spec.recovery_map = [spacing](double, double eps, const Point& u0) {
        const double h = spacing(eps);
        return Point{std::nearbyint(u0.x() / h) * h};
    };
    spec.expected = {{"spacing(eps(tau))/tau^{3/2} -> 0", "converges to the base flow"},
                     {"otherwise", "no guarantee; inspect crucial_assumption_probe"}};
    return spec;
}

/// u^1 = tau, u^n = n tau/(1+tau)^{n-1}: each step is within tau of Y_tau psi(u^{n-1}) for
/// psi = x^2/2 and u^0 = 0, yet the limit t e^{-t} is not the gradient flow.
inline double counterexample_value(double tau, std::size_t n) {
    if (n == 0) return 0.0;
    return static_cast<double>(n) * tau / std::pow(1.0 + tau, static_cast<double>(n - 1));
}

inline StepSelector counterexample_selector(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::TauOutOfRange, "counterexample needs 0 < tau < 1");
    return [tau](const StepContext& ctx) {
        if (ctx.tau != tau) throw Error(ErrorKind::InvalidArgument, "selector built for another tau");
        return Point{counterexample_value(tau, ctx.n)};
    };
}

/// Selector that reads tau from the context, for refinement runs over many tau.
inline StepSelector counterexample_selector_any_tau() {
    return [](const StepContext& ctx) {
        if (!(ctx.tau > 0.0 && ctx.tau < 1.0)) {
            throw Error(ErrorKind::TauOutOfRange, "counterexample needs 0 < tau < 1");
        }
        return Point{counterexample_value(ctx.tau, ctx.n)};
    };
}

}  // namespace mmflow
