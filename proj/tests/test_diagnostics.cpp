#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mmflow/diagnostics.hpp"
#include "mmflow/scheme.hpp"
#include "mmflow/zoo.hpp"

using namespace mmflow;

namespace {

const FamilySpec& quad() {
    static const FamilySpec q = quadratic_reference();
    return q;
}

const FamilySpec& osc_sqrt() {
    static const FamilySpec s = oscillatory_family(constant_amplitude(1.0), [](double e) { return std::sqrt(e); });
    return s;
}

/// Composite Simpson rule on [a, b] with n (even) cells.
double simpson(const std::function<double(double)>& g, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = g(a) + g(b);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * g(a + k * h);
    return s * h / 3.0;
}

/// Dense-grid Y_tau f(u) over [u - R, u + R].
double grid_prox(const Functional& f, double tau, double u, double R, double h) {
    double best = std::numeric_limits<double>::infinity();
    for (double x = u - R; x <= u + R; x += h) {
        best = std::min(best, f(Point{x}).value() + (x - u) * (x - u) / (2.0 * tau));
    }
    return best;
}

}  // namespace

TEST(LocalSlopeTest, AnalyticFiniteDifferenceAndProbe) {
    const Functional& half = quad().family.limit;
    EXPECT_EQ(local_slope(half, Point{2.0}, SlopeMethodSpec::analytic()).local_slope, 2.0);

    const Functional& sq = osc_sqrt().family.limit;
    EXPECT_NEAR(local_slope(sq, Point{1.0}, SlopeMethodSpec::finite_difference(1e-6)).local_slope, 2.0, 1e-5);

    // Descent probe at a non-critical point approaches the analytic slope from below.
    const auto probe = SlopeMethodSpec::descent_probe({1e-2, 1e-4, 1e-6});
    EXPECT_NEAR(local_slope(sq, Point{1.0}, probe).local_slope, 2.0, 1e-5);
}

TEST(LocalSlopeTest, DescentProbeAtMinimizer) {
    const Functional& sq = osc_sqrt().family.limit;
    const double r_min = 1e-6;
    const auto probe = SlopeMethodSpec::descent_probe({1e-2, 1e-4, r_min});
    // No descent from a global minimizer.
    EXPECT_LE(local_slope(sq, Point{0.0}, probe).local_slope, 2.0 * r_min);

    Functional f2;
    f2.evaluate = [](const Point& p) { return ExtReal(p[0] * p[0] + 3.0 * p[1] * p[1]); };
    EXPECT_EQ(local_slope(f2, Point{0.0, 0.0}, probe).local_slope, 0.0);
}

TEST(LocalSlopeTest, Errors) {
    Functional f;
    f.evaluate = [](const Point& p) { return p.x() == 0.0 ? ExtReal::infinity() : ExtReal(1.0); };
    EXPECT_THROW(local_slope(f, Point{0.0}, SlopeMethodSpec::finite_difference(1e-3)), Error);
    EXPECT_THROW(local_slope(f, Point{1.0}, SlopeMethodSpec::analytic()), Error);
}

TEST(DeGiorgiTest, QuadraticClosedForm) {
    const auto c = CouplingSchedule::constant(1.0);
    const DeGiorgiRatio r = de_giorgi_ratio(quad().family, c, 0.1, Point{1.0});
    EXPECT_NEAR(r.ratio, 1.0 / 2.2, r.gap + 1e-12);
    EXPECT_NEAR(r.ratio, 0.45454545454545453, 1e-9);
}

TEST(DeGiorgiTest, RatioLawAndTail) {
    const auto c = CouplingSchedule::constant(1.0);
    double last = 0.0;
    for (double tau : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const DeGiorgiRatio r = de_giorgi_ratio(quad().family, c, tau, Point{1.0});
        const double exact = 1.0 / (2.0 * (1.0 + tau));
        EXPECT_LE(std::abs(r.ratio - exact), r.gap + 64 * std::numeric_limits<double>::epsilon() / tau);
        // Bound from the closed form: ratio >= 1/2 |psi'|^2 - tau u^2/2.
        EXPECT_GE(r.ratio + r.gap, 0.5 - 0.5 * tau);
        last = r.ratio;
    }
    EXPECT_GE(last, 0.4999);
}

TEST(DeGiorgiTest, RatioNonNegativeUpToGap) {
    const auto c = CouplingSchedule::power(1.0, 0.5);
    for (double tau : {1e-1, 1e-2, 1e-3}) {
        for (double u : {-1.0, 0.0, 0.37, 1.5}) {
            const DeGiorgiRatio r = de_giorgi_ratio(osc_sqrt().family, c, tau, Point{u});
            EXPECT_GE(r.ratio, -r.gap);
        }
    }
}

TEST(DeGiorgiTest, MinimizerRatioWithinGap) {
    const auto c = CouplingSchedule::constant(1.0);
    const DeGiorgiRatio r = de_giorgi_ratio(quad().family, c, 0.1, Point{0.0});
    EXPECT_LE(std::abs(r.ratio), r.gap + 1e-300);
}

TEST(DeGiorgiTest, OscillatoryTauSquaredMatchesBruteForce) {
    const auto c = CouplingSchedule::power(1.0, 2.0);
    const auto& spec = osc_sqrt();
    double last = 0.0;
    for (double tau : {1e-2, 1e-3, 1e-4}) {
        last = de_giorgi_ratio(spec.family, c, tau, Point{1.0}).ratio;
    }
    EXPECT_GE(last, 1.8);

    // Brute force at tau = 1e-2 (eps = 1e-4): dense grid over the search ball.
    const double tau = 1e-2, eps = c(tau);
    const Functional f = spec.family.member(eps);
    const DeGiorgiRatio r = de_giorgi_ratio(spec.family, c, tau, Point{1.0});
    const double R = prox_search_radius(f, spec.family.certificate, tau, Point{1.0});
    const double y = grid_prox(f, tau, 1.0, R, 1e-7);
    const double brute = (f(Point{1.0}).value() - y) / tau;
    // Grid error: M h^2/8 with M <= 2 rho/eps^2 + 2 + 1/tau, divided by tau.
    const double M = 2.0 * std::sqrt(eps) / (eps * eps) + 2.0 + 1.0 / tau;
    EXPECT_NEAR(r.ratio, brute, r.gap + M * 1e-14 / 8.0 / tau);
}

TEST(CrucialProbeTest, QuadraticSatisfied) {
    const auto c = CouplingSchedule::constant(1.0);
    const auto rep = crucial_assumption_probe(quad().family, c, [](double) { return Point{1.0}; }, Point{1.0},
                                              {1e-1, 1e-2, 1e-3, 1e-4});
    EXPECT_EQ(rep.verdict, ProbeVerdict::Satisfied);
    EXPECT_DOUBLE_EQ(rep.target, 0.5);
    EXPECT_NEAR(rep.liminf_estimate, 1.0 / (2.0 * 1.01), 1e-9);
}

TEST(CrucialProbeTest, OscillatoryDichotomy) {
    const auto& spec = osc_sqrt();
    for (double beta : {2.0, 0.5}) {
        const auto c = CouplingSchedule::power(1.0, beta);
        const auto seq = [&](double tau) { return (*spec.local_minimizer_near)(c(tau), Point{1.0}); };
        CrucialProbeOptions opt;
        opt.check_convergence_condition = true;
        const auto rep = crucial_assumption_probe(spec.family, c, seq, Point{1.0}, {1e-2, 1e-3, 1e-4}, {}, opt);
        EXPECT_DOUBLE_EQ(rep.target, 2.0);
        ASSERT_TRUE(rep.convergence_condition.has_value());
        if (beta == 2.0) {
            EXPECT_EQ(rep.verdict, ProbeVerdict::Satisfied);
            EXPECT_EQ(rep.convergence_condition->verdict, ProbeVerdict::Satisfied);
        } else {
            EXPECT_EQ(rep.verdict, ProbeVerdict::Violated);
            EXPECT_LT(rep.liminf_estimate, 0.1);
            EXPECT_STREQ(verdict_strength(rep.verdict), "conclusive");
        }
    }
}

TEST(CrucialProbeTest, ZeroSlopeAlwaysSatisfied) {
    const auto c = CouplingSchedule::power(1.0, 0.5);
    const auto rep = crucial_assumption_probe(osc_sqrt().family, c, [](double) { return Point{0.0}; }, Point{0.0},
                                              {1e-2, 1e-3, 1e-4});
    EXPECT_EQ(rep.target, 0.0);
    EXPECT_EQ(rep.verdict, ProbeVerdict::Satisfied);
}

TEST(CrucialProbeTest, NeedsLimitSlope) {
    FunctionalFamily fam = quad().family;
    fam.limit_slope.reset();
    try {
        crucial_assumption_probe(fam, CouplingSchedule::constant(1.0), [](double) { return Point{1.0}; }, Point{1.0},
                                 {1e-2});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingAnalyticSlope);
    }
}

TEST(EdiTest, ExactQuadraticFlow) {
    const auto& q = quad();
    const auto curve = [](double t) { return Point{std::exp(-t)}; };
    const double r = edi_residual(curve, q.family.limit, *q.family.limit_slope, 0.0, 1.0, 1e-3);
    EXPECT_LE(std::abs(r), 1e-3);
    // Refinement shrinks the residual.
    const double r2 = edi_residual(curve, q.family.limit, *q.family.limit_slope, 0.0, 1.0, 1e-4);
    EXPECT_LT(std::abs(r2), std::abs(r));
}

TEST(EdiTest, ConstantCurveAtMinimizer) {
    const auto& q = quad();
    EXPECT_EQ(edi_residual([](double) { return Point{0.0}; }, q.family.limit, *q.family.limit_slope, 0.0, 1.0, 1e-2),
              0.0);
}

TEST(EdiTest, CounterexampleLimitViolatesEdi) {
    const auto& q = quad();
    const auto curve = [](double t) { return Point{t * std::exp(-t)}; };
    const double r = edi_residual(curve, q.family.limit, *q.family.limit_slope, 0.0, 1.0, 1e-3);
    // Oracle: -e^{-2}/2 - 1/2 int t^2 e^{-2t} - 1/2 int (1-t)^2 e^{-2t}.
    const double oracle = -0.5 * std::exp(-2.0) -
                          0.5 * simpson([](double t) { return t * t * std::exp(-2.0 * t); }, 0.0, 1.0, 20000) -
                          0.5 * simpson([](double t) { return (1 - t) * (1 - t) * std::exp(-2.0 * t); }, 0.0, 1.0, 20000);
    EXPECT_NEAR(r, oracle, 1e-6);
    EXPECT_LE(r, -0.1);
}

TEST(EdiTest, SchemeInterpolantResidualShrinks) {
    const auto& q = quad();
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {1e-1, 1e-2, 1e-3}) {
        const Trajectory t = run_single(q.family, CouplingSchedule::constant(1.0), ErrorSchedule::uniform_power(),
                                        RecoveryData::constant(Point{1.0}), tau, 1.0);
        const auto curve = [&t](double s) { return t.at_step(static_cast<std::size_t>(std::llround(s / t.tau))); };
        const double r = std::abs(edi_residual(curve, q.family.limit, *q.family.limit_slope, 0.0, 1.0, tau));
        EXPECT_LT(r, prev);
        prev = r;
    }
    EXPECT_LT(prev, 1e-2);
}

TEST(SlopeLiminfTest, SinePerturbationSatisfied) {
    const auto spec = perturbation_family(half_square_base(), sin_perturbation());
    const auto rep = slope_liminf_probe(spec.family, [](double) { return Point{1.0}; }, Point{1.0},
                                        {1e-1, 1e-2, 1e-3, 1e-4});
    EXPECT_EQ(rep.verdict, ProbeVerdict::Satisfied);
    EXPECT_NEAR(rep.liminf_estimate, 1.0 + 1e-4 * std::cos(1.0), 1e-12);
    const auto fd = slope_liminf_probe(spec.family, [](double) { return Point{1.0}; }, Point{1.0},
                                       {1e-1, 1e-2, 1e-3, 1e-4}, SlopeMode::LocalSlope);
    EXPECT_EQ(fd.verdict, ProbeVerdict::Satisfied);
}

TEST(SlopeLiminfTest, ConstantFamilySatisfied) {
    const auto rep =
        slope_liminf_probe(quad().family, [](double) { return Point{0.7}; }, Point{0.7}, {1e-1, 1e-2, 1e-3});
    EXPECT_EQ(rep.verdict, ProbeVerdict::Satisfied);
    EXPECT_EQ(rep.liminf_estimate, rep.target);
}

TEST(SlopeLiminfTest, OscillatoryReportsObservedTailMin) {
    const auto& spec = osc_sqrt();
    const std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
    const auto rep = slope_liminf_probe(spec.family, [](double) { return Point{1.0}; }, Point{1.0}, eps);
    double direct = std::numeric_limits<double>::infinity();
    for (double e : {1e-2, 1e-3, 1e-4}) {
        const double d = 2.0 + std::sqrt(e) * (-(1.0 / e) * std::sin(2.0 / e));
        direct = std::min(direct, std::abs(d));
    }
    EXPECT_DOUBLE_EQ(rep.liminf_estimate, direct);
    EXPECT_EQ(rep.target, 2.0);
}

TEST(GammaDeltaTest, DefaultSpecLayout) {
    const auto xs = midpoint_enumeration(-4.0, 4.0, 8);
    const std::vector<double> expected{-4, 4, 0, -2, 2, -3, -1, 1};
    EXPECT_EQ(xs, expected);
    const auto spec = default_gamma_spec();
    EXPECT_EQ(spec.I(), 8u);
    EXPECT_EQ(spec.kappas.front(), 0.5);
    EXPECT_EQ(spec.kappas.back(), 1.0 / 256.0);
    EXPECT_DOUBLE_EQ(spec.truncation_bound(), 2.0 / 256.0);
    EXPECT_EQ(default_homeomorphism(0.0), 0.0);
    EXPECT_EQ(default_homeomorphism(std::numeric_limits<double>::infinity()), 1.0);
    EXPECT_LT(default_homeomorphism(1.0), default_homeomorphism(2.0));
}

TEST(GammaDeltaTest, PseudometricProperties) {
    const auto& spec = osc_sqrt();
    const auto gs = default_gamma_spec(4, 4);
    const auto& cert = spec.family.certificate;
    const Functional a = spec.family.member(1e-1);
    const Functional b = spec.family.member(3e-2);
    const Functional& c = spec.family.limit;
    EXPECT_EQ(gamma_delta(a, a, gs, cert, cert).value, 0.0);
    const GammaDelta ab = gamma_delta(a, b, gs, cert, cert);
    const GammaDelta ba = gamma_delta(b, a, gs, cert, cert);
    EXPECT_EQ(ab.value, ba.value);
    const GammaDelta bc = gamma_delta(b, c, gs, cert, cert);
    const GammaDelta ac = gamma_delta(a, c, gs, cert, cert);
    EXPECT_LE(ac.value, ab.value + bc.value + ab.accumulated_gap + bc.accumulated_gap + ac.accumulated_gap);
    EXPECT_GT(ab.value, 0.0);
}

TEST(GammaDeltaTest, DecreasingForVanishingOscillation) {
    const auto spec = oscillatory_family(constant_amplitude(1.0), [](double e) { return e; });
    const auto gs = default_gamma_spec(4, 4);
    const auto cfg = default_gamma_solver_config();
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        const double d = gamma_delta(spec.family.member(eps), spec.family.limit, gs, spec.family.certificate,
                                     spec.family.certificate, cfg)
                             .value;
        EXPECT_LT(d, prev);
        prev = d;
    }
    EXPECT_LT(prev, 1e-2);
}

TEST(EpsilonSearchTest, ConstantFamilyReturnsSearchMaximum) {
    const auto gs = default_gamma_spec(3, 3);
    EpsilonSearchOptions opt;
    opt.samples = 5;
    const auto table = epsilon_schedule_search(quad().family, {1e-1, 1e-2}, 1e-2, [](double t) { return t; }, gs, opt);
    for (const auto& e : table) {
        ASSERT_TRUE(e.epsilon.has_value());
        EXPECT_EQ(*e.epsilon, opt.eps_max);
        EXPECT_EQ(*e.delta, 0.0);
    }
}

TEST(EpsilonSearchTest, PerturbationMonotoneInTheta) {
    const auto spec = perturbation_family(half_square_base(), sin_perturbation());
    const auto gs = default_gamma_spec(3, 3);
    EpsilonSearchOptions opt;
    opt.samples = 9;
    opt.eps_min = 1e-6;
    double prev = 0.0;
    for (double theta : {1e-4, 1e-3, 1e-2}) {
        const auto t = epsilon_schedule_search(spec.family, {1e-1}, 1e-2, [theta](double) { return theta; }, gs, opt);
        ASSERT_TRUE(t[0].epsilon.has_value()) << theta;
        EXPECT_GE(*t[0].epsilon, prev);
        EXPECT_LE(*t[0].delta, theta);
        prev = *t[0].epsilon;
    }
}

TEST(EpsilonSearchTest, OscillatoryScheduleDecreasesAndPassesProbe) {
    const auto& spec = osc_sqrt();
    const auto gs = default_gamma_spec(3, 3);
    EpsilonSearchOptions opt;
    opt.samples = 9;
    opt.eps_min = 1e-6;
    const std::vector<double> taus{1e-1, 1e-2};
    const auto table = epsilon_schedule_search(spec.family, taus, 1e-2, [](double t) { return t; }, gs, opt);
    ASSERT_EQ(table.size(), 2u);
    ASSERT_TRUE(table[0].epsilon && table[1].epsilon);
    EXPECT_LE(*table[1].epsilon, *table[0].epsilon);

    // Run the crucial probe along a coupling that stays below the found schedule.
    const auto c = CouplingSchedule::power(1.0, 2.0);
    for (const auto& e : table) EXPECT_LE(c(e.tau), *e.epsilon);
    const auto seq = [&](double tau) { return (*spec.local_minimizer_near)(c(tau), Point{1.0}); };
    const auto rep = crucial_assumption_probe(spec.family, c, seq, Point{1.0}, {1e-2, 1e-3, 1e-4});
    EXPECT_EQ(rep.verdict, ProbeVerdict::Satisfied);
}

TEST(EpsilonSearchTest, ReportsNoAdmissibleEpsilon) {
    const auto& spec = osc_sqrt();
    const auto gs = default_gamma_spec(2, 2);
    EpsilonSearchOptions opt;
    opt.samples = 3;
    opt.eps_min = 1e-2;
    const auto t = epsilon_schedule_search(spec.family, {1e-1}, 1e-2, [](double) { return 1e-12; }, gs, opt);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_FALSE(t[0].epsilon.has_value());
    ASSERT_TRUE(t[0].error.has_value());
    EXPECT_EQ(*t[0].error, ErrorKind::NoAdmissibleEpsilon);
}
