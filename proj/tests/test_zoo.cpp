#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mmflow/scheme.hpp"
#include "mmflow/zoo.hpp"

using namespace mmflow;

namespace {

std::vector<FamilySpec> smooth_zoo() {
    return {quadratic_reference(),
            oscillatory_family(constant_amplitude(1.0), [](double e) { return std::sqrt(e); }),
            oscillatory_family(saturating_amplitude(0.5, 2.0), [](double) { return 1.0; }, false),
            perturbation_family(half_square_base(), sin_sqrt_perturbation()),
            perturbation_family(square_base(), sin_shift_perturbation()),
            lsc_envelope_pair()};
}

double fv(const Functional& f, double x) { return f(Point{x}).value(); }

}  // namespace

TEST(ZooTest, DerivativesMatchCentralDifferences) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (const auto& spec : smooth_zoo()) {
        for (double eps : {0.1, 0.01}) {
            const Functional f = spec.family.member(eps);
            ASSERT_TRUE(f.analytic_derivative.has_value()) << spec.name;
            const double h = 1e-4 * eps;
            for (int k = 0; k < 100; ++k) {
                const double x = U(rng);
                const double fd = (fv(f, x + h) - fv(f, x - h)) / (2.0 * h);
                const double an = (*f.analytic_derivative)(Point{x}).x();
                EXPECT_LE(std::abs(fd - an), 1e-4 * std::max(1.0, std::abs(an))) << spec.name << " x=" << x;
            }
        }
    }
}

TEST(ZooTest, ExactFlowsSolveTheirOdes) {
    for (const auto& spec : smooth_zoo()) {
        ASSERT_TRUE(spec.family.exact_flow.has_value()) << spec.name;
        const auto& flow = *spec.family.exact_flow;
        const Functional& phi = spec.family.limit;
        for (double x0 : {-2.0, 0.5, 1.0}) {
            for (double t : {0.1, 0.5, 1.0, 2.0}) {
                const double h = 1e-5;
                const double du = (flow(Point{x0}, t + h).x() - flow(Point{x0}, t - h).x()) / (2.0 * h);
                const double grad = (*phi.analytic_derivative)(flow(Point{x0}, t)).x();
                EXPECT_LE(std::abs(du + grad), 1e-6) << spec.name;
            }
        }
    }
}

TEST(ZooTest, GammaLiminfSpotCheck) {
    // Along u_eps -> u with bounded energies the tail minimum of member values stays above phi(u).
    for (const auto& spec : smooth_zoo()) {
        for (double u : {-1.0, 0.0, 0.3, 2.0}) {
            double tail_min = std::numeric_limits<double>::infinity();
            for (double eps : {1e-3, 1e-4, 1e-5}) {
                tail_min = std::min(tail_min, fv(spec.family.member(eps), u + std::sqrt(eps)));
            }
            const double target = fv(spec.family.limit, u);
            // Tolerance covers the shift u_eps - u = sqrt(eps) and the eps zeta term.
            EXPECT_GE(tail_min, target - 0.1) << spec.name << " u=" << u;
        }
    }
}

TEST(OscillatoryTest, ZeroAmplitudeIsQuadraticSquare) {
    const auto spec = oscillatory_family(constant_amplitude(0.0), [](double e) { return std::sqrt(e); });
    for (double x : {-1.0, 0.2, 3.0}) EXPECT_EQ(fv(spec.family.member(1e-3), x), x * x);
}

TEST(OscillatoryTest, WellDepthAtSqrtEps) {
    const auto spec = oscillatory_family(constant_amplitude(1.0), [](double e) { return std::sqrt(e); });
    const double eps = 1e-4;
    const Functional f = spec.family.member(eps);
    for (int k = 3180; k < 3190; ++k) {
        const double bottom = (k + 0.5) * std::numbers::pi * eps;
        const double top = k * std::numbers::pi * eps;
        EXPECT_NEAR(fv(f, bottom), bottom * bottom, 1e-12);
        EXPECT_NEAR(fv(f, top) - top * top, 1e-2, 1e-12);
    }
}

TEST(OscillatoryTest, ContactsBracketThePoint) {
    const auto spec = oscillatory_family(constant_amplitude(1.0), [](double e) { return std::sqrt(e); });
    const double eps = 1e-3;
    const Functional f = spec.family.member(eps);
    for (double x : {-0.4321, 0.0, 1.0, 2.5}) {
        const auto c = f.minorant->contacts_near(Point{x});
        ASSERT_EQ(c.size(), 2u);
        EXPECT_LE(c[0].x(), x);
        EXPECT_GE(c[1].x(), x);
        for (const Point& p : c) EXPECT_NEAR(fv(f, p.x()), p.x() * p.x(), 1e-20 + 1e-15 * p.x() * p.x());
    }
}

TEST(OscillatoryTest, RecoverySnapsToWellBottom) {
    const auto spec = oscillatory_family(saturating_amplitude(1.0, 0.0), [](double) { return 1.0; }, false);
    const auto c = CouplingSchedule::power(1.0, 2.0);
    const auto rec = spec.recovery(c, Point{1.0});
    for (double tau : {1e-1, 1e-2, 1e-3}) {
        const double eps = c(tau);
        const Point u = rec.initial_for(tau);
        EXPECT_LE(std::abs(u.x() - 1.0), std::numbers::pi * eps);
        EXPECT_NEAR(fv(spec.family.member(eps), u.x()), u.x() * u.x(), 1e-12);
    }
}

TEST(OscillatoryTest, LocalMinimizerLiesInsideNearestWell) {
    const auto spec = oscillatory_family(constant_amplitude(1.0), [](double e) { return std::sqrt(e); });
    const double eps = 1e-2;
    const Point m = (*spec.local_minimizer_near)(eps, Point{1.0});
    EXPECT_LE(std::abs(m.x() - 1.0), std::numbers::pi * eps);
    const auto f = spec.family.member(eps);
    EXPECT_NEAR((*f.analytic_derivative)(m).x(), 0.0, 1e-6);
}

TEST(PerturbationTest, ZeroPerturbationIsConstantFamily) {
    const auto spec = perturbation_family(half_square_base(), zero_perturbation());
    for (double x : {-1.0, 0.5}) {
        EXPECT_EQ(fv(spec.family.member(0.3), x), fv(spec.family.limit, x));
    }
    EXPECT_EQ(spec.family.certificate.A, 0.0);
}

TEST(PerturbationTest, SharedCertificateCombination) {
    const auto spec = perturbation_family(half_square_base(), sin_sqrt_perturbation(), 0.5);
    EXPECT_DOUBLE_EQ(spec.family.certificate.A, 0.5);
    EXPECT_DOUBLE_EQ(spec.family.certificate.B, 0.0);
}

TEST(PerturbationTest, RejectsBadCertificate) {
    Perturbation bad{"neg_square", [](double, double x) { return -10.0 * x * x; },
                     [](double, double x) { return -20.0 * x; }, CoercivityCertificate{0.0, 0.0, Point{0.0}},
                     std::nullopt};
    try {
        perturbation_family(half_square_base(), bad);
        FAIL() << "expected CoercivityViolation";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CoercivityViolation);
    }
}

TEST(PerturbationTest, ShiftedSineConvergesUniformly) {
    const auto z = sin_shift_perturbation();
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        double sup = 0.0;
        for (double x = -10.0; x <= 10.0; x += 1e-3) sup = std::max(sup, std::abs(z.value(eps, x) - std::sin(x)));
        EXPECT_LE(sup, eps);
        EXPECT_LT(sup, prev);
        prev = sup;
    }
}

TEST(PerturbationTest, SchemeFollowsBaseFlow) {
    const auto spec = perturbation_family(half_square_base(), sin_sqrt_perturbation());
    const auto c = CouplingSchedule::power(1.0, 2.0);
    const Trajectory t =
        run_single(spec.family, c, ErrorSchedule::uniform_power(), spec.recovery(c, Point{1.0}), 1e-3, 1.0);
    EXPECT_NEAR(t.eval(1.0).x(), std::exp(-1.0), 1e-2);
}

TEST(LscEnvelopeTest, DefectAndRecovery) {
    const auto spec = lsc_envelope_pair();
    const Functional psi = spec.family.member(1.0);
    EXPECT_EQ(fv(psi, 0.0) - fv(spec.family.limit, 0.0), 1.0);
    EXPECT_EQ(fv(psi, 0.5), 0.25);
    const auto rec = spec.recovery(CouplingSchedule::constant(1.0), Point{0.0});
    EXPECT_EQ(rec.initial_for(1e-3).x(), 1e-3);
    EXPECT_NEAR(fv(psi, rec.initial_for(1e-3).x()), 0.0, 1e-5);
}

TEST(LscEnvelopeTest, ProxAgreesWithBruteForce) {
    const auto spec = lsc_envelope_pair();
    const Functional psi = spec.family.member(1.0);
    for (double tau : {1e-2, 1e-1}) {
        const ProxResult r = moreau_yosida(psi, spec.family.certificate, tau, Point{0.0});
        // Brute force on a grid avoiding the defect: inf over x != 0 of x^2 + x^2/(2 tau) is 0.
        double best = std::numeric_limits<double>::infinity();
        for (int k = -1000; k <= 1000; ++k) {
            if (k == 0) continue;
            const double x = 1e-9 * k;
            best = std::min(best, x * x + x * x / (2.0 * tau));
        }
        EXPECT_NEAR(r.value, best, r.certified_gap + 1e-15);
        EXPECT_LT(r.value, 1.0);
    }
}

TEST(LscEnvelopeTest, SchemeFollowsEnvelopeFlow) {
    const auto spec = lsc_envelope_pair();
    const auto c = CouplingSchedule::constant(1.0);
    const Trajectory t =
        run_single(spec.family, c, ErrorSchedule::uniform_power(), spec.recovery(c, Point{0.0}), 1e-3, 1.0);
    EXPECT_LE(std::abs(t.eval(1.0).x()), 1e-2);
}

TEST(GridRestrictedTest, FiniteOnlyOnLattice) {
    const auto spec =
        grid_restricted_family(half_square_base(), [](double e) { return e; }, [](double) { return 2.0; });
    const Functional f = spec.family.member(0.25);
    EXPECT_EQ(fv(f, 0.5), 0.125);
    EXPECT_FALSE(f(Point{0.3}).is_finite());
    EXPECT_FALSE(f(Point{2.25}).is_finite());
    const auto rec = spec.recovery(CouplingSchedule::constant(0.25), Point{0.9});
    EXPECT_EQ(rec.initial_for(0.1).x(), 1.0);
}

TEST(GridRestrictedTest, SchemeConvergesWithTauSquaredSpacing) {
    const auto spec =
        grid_restricted_family(half_square_base(), [](double e) { return e; }, [](double) { return 10.0; });
    const auto c = CouplingSchedule::power(1.0, 2.0);
    const Trajectory t =
        run_single(spec.family, c, ErrorSchedule::uniform_power(), spec.recovery(c, Point{1.0}), 1e-3, 1.0);
    EXPECT_NEAR(t.eval(1.0).x(), std::exp(-1.0), 1e-2);
}

TEST(GridRestrictedTest, LargeBoxIsHarmless) {
    const auto c = CouplingSchedule::power(1.0, 2.0);
    const auto small =
        grid_restricted_family(half_square_base(), [](double e) { return e; }, [](double) { return 5.0; });
    const auto large =
        grid_restricted_family(half_square_base(), [](double e) { return e; }, [](double) { return 500.0; });
    const auto ta = run_single(small.family, c, ErrorSchedule::uniform_power(), small.recovery(c, Point{1.0}), 1e-2, 1.0);
    const auto tb = run_single(large.family, c, ErrorSchedule::uniform_power(), large.recovery(c, Point{1.0}), 1e-2, 1.0);
    ASSERT_EQ(ta.steps(), tb.steps());
    for (std::size_t n = 0; n < ta.steps(); ++n) EXPECT_EQ(ta.values[n], tb.values[n]);
}

TEST(CounterexampleTest, SequenceValues) {
    EXPECT_EQ(counterexample_value(0.25, 1), 0.25);
    EXPECT_DOUBLE_EQ(counterexample_value(0.25, 2), 0.4);
    EXPECT_EQ(counterexample_value(0.25, 0), 0.0);
    const double tau = 1e-4;
    EXPECT_NEAR(counterexample_value(tau, 10000), std::exp(-1.0), 1e-4);
}

TEST(CounterexampleTest, TauOutOfRange) {
    for (double tau : {0.0, 1.0, 1.5, -0.1}) {
        try {
            counterexample_selector(tau);
            FAIL() << tau;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::TauOutOfRange);
        }
    }
}

TEST(QuadraticReferenceTest, ClosedForms) {
    EXPECT_DOUBLE_EQ(quadratic_prox_value(1.0, 2.0), 1.0);
    EXPECT_DOUBLE_EQ(quadratic_prox_point(1.0, 2.0), 1.0);
    const auto q = quadratic_reference();
    EXPECT_EQ((*q.family.limit_slope)(Point{-3.0}), 3.0);
    const ProxResult r = moreau_yosida(q.family.limit, q.family.certificate, 1.0, Point{2.0});
    EXPECT_NEAR(r.value, 1.0, 1e-12);
}
