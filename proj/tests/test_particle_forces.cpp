#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "fibersieve/particle_forces.hpp"
#include "oracles/mie_series.hpp"

using namespace fibersieve;

namespace {

ParticleSpec gns(double diameter_nm, PolarizabilityModel model = PolarizabilityModel::mie_a1) {
    ParticleSpec p;
    p.diameter_nm = diameter_nm;
    p.polarizability = model;
    return p;
}

constexpr double kWater = 1.33 * 1.33;

}  // namespace

TEST(GoldPermittivity, MetallicAndLossy) {
    EXPECT_LT(gold_permittivity(640.0).real(), 0.0);
    EXPECT_GT(gold_permittivity(785.0).imag(), 0.0);
    EXPECT_LT(gold_permittivity(640.0, PermittivityModel::tabulated).real(), 0.0);
}

TEST(GoldPermittivity, DrudeLorentzAgreesWithTabulatedConstantsAt640nm) {
    // Hand interpolation of Johnson & Christy between 1.88 eV (n=0.14, k=3.697) and
    // 2.01 eV (n=0.21, k=3.272) at 1.93725 eV: n = 0.170827, k = 3.509834.
    const std::complex<double> reference{-12.28975, 1.19915};
    const auto eps = gold_permittivity(640.0);
    EXPECT_LT(std::abs(eps - reference) / std::abs(reference), 0.05);
    EXPECT_LT(std::abs(gold_permittivity(640.0, PermittivityModel::tabulated) - reference), 1e-3);
}

TEST(GoldPermittivity, ContinuousAcrossWindow) {
    for (double l = 400.0; l < 1000.0; l += 1.0) {
        const auto a = gold_permittivity(l);
        const auto b = gold_permittivity(l + 0.01);
        EXPECT_LT(std::abs(a - b), 0.01 * std::abs(a)) << l;
    }
}

TEST(GoldPermittivity, OutsideWindowRejected) {
    EXPECT_THROW(gold_permittivity(300.0), RangeError);
    EXPECT_THROW(gold_permittivity(1100.0), RangeError);
}

TEST(Polarizability, IndexMatchedSphereIsInvisible) {
    for (auto model : {PolarizabilityModel::quasi_static, PolarizabilityModel::radiative_dipole,
                       PolarizabilityModel::mie_a1}) {
        const auto r = sphere_response({kWater, 0.0}, kWater, 50.0, 640.0, model);
        EXPECT_EQ(std::abs(r.alpha), 0.0);
        EXPECT_EQ(r.sigma_ext, 0.0);
        EXPECT_EQ(r.sigma_scat, 0.0);
        EXPECT_EQ(r.sigma_abs, 0.0);
    }
}

TEST(Polarizability, QuasiStaticCubeLaw) {
    const auto a = polarizability(gns(100.0, PolarizabilityModel::quasi_static), 640.0);
    const auto b = polarizability(gns(150.0, PolarizabilityModel::quasi_static), 640.0);
    EXPECT_NEAR(std::abs(b.alpha) / std::abs(a.alpha), 3.375, 1e-12);
}

TEST(Polarizability, OpticalTheorem) {
    for (auto model : {PolarizabilityModel::radiative_dipole, PolarizabilityModel::mie_a1}) {
        for (double d : {20.0, 80.0, 100.0, 150.0, 200.0}) {
            for (double l : {450.0, 640.0, 785.0, 950.0}) {
                const auto r = polarizability(gns(d, model), l);
                EXPECT_GE(r.sigma_abs, 0.0);
                EXPECT_GE(r.sigma_scat, 0.0);
                EXPECT_GE(r.alpha.imag(), 0.0);
                EXPECT_NEAR(r.sigma_ext, r.sigma_abs + r.sigma_scat, 1e-6 * r.sigma_ext);
            }
        }
    }
}

TEST(Polarizability, FroehlichPole) {
    const std::complex<double> pole{-2.0 * kWater, 0.0};
    EXPECT_THROW(sphere_response(pole, kWater, 50.0, 520.0, PolarizabilityModel::quasi_static),
                 ResonanceError);
    const auto r = sphere_response(pole, kWater, 50.0, 520.0, PolarizabilityModel::radiative_dipole);
    EXPECT_TRUE(std::isfinite(std::abs(r.alpha)));
    EXPECT_GT(r.sigma_ext, 0.0);
}

TEST(Polarizability, ExtinctionMatchesFullMieSeries) {
    const auto eps = gold_permittivity(640.0);
    const auto full = oracle::mie_series(eps, 1.33, 50.0, 640.0);
    // Sanity check on the oracle itself against an independent scipy-based evaluation.
    EXPECT_NEAR(full.ext, 24393.7, 5.0);
    const auto r = polarizability(gns(100.0), 640.0);
    EXPECT_NEAR(r.sigma_ext, full.ext, 0.15 * full.ext);
}

TEST(Polarizability, MieA1ConvergesToDipoleForSmallSpheres) {
    const auto a1 = polarizability(gns(10.0), 640.0);
    const auto dip = polarizability(gns(10.0, PolarizabilityModel::radiative_dipole), 640.0);
    EXPECT_NEAR(a1.sigma_ext, dip.sigma_ext, 0.02 * dip.sigma_ext);
}

class AxialForceTest : public ::testing::Test {
protected:
    FiberSpec fiber;
    ModeSolution m640 = solve_he11(fiber, 550.0, 640.0);
    ModeSolution m785 = solve_he11(fiber, 550.0, 785.0);
};

TEST_F(AxialForceTest, ZeroPowerZeroForce) {
    const auto f = axial_force(gns(100.0), m640, 0.0, Direction::forward);
    EXPECT_EQ(f.axial_pN, 0.0);
    EXPECT_EQ(f.gradient_pN, 0.0);
}

TEST_F(AxialForceTest, ExactlyLinearInPower) {
    for (double p : {0.3, 1.0, 7.0, 12.0}) {
        const auto f1 = axial_force(gns(150.0), m785, p, Direction::backward);
        const auto f2 = axial_force(gns(150.0), m785, 2.0 * p, Direction::backward);
        EXPECT_EQ(f2.axial_pN, 2.0 * f1.axial_pN);
    }
}

TEST_F(AxialForceTest, SignFollowsPropagation) {
    for (double d : {80.0, 100.0, 150.0, 200.0}) {
        for (double dia : {500.0, 700.0, 1000.0}) {
            const auto a = solve_he11(fiber, dia, 640.0);
            const auto b = solve_he11(fiber, dia, 785.0);
            EXPECT_GT(axial_force(gns(d), a, 1.0, Direction::forward).axial_pN, 0.0);
            EXPECT_LT(axial_force(gns(d), b, 1.0, Direction::backward).axial_pN, 0.0);
        }
    }
}

TEST_F(AxialForceTest, GradientForcePullsTowardSurface) {
    const auto f = axial_force(gns(100.0), m640, 1.0, Direction::forward);
    ASSERT_GT(polarizability(gns(100.0), 640.0).alpha.real(), 0.0);
    EXPECT_GT(f.gradient_pN, 0.0);
}

TEST_F(AxialForceTest, CentreInsideFiberRejected) {
    auto p = gns(100.0);
    p.surface_gap_nm = -60.0;
    EXPECT_THROW(axial_force(p, m640, 1.0, Direction::forward), GeometryError);
}

TEST(ForceRatio, ReproducesSizeSelectivity) {
    FiberSpec fiber;
    const double r100 = force_ratio(gns(100.0), fiber, 550.0);
    const double r150 = force_ratio(gns(150.0), fiber, 550.0);
    EXPECT_GT(r100, r150);
    EXPECT_GE(r100, 7.5 / 2.0);
    EXPECT_LE(r100, 7.5 * 2.0);
    EXPECT_GE(r150, 1.5 / 2.0);
    EXPECT_LE(r150, 1.5 * 2.0);
    EXPECT_GE(r100 / r150, 5.0 / 2.0);
    EXPECT_LE(r100 / r150, 5.0 * 2.0);
}

TEST(ForceRatio, DecreasesWithParticleSize) {
    FiberSpec fiber;
    // 10 nm sweep over 80-200 nm.
    double previous = force_ratio(gns(80.0), fiber, 550.0);
    for (double d = 90.0; d <= 200.0; d += 10.0) {
        const double r = force_ratio(gns(d), fiber, 550.0);
        EXPECT_LT(r, previous) << "D = " << d;
        EXPECT_GT(r, 0.0);
        previous = r;
    }
    // Finer sweep: the a1 ratio has a shallow maximum (about 0.1 %) near 85 nm, so strict
    // decrease at 5 nm spacing starts there.
    previous = force_ratio(gns(85.0), fiber, 550.0);
    for (double d = 90.0; d <= 200.0; d += 5.0) {
        const double r = force_ratio(gns(d), fiber, 550.0);
        EXPECT_LT(r, previous) << "D = " << d;
        previous = r;
    }
}

TEST(ForceRatio, IdenticalWavelengthsGiveUnity) {
    EXPECT_DOUBLE_EQ(force_ratio(gns(120.0), FiberSpec{}, 600.0, 700.0, 700.0), 1.0);
}
