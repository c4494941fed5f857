#include <gtest/gtest.h>

#include <cmath>

#include "fibersieve/taper_trap.hpp"

using namespace fibersieve;

namespace {

ParticleSpec gns(double d) {
    ParticleSpec p;
    p.diameter_nm = d;
    return p;
}

// A profile on a uniform grid with every cell valid, for analytic checks.
template <class F>
ForceProfile synthetic(F f, double lo = -100.0, double hi = 100.0, double step = 1.0) {
    ForceProfile p;
    p.z_step_um = step;
    for (double z = lo; z <= hi + 1e-9; z += step) {
        p.z_um.push_back(z);
        p.diameter_nm.push_back(550.0);
        p.forward_pN.push_back(0.0);
        p.backward_pN.push_back(0.0);
        p.net_pN.push_back(f(z));
        p.scatter_uW.push_back(0.0);
        p.valid.push_back(true);
    }
    return p;
}

// Tables are the expensive part; share them across tests.
const ForceTable& table(double d) {
    static const ForceTable t100 = force_table(TaperGeometry{}, gns(100.0), BeamConfig{});
    static const ForceTable t150 = force_table(TaperGeometry{}, gns(150.0), BeamConfig{});
    return d < 125.0 ? t100 : t150;
}

ForceProfile at_power(double d, double p1) {
    BeamConfig b;
    b.p1_mW = p1;
    return force_profile(table(d), b);
}

}  // namespace

TEST(TaperGeometry, SymmetricAndNonDecreasing) {
    TaperGeometry g;
    EXPECT_EQ(g.size(), 801u);
    EXPECT_DOUBLE_EQ(g.diameter_nm(0.0), 550.0);
    EXPECT_DOUBLE_EQ(g.diameter_nm(100.0), 550.0);
    EXPECT_DOUBLE_EQ(g.diameter_nm(400.0), 1150.0);
    for (double z = 0.0; z < 400.0; z += 0.5) {
        EXPECT_EQ(g.diameter_nm(z), g.diameter_nm(-z));
        EXPECT_LE(g.diameter_nm(z), g.diameter_nm(z + 0.5));
    }
}

TEST(ForceProfile, ZeroPowerZeroForce) {
    BeamConfig b;
    b.p1_mW = 0.0;
    b.p2_mW = 0.0;
    const auto p = force_profile(table(100.0), b);
    for (double v : p.net_pN) {
        EXPECT_EQ(v, 0.0);
    }
    const auto r = find_traps(p);
    EXPECT_TRUE(r.crossings.empty());
    EXPECT_FALSE(r.z_trap_um.has_value());
}

TEST(ForceProfile, FlatAcrossWaistAtBalance) {
    const double pb = balance_power(table(100.0), 12.0);
    const auto p = at_power(100.0, pb);
    double scale = 0.0;
    for (double f : p.backward_pN) {
        scale = std::max(scale, f);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::abs(p.z_um[i]) <= 100.0) {
            EXPECT_LT(std::abs(p.net_pN[i]), 1e-9 * scale) << p.z_um[i];
        }
    }
}

TEST(ForceProfile, SwappingPowersFlipsSignForIdenticalWavelengths) {
    BeamConfig a;
    a.forward_wavelength_nm = a.backward_wavelength_nm = 700.0;
    a.p1_mW = 3.0;
    a.p2_mW = 5.0;
    const auto t = force_table(TaperGeometry{}, gns(120.0), a);
    BeamConfig b = a;
    std::swap(b.p1_mW, b.p2_mW);
    const auto pa = force_profile(t, a);
    const auto pb = force_profile(t, b);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa.net_pN[i], -pb.net_pN[i]);
    }
}

TEST(ForceProfile, CutoffMarkedInvalid) {
    TaperGeometry g;
    g.fiber.waist_diameter_nm = 100.0;
    g.fiber.taper_slope_nm_per_um = 5.0;
    const auto t = force_table(g, gns(100.0), BeamConfig{});
    EXPECT_TRUE(t.truncated());
    EXPECT_FALSE(t.valid[400]);
    EXPECT_TRUE(t.valid.front());
    EXPECT_TRUE(std::isnan(t.backward_pN_per_mW[400]));
}

TEST(BalancePower, WithinFactorTwoOfMeasuredValues) {
    const TaperGeometry g;
    const double p100 = balance_power(gns(100.0), g, 12.0);
    const double p150 = balance_power(gns(150.0), g, 12.0);
    EXPECT_GE(p100, 1.7 / 2.0);
    EXPECT_LE(p100, 1.7 * 2.0);
    EXPECT_GE(p150, 8.0 / 2.0);
    EXPECT_LE(p150, 8.0 * 2.0);
    EXPECT_GE(p150 / p100, 3.0);
    EXPECT_LE(p150 / p100, 8.0);
    EXPECT_DOUBLE_EQ(balance_power(table(100.0), 12.0), p100);
}

TEST(BalancePower, LinearInBackwardPower) {
    const double a = balance_power(table(150.0), 12.0);
    EXPECT_EQ(balance_power(table(150.0), 24.0), 2.0 * a);
}

TEST(BalancePower, NoForwardForceRejected) {
    ForceTable t = table(100.0);
    std::fill(t.forward_pN_per_mW.begin(), t.forward_pN_per_mW.end(), 0.0);
    EXPECT_THROW(balance_power(t, 12.0), NumericError);
    EXPECT_THROW(balance_power(t, 0.0), ConfigError);
}

TEST(ZeroCrossings, SineCrossingIsTrap) {
    const double z0 = 50.0;
    const auto r = find_traps(synthetic([&](double z) { return -std::sin(z / z0); }));
    ASSERT_EQ(r.crossings.size(), 1u);
    EXPECT_EQ(r.crossings[0].kind, CrossingKind::trap);
    EXPECT_NEAR(r.crossings[0].z_um, 0.0, 1e-12);
    EXPECT_NEAR(r.crossings[0].stiffness_pN_per_um, 1.0 / z0, 1e-4 / z0);
    ASSERT_TRUE(r.z_trap_um.has_value());
}

TEST(ZeroCrossings, OffGridRootRefined) {
    const auto r = find_traps(synthetic([](double z) { return 0.3 * (17.35 - z); }));
    ASSERT_EQ(r.crossings.size(), 1u);
    EXPECT_NEAR(r.crossings[0].z_um, 17.35, 0.1);
    EXPECT_NEAR(r.crossings[0].stiffness_pN_per_um, 0.3, 1e-12);
}

TEST(ZeroCrossings, AntiTrapAndTouch) {
    auto r = find_traps(synthetic([](double z) { return std::sin(z / 40.0); }));
    ASSERT_EQ(r.crossings.size(), 1u);
    EXPECT_EQ(r.crossings[0].kind, CrossingKind::anti_trap);
    EXPECT_LT(r.crossings[0].stiffness_pN_per_um, 0.0);
    EXPECT_FALSE(r.z_trap_um.has_value());
    // Touching zero without changing sign is not a crossing.
    r = find_traps(synthetic([](double z) { return -z * z; }));
    EXPECT_TRUE(r.crossings.empty());
}

TEST(ZeroCrossings, ZeroRunBetweenOppositeSigns) {
    const auto r = find_traps(synthetic([](double z) {
        return z < -10.0 ? 1.0 : (z > 20.0 ? -1.0 : 0.0);
    }));
    ASSERT_EQ(r.crossings.size(), 1u);
    EXPECT_EQ(r.crossings[0].kind, CrossingKind::trap);
    EXPECT_DOUBLE_EQ(r.crossings[0].z_um, 5.0);
}

TEST(ZeroCrossings, InvalidGapSplitsRuns) {
    auto p = synthetic([](double z) { return -z; });
    for (std::size_t i = 98; i <= 102; ++i) {
        p.valid[i] = false;
        p.net_pN[i] = std::nan("");
    }
    EXPECT_TRUE(zero_crossings(p).empty());
    const auto u = potential(p);
    EXPECT_TRUE(std::isnan(u.u_kT[100]));
    EXPECT_DOUBLE_EQ(*std::min_element(u.u_kT.begin(), u.u_kT.begin() + 98), 0.0);
    EXPECT_DOUBLE_EQ(*std::min_element(u.u_kT.begin() + 103, u.u_kT.end()), 0.0);
}

TEST(Potential, HarmonicWell) {
    const double k = 0.02;
    const double z0 = 12.0;
    const auto u = potential(synthetic([&](double z) { return -k * (z - z0); }));
    const double kT = constants::thermal_energy_pN_um(constants::room_temperature);
    for (std::size_t i = 0; i < u.z_um.size(); ++i) {
        const double expected = 0.5 * k * std::pow(u.z_um[i] - z0, 2) / kT;
        EXPECT_NEAR(u.u_kT[i], expected, 1e-9 * (1.0 + expected));
    }
}

TEST(Potential, ConstantForceGivesLinearPotential) {
    const double c = 0.004;
    const auto u = potential(synthetic([&](double) { return c; }));
    const double kT = constants::thermal_energy_pN_um(constants::room_temperature);
    for (std::size_t i = 1; i < u.z_um.size(); ++i) {
        EXPECT_NEAR(u.u_kT[i] - u.u_kT[i - 1], -c / kT, 1e-9);
    }
    EXPECT_DOUBLE_EQ(u.u_kT.back(), 0.0);
}

TEST(Potential, FiniteDifferenceReproducesForce) {
    const double kT = constants::thermal_energy_pN_um(constants::room_temperature);
    for (double d : {100.0, 150.0}) {
        const double pb = balance_power(table(d), 12.0);
        for (double f : {1.0, 1.18, 1.32}) {
            const auto p = at_power(d, f * pb);
            const auto u = potential(p);
            double err = 0.0;
            double ref = 0.0;
            for (std::size_t i = 1; i + 1 < p.size(); ++i) {
                const double grad = (u.u_kT[i + 1] - u.u_kT[i - 1]) * kT / (2.0 * p.z_step_um);
                err += std::pow(-grad - p.net_pN[i], 2);
                ref += std::pow(p.net_pN[i], 2);
            }
            EXPECT_LT(std::sqrt(err / ref), 0.01) << d << " " << f;
        }
    }
}

TEST(Potential, InflectionAtBalance) {
    const auto p = at_power(100.0, balance_power(table(100.0), 12.0));
    const auto r = find_traps(p);
    EXPECT_FALSE(r.has_interior_minimum(0.0, 400.0));
    EXPECT_EQ(r.count(CrossingKind::trap), 0u);
    // U is non-decreasing for z > 0: the slope touches zero on the waist and never turns negative.
    for (std::size_t i = 401; i < p.size(); ++i) {
        EXPECT_GE(r.potential.u_kT[i] - r.potential.u_kT[i - 1], -1e-9);
    }
}

TEST(TrapDepth, HarmonicWellLimitedByNearerEdge) {
    const double k = 0.02;
    const auto p = synthetic([&](double z) { return -k * (z - 30.0); });
    const auto r = find_traps(p);
    ASSERT_TRUE(r.z_trap_um.has_value());
    const double kT = constants::thermal_energy_pN_um(constants::room_temperature);
    EXPECT_NEAR(r.depth_kT, 0.5 * k * 70.0 * 70.0 / kT, 1e-9 * r.depth_kT);
    EXPECT_NEAR(r.barrier_left_kT, 0.5 * k * 130.0 * 130.0 / kT, 1e-9 * r.barrier_left_kT);
    EXPECT_FALSE(r.open);
}

TEST(TrapDepth, FlatPotentialIsOpen) {
    const auto u = potential(synthetic([](double) { return 0.0; }));
    const auto d = trap_depth(u, 0.0);
    EXPECT_EQ(d.depth_kT, 0.0);
    EXPECT_TRUE(d.open);
}

TEST(TrapDepth, WaistSideBarrierGrowsWithPower) {
    const double pb = balance_power(table(100.0), 12.0);
    const auto lo = find_traps(at_power(100.0, 1.18 * pb));
    const auto hi = find_traps(at_power(100.0, 1.32 * pb));
    EXPECT_GT(hi.barrier_left_kT, lo.barrier_left_kT);
    // The far-taper barrier shrinks as the trap moves outward: the smaller of the two, which is
    // the reported depth, is the far-taper one in both cases.
    EXPECT_LT(hi.barrier_right_kT, lo.barrier_right_kT);
    EXPECT_EQ(lo.depth_kT, lo.barrier_right_kT);
}

TEST(FindTraps, OneTrapAndOneAntiTrapAboveBalance) {
    for (double d : {100.0, 150.0}) {
        const double pb = balance_power(table(d), 12.0);
        for (double f : {1.05, 1.18, 1.32, 1.5}) {
            const auto r = find_traps(at_power(d, f * pb));
            ASSERT_EQ(r.crossings.size(), 2u);
            EXPECT_EQ(r.count(CrossingKind::trap), 1u);
            for (const auto& c : r.crossings) {
                if (c.kind == CrossingKind::trap) {
                    EXPECT_GT(c.z_um, 100.0);
                    EXPECT_GT(c.stiffness_pN_per_um, 0.0);
                } else {
                    EXPECT_LT(c.z_um, -100.0);
                }
            }
        }
    }
}

TEST(FindTraps, ClassificationMatchesForceDirection) {
    const double delta = 0.5;
    for (double d : {100.0, 150.0}) {
        const double pb = balance_power(table(d), 12.0);
        for (double f : {1.18, 1.32}) {
            const auto p = at_power(d, f * pb);
            for (const auto& c : find_traps(p).crossings) {
                const double right = p.net_at(c.z_um + delta);
                const double left = p.net_at(c.z_um - delta);
                if (c.kind == CrossingKind::trap) {
                    EXPECT_LT(right, 0.0);
                    EXPECT_GT(left, 0.0);
                } else {
                    EXPECT_GT(right, 0.0);
                    EXPECT_LT(left, 0.0);
                }
            }
        }
    }
}

TEST(FindTraps, TrapMovesOutwardWithPower) {
    for (double d : {100.0, 150.0}) {
        const double pb = balance_power(table(d), 12.0);
        double previous = 0.0;
        for (double f = 1.01; f <= 1.6; f += 0.01) {
            const auto r = find_traps(at_power(d, f * pb));
            ASSERT_TRUE(r.z_trap_um.has_value()) << f;
            EXPECT_GE(*r.z_trap_um, previous) << d << " " << f;
            previous = *r.z_trap_um;
        }
    }
}

TEST(FindTraps, AbsolutePowersFromTheMeasurement) {
    // 2.0 and 2.25 mW for 100 nm spheres at P2 = 12 mW: both traps sit on the rising taper.
    const auto a = find_traps(at_power(100.0, 2.0));
    const auto b = find_traps(at_power(100.0, 2.25));
    ASSERT_TRUE(a.z_trap_um && b.z_trap_um);
    EXPECT_GT(*b.z_trap_um, *a.z_trap_um);
    EXPECT_GT(*a.z_trap_um, 100.0);
    EXPECT_GT(TaperGeometry{}.diameter_nm(*b.z_trap_um), TaperGeometry{}.diameter_nm(*a.z_trap_um));
}

TEST(FindTraps, MirrorWithSwappedBeamsExchangesTrapsAndAntiTraps) {
    const double pb = balance_power(table(100.0), 12.0);
    BeamConfig b;
    b.p1_mW = 1.25 * pb;
    const auto original = find_traps(force_profile(table(100.0), b));
    b.reversed = true;
    const auto mirrored = find_traps(mirror(force_profile(table(100.0), b)));
    ASSERT_EQ(original.crossings.size(), mirrored.crossings.size());
    for (const auto& c : original.crossings) {
        const auto it = std::find_if(mirrored.crossings.begin(), mirrored.crossings.end(),
                                     [&](const Crossing& m) { return std::abs(m.z_um + c.z_um) < 1e-9; });
        ASSERT_NE(it, mirrored.crossings.end());
        EXPECT_NE(it->kind, c.kind);
    }
}

TEST(FindTraps, TrapsInsideCalibratedRegion) {
    for (double d : {100.0, 150.0}) {
        const double pb = balance_power(table(d), 12.0);
        for (double f : {1.18, 1.32}) {
            for (const auto& c : find_traps(at_power(d, f * pb)).crossings) {
                EXPECT_GE(std::abs(c.z_um), 100.0);
                EXPECT_LE(std::abs(c.z_um), 325.0);
            }
        }
    }
}
