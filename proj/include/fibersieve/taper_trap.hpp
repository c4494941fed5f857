#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "fiber_modes.hpp"
#include "numerics.hpp"
#include "particle_forces.hpp"

namespace fibersieve {

/// Two counter-propagating beams. The forward beam travels +z, the backward beam -z, unless
/// `reversed` swaps their directions.
struct BeamConfig {
    double p1_mW = 0.0;  ///< forward beam
    double p2_mW = 12.0;  ///< backward beam
    double forward_wavelength_nm = 640.0;
    double backward_wavelength_nm = 785.0;
    double polarization_angle_rad = 0.0;  ///< particle azimuth measured from the polarisation axis
    bool reversed = false;

    void validate() const {
        if (!(p1_mW >= 0.0) || !(p2_mW >= 0.0)) {
            throw ConfigError("beam powers must be non-negative");
        }
        if (!(forward_wavelength_nm > 0.0) || !(backward_wavelength_nm > 0.0)) {
            throw ConfigError("beam wavelengths must be positive");
        }
        if (!std::isfinite(polarization_angle_rad)) {
            throw ConfigError("polarization angle must be finite");
        }
    }
    double forward_sign() const { return reversed ? -1.0 : 1.0; }
};

/// Symmetric taper: flat waist on |z| <= waist_length/2, then linear diameter growth.
struct TaperGeometry {
    FiberSpec fiber;
    double z_min_um = -400.0;
    double z_max_um = 400.0;
    double z_step_um = 1.0;

    void validate() const {
        fiber.validate();
        if (!(z_step_um > 0.0) || !(z_max_um > z_min_um)) {
            throw ConfigError("taper grid needs z_max > z_min and a positive step");
        }
    }

    double diameter_nm(double z_um) const {
        const double excess = std::abs(z_um) - 0.5 * fiber.waist_length_um;
        return fiber.waist_diameter_nm + fiber.taper_slope_nm_per_um * std::max(excess, 0.0);
    }

    std::size_t size() const {
        return static_cast<std::size_t>(std::floor((z_max_um - z_min_um) / z_step_um + 1e-9)) + 1;
    }
    double z(std::size_t i) const { return z_min_um + z_step_um * static_cast<double>(i); }
};

/// Per-milliwatt force magnitudes and scattered power along the taper. Independent of the beam
/// powers, so one table serves a whole power sweep.
struct ForceTable {
    std::vector<double> z_um;
    std::vector<double> diameter_nm;
    std::vector<double> forward_pN_per_mW;   ///< |F| from the forward-wavelength mode
    std::vector<double> backward_pN_per_mW;  ///< |F| from the backward-wavelength mode
    std::vector<double> forward_scatter_uW_per_mW;
    std::vector<double> backward_scatter_uW_per_mW;
    std::vector<bool> valid;  ///< false where either mode is cut off
    double z_step_um = 1.0;
    double forward_wavelength_nm = 640.0;
    double backward_wavelength_nm = 785.0;
    ParticleSpec particle;

    bool truncated() const { return std::find(valid.begin(), valid.end(), false) != valid.end(); }
};

inline ForceTable force_table(const TaperGeometry& geometry, const ParticleSpec& particle,
                              const BeamConfig& beams, unsigned workers = 0) {
    geometry.validate();
    beams.validate();
    particle.validate();
    const std::size_t n = geometry.size();
    ForceTable t;
    t.z_step_um = geometry.z_step_um;
    t.forward_wavelength_nm = beams.forward_wavelength_nm;
    t.backward_wavelength_nm = beams.backward_wavelength_nm;
    t.particle = particle;
    t.z_um.resize(n);
    t.diameter_nm.resize(n);

    // Symmetric tapers repeat every diameter, so solve each distinct one once.
    std::map<double, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) {
        t.z_um[i] = geometry.z(i);
        t.diameter_nm[i] = geometry.diameter_nm(t.z_um[i]);
        slot.emplace(t.diameter_nm[i], 0);
    }
    std::vector<double> unique;
    unique.reserve(slot.size());
    for (auto& [d, k] : slot) {
        k = unique.size();
        unique.push_back(d);
    }

    const auto resp_f = polarizability(particle, beams.forward_wavelength_nm);
    const auto resp_b = polarizability(particle, beams.backward_wavelength_nm);
    struct Entry {
        double f = 0.0, b = 0.0, sf = 0.0, sb = 0.0;
        bool ok = false;
    };
    std::vector<Entry> entries(unique.size());
    parallel_for(
        unique.size(),
        [&](std::size_t k) {
            try {
                const auto mf = solve_he11(geometry.fiber, unique[k], beams.forward_wavelength_nm);
                const auto mb = solve_he11(geometry.fiber, unique[k], beams.backward_wavelength_nm);
                const auto ff = axial_force(particle, mf, resp_f, 1.0, Direction::forward,
                                            beams.polarization_angle_rad);
                const auto fb = axial_force(particle, mb, resp_b, 1.0, Direction::backward,
                                            beams.polarization_angle_rad);
                entries[k] = {std::abs(ff.axial_pN), std::abs(fb.axial_pN), ff.scattered_uW,
                              fb.scattered_uW, true};
            } catch (const ModeCutoffError&) {
                entries[k] = {};
            }
        },
        workers);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.forward_pN_per_mW.resize(n);
    t.backward_pN_per_mW.resize(n);
    t.forward_scatter_uW_per_mW.resize(n);
    t.backward_scatter_uW_per_mW.resize(n);
    t.valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = entries[slot.at(t.diameter_nm[i])];
        t.valid[i] = e.ok;
        t.forward_pN_per_mW[i] = e.ok ? e.f : nan;
        t.backward_pN_per_mW[i] = e.ok ? e.b : nan;
        t.forward_scatter_uW_per_mW[i] = e.ok ? e.sf : nan;
        t.backward_scatter_uW_per_mW[i] = e.ok ? e.sb : nan;
    }
    return t;
}

/// Axial forces at fixed beam powers. `net_pN` is the total force along +z; for the default
/// beam directions it equals F_forward - F_backward.
struct ForceProfile {
    std::vector<double> z_um;
    std::vector<double> diameter_nm;
    std::vector<double> forward_pN;   ///< magnitude
    std::vector<double> backward_pN;  ///< magnitude
    std::vector<double> net_pN;
    std::vector<double> scatter_uW;  ///< light scattered by the particle from both beams
    std::vector<bool> valid;
    double z_step_um = 1.0;
    BeamConfig beams;
    ParticleSpec particle;

    std::size_t size() const { return z_um.size(); }
    bool truncated() const { return std::find(valid.begin(), valid.end(), false) != valid.end(); }

    /// Linear interpolation of the net force; NaN in invalid cells, clamped outside the grid.
    double net_at(double z) const {
        return interpolate(net_pN, z);
    }
    double scatter_at(double z) const { return interpolate(scatter_uW, z); }

private:
    double interpolate(const std::vector<double>& v, double z) const {
        const double s = (z - z_um.front()) / z_step_um;
        if (s <= 0.0) {
            return v.front();
        }
        const auto last = static_cast<double>(size() - 1);
        if (s >= last) {
            return v.back();
        }
        const auto i = static_cast<std::size_t>(s);
        const double w = s - static_cast<double>(i);
        return v[i] + w * (v[i + 1] - v[i]);
    }
};

inline ForceProfile force_profile(const ForceTable& table, const BeamConfig& beams) {
    beams.validate();
    ForceProfile p;
    p.z_um = table.z_um;
    p.diameter_nm = table.diameter_nm;
    p.valid = table.valid;
    p.z_step_um = table.z_step_um;
    p.beams = beams;
    p.particle = table.particle;
    const std::size_t n = table.z_um.size();
    p.forward_pN.resize(n);
    p.backward_pN.resize(n);
    p.net_pN.resize(n);
    p.scatter_uW.resize(n);
    const double s = beams.forward_sign();
    for (std::size_t i = 0; i < n; ++i) {
        p.forward_pN[i] = beams.p1_mW * table.forward_pN_per_mW[i];
        p.backward_pN[i] = beams.p2_mW * table.backward_pN_per_mW[i];
        p.net_pN[i] = s * (p.forward_pN[i] - p.backward_pN[i]);
        p.scatter_uW[i] = beams.p1_mW * table.forward_scatter_uW_per_mW[i] +
                          beams.p2_mW * table.backward_scatter_uW_per_mW[i];
    }
    return p;
}

inline ForceProfile force_profile(const TaperGeometry& geometry, const ParticleSpec& particle,
                                  const BeamConfig& beams, unsigned workers = 0) {
    return force_profile(force_table(geometry, particle, beams, workers), beams);
}

/// Reflection z -> -z of the whole setup: positions flip and so does every axial force.
inline ForceProfile mirror(const ForceProfile& p) {
    ForceProfile m = p;
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = n - 1 - i;
        m.z_um[i] = -p.z_um[j];
        m.diameter_nm[i] = p.diameter_nm[j];
        m.forward_pN[i] = p.forward_pN[j];
        m.backward_pN[i] = p.backward_pN[j];
        m.net_pN[i] = -p.net_pN[j];
        m.scatter_uW[i] = p.scatter_uW[j];
        m.valid[i] = p.valid[j];
    }
    m.beams.reversed = !p.beams.reversed;
    return m;
}

/// Forward power that cancels the backward beam at the waist: P1 = P2 F_b / F_f.
inline double balance_power(const ParticleSpec& particle, const TaperGeometry& geometry,
                            double p2_mW, const BeamConfig& beams = {}) {
    if (!(p2_mW > 0.0)) {
        throw ConfigError("balance_power: P2 must be positive");
    }
    const double d = geometry.diameter_nm(0.0);
    const auto mf = solve_he11(geometry.fiber, d, beams.forward_wavelength_nm);
    const auto mb = solve_he11(geometry.fiber, d, beams.backward_wavelength_nm);
    const double ff = std::abs(
        axial_force(particle, mf, 1.0, Direction::forward).axial_pN);
    const double fb = std::abs(
        axial_force(particle, mb, 1.0, Direction::backward).axial_pN);
    if (!(ff > 0.0)) {
        throw NumericError("balance_power: forward force vanishes, no balance exists");
    }
    return p2_mW * fb / ff;
}

inline double balance_power(const ForceTable& table, double p2_mW) {
    const auto& z = table.z_um;
    const auto it = std::min_element(z.begin(), z.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
    const auto i = static_cast<std::size_t>(it - z.begin());
    if (!(p2_mW > 0.0)) {
        throw ConfigError("balance_power: P2 must be positive");
    }
    if (!table.valid[i] || !(table.forward_pN_per_mW[i] > 0.0)) {
        throw NumericError("balance_power: forward force vanishes, no balance exists");
    }
    return p2_mW * table.backward_pN_per_mW[i] / table.forward_pN_per_mW[i];
}

enum class CrossingKind { trap, anti_trap };

inline const char* to_string(CrossingKind k) { return k == CrossingKind::trap ? "trap" : "anti-trap"; }

struct Crossing {
    double z_um = 0.0;
    CrossingKind kind = CrossingKind::trap;
    double stiffness_pN_per_um = 0.0;  ///< -dF/dz; positive at traps
};

/// Potential U(z) = -integral of the net force, in k_BT, minimum shifted to zero.
struct PotentialProfile {
    std::vector<double> z_um;
    std::vector<double> u_kT;  ///< NaN where the force profile is invalid
    double temperature_K = constants::room_temperature;
};

inline PotentialProfile potential(const ForceProfile& profile,
                                  double temperature_K = constants::room_temperature) {
    PotentialProfile u;
    u.z_um = profile.z_um;
    u.temperature_K = temperature_K;
    const std::size_t n = profile.size();
    u.u_kT.assign(n, std::numeric_limits<double>::quiet_NaN());
    const double kT = constants::thermal_energy_pN_um(temperature_K);
    // Each contiguous valid run is integrated on its own and shifted to its own minimum.
    std::size_t i = 0;
    while (i < n) {
        if (!profile.valid[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && profile.valid[j]) {
            ++j;
        }
        std::vector<double> neg(profile.net_pN.begin() + static_cast<std::ptrdiff_t>(i),
                                profile.net_pN.begin() + static_cast<std::ptrdiff_t>(j));
        for (auto& v : neg) {
            v = -v;
        }
        const auto w = cumulative_trapezoid(neg, profile.z_step_um);
        const double lo = *std::min_element(w.begin(), w.end());
        for (std::size_t k = i; k < j; ++k) {
            u.u_kT[k] = (w[k - i] - lo) / kT;
        }
        i = j;
    }
    return u;
}

struct TrapDepth {
    double depth_kT = 0.0;
    double barrier_left_kT = 0.0;
    double barrier_right_kT = 0.0;
    bool open = true;
};

/// Escape barriers on each side of the well nearest `z_trap`. Walking outward, a barrier is the
/// highest point reached before the potential falls below the well bottom or the valid range
/// ends. Depth is the smaller barrier; a side without any rise leaves the trap open.
inline TrapDepth trap_depth(const PotentialProfile& u, double z_trap_um) {
    const std::size_t n = u.z_um.size();
    TrapDepth out;
    if (n == 0) {
        return out;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(u.z_um[i] - z_trap_um) < std::abs(u.z_um[best] - z_trap_um)) {
            best = i;
        }
    }
    if (!std::isfinite(u.u_kT[best])) {
        return out;
    }
    // Settle onto the local minimum of the sampled potential.
    while (true) {
        if (best > 0 && std::isfinite(u.u_kT[best - 1]) && u.u_kT[best - 1] < u.u_kT[best]) {
            --best;
        } else if (best + 1 < n && std::isfinite(u.u_kT[best + 1]) &&
                   u.u_kT[best + 1] < u.u_kT[best]) {
            ++best;
        } else {
            break;
        }
    }
    const double bottom = u.u_kT[best];
    auto barrier = [&](int step) {
        double top = bottom;
        for (auto i = static_cast<std::ptrdiff_t>(best) + step;
             i >= 0 && i < static_cast<std::ptrdiff_t>(n); i += step) {
            const double v = u.u_kT[static_cast<std::size_t>(i)];
            if (!std::isfinite(v) || v < bottom) {
                break;
            }
            top = std::max(top, v);
        }
        return top - bottom;
    };
    out.barrier_left_kT = barrier(-1);
    out.barrier_right_kT = barrier(+1);
    out.depth_kT = std::min(out.barrier_left_kT, out.barrier_right_kT);
    out.open = !(out.depth_kT > 0.0);
    return out;
}

struct TrapReport {
    std::vector<Crossing> crossings;
    std::optional<double> z_trap_um;  ///< the trap on z >= 0, else the first trap
    double stiffness_pN_per_um = 0.0;
    double depth_kT = 0.0;
    double barrier_left_kT = 0.0;
    double barrier_right_kT = 0.0;
    bool open = true;
    PotentialProfile potential;

    std::size_t count(CrossingKind k) const {
        return static_cast<std::size_t>(std::count_if(
            crossings.begin(), crossings.end(), [k](const Crossing& c) { return c.kind == k; }));
    }
    bool has_interior_minimum(double z_lo, double z_hi) const {
        return std::any_of(crossings.begin(), crossings.end(), [&](const Crossing& c) {
            return c.kind == CrossingKind::trap && c.z_um > z_lo && c.z_um < z_hi;
        });
    }
};

struct TrapSearchOptions {
    double zero_tolerance = 1e-9;  ///< relative to max |net force|
    double temperature_K = constants::room_temperature;
};

/// Sign changes of the net force within each valid run. Values within the zero tolerance form
/// zero runs; a zero run between opposite signs is one crossing at its midpoint, and a zero run
/// between equal signs is a touch, not a crossing. Crossings are the exact roots of the linear
/// interpolant.
inline std::vector<Crossing> zero_crossings(const ForceProfile& p, const TrapSearchOptions& opts = {}) {
    std::vector<Crossing> out;
    const std::size_t n = p.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (p.valid[i]) {
            scale = std::max(scale, std::abs(p.net_pN[i]));
        }
    }
    if (!(scale > 0.0)) {
        return out;
    }
    const double tol = opts.zero_tolerance * scale;
    auto sign = [&](std::size_t i) {
        const double v = p.net_pN[i];
        return v > tol ? 1 : (v < -tol ? -1 : 0);
    };

    std::size_t i = 0;
    while (i < n) {
        if (!p.valid[i]) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < n && p.valid[end]) {
            ++end;
        }
        std::ptrdiff_t last_nonzero = -1;
        for (std::size_t k = i; k < end; ++k) {
            const int s = sign(k);
            if (s == 0) {
                continue;
            }
            if (last_nonzero >= 0) {
                const auto a = static_cast<std::size_t>(last_nonzero);
                const int sa = sign(a);
                if (sa != s) {
                    Crossing c;
                    c.kind = sa > 0 ? CrossingKind::trap : CrossingKind::anti_trap;
                    const double fa = p.net_pN[a];
                    const double fb = p.net_pN[k];
                    if (k == a + 1) {
                        c.z_um = p.z_um[a] + (p.z_um[k] - p.z_um[a]) * fa / (fa - fb);
                    } else {
                        c.z_um = 0.5 * (p.z_um[a + 1] + p.z_um[k - 1]);
                    }
                    c.stiffness_pN_per_um = -(fb - fa) / (p.z_um[k] - p.z_um[a]);
                    out.push_back(c);
                }
            }
            last_nonzero = static_cast<std::ptrdiff_t>(k);
        }
        i = end;
    }
    return out;
}

inline TrapReport find_traps(const ForceProfile& profile, const TrapSearchOptions& opts = {}) {
    TrapReport r;
    r.crossings = zero_crossings(profile, opts);
    r.potential = potential(profile, opts.temperature_K);
    const Crossing* chosen = nullptr;
    for (const auto& c : r.crossings) {
        if (c.kind != CrossingKind::trap) {
            continue;
        }
        if (chosen == nullptr || (chosen->z_um < 0.0 && c.z_um >= 0.0)) {
            chosen = &c;
        }
    }
    if (chosen != nullptr) {
        r.z_trap_um = chosen->z_um;
        r.stiffness_pN_per_um = chosen->stiffness_pN_per_um;
        const auto d = trap_depth(r.potential, chosen->z_um);
        r.depth_kT = d.depth_kT;
        r.barrier_left_kT = d.barrier_left_kT;
        r.barrier_right_kT = d.barrier_right_kT;
        r.open = d.open;
    }
    return r;
}

/// Largest stiffness among traps, used for the integrator stability bound.
inline double max_stiffness(const ForceProfile& p) {
    double k = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p.valid[i] && p.valid[i - 1]) {
            k = std::max(k, -(p.net_pN[i] - p.net_pN[i - 1]) / p.z_step_um);
        }
    }
    return k;
}

}  // namespace fibersieve
