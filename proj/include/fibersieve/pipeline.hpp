#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "io.hpp"
#include "numerics.hpp"
#include "taper_trap.hpp"
#include "track_analysis.hpp"
#include "transport.hpp"

namespace fibersieve {

struct CurveRange {
    double min_nm = 0.0;
    double max_nm = 0.0;
    double step_nm = 5.0;
};

/// Power sweep over the forward beam; every other parameter comes from Settings.
struct SweepSpec {
    std::vector<double> p1_mW;

    void validate() const {
        if (p1_mW.empty()) {
            throw ConfigError("sweep: the P1 list is empty");
        }
        for (std::size_t i = 0; i < p1_mW.size(); ++i) {
            if (!(p1_mW[i] >= 0.0) || (i > 0 && !(p1_mW[i] > p1_mW[i - 1]))) {
                throw ConfigError("sweep: P1 values must be non-negative and strictly increasing");
            }
        }
    }
};

/// Every module's parameters, read from one flat config.
struct Settings {
    TaperGeometry geometry;
    ParticleSpec particle;
    BeamConfig beams;
    double p1_over_balance = 0.0;  ///< if > 0, P1 is this multiple of the balance power
    SimConfig sim;
    CameraConfig camera;
    AnalysisOptions analysis;
    CurveRange modes{400.0, 1500.0, 5.0};
    CurveRange forces{80.0, 200.0, 5.0};
    SweepSpec sweep;
    bool write_csv_kymograph = true;
    std::uint64_t seed = 1;
    unsigned workers = 0;
};

namespace detail {

inline PermittivityModel permittivity_from(const std::string& s) {
    if (s == "drude-lorentz") {
        return PermittivityModel::drude_lorentz;
    }
    if (s == "tabulated") {
        return PermittivityModel::tabulated;
    }
    throw ConfigError("particle.permittivity must be drude-lorentz or tabulated, not '" + s + "'");
}

inline PolarizabilityModel polarizability_from(const std::string& s) {
    if (s == "mie-a1") {
        return PolarizabilityModel::mie_a1;
    }
    if (s == "radiative-dipole") {
        return PolarizabilityModel::radiative_dipole;
    }
    if (s == "quasi-static") {
        return PolarizabilityModel::quasi_static;
    }
    throw ConfigError("particle.polarizability must be mie-a1, radiative-dipole or quasi-static, not '" + s + "'");
}

inline CurveRange range_from(const Config& c, const std::string& prefix, CurveRange r) {
    r.min_nm = c.number(prefix + ".d_min_nm", r.min_nm);
    r.max_nm = c.number(prefix + ".d_max_nm", r.max_nm);
    r.step_nm = c.number(prefix + ".d_step_nm", r.step_nm);
    if (!(r.min_nm > 0.0) || !(r.max_nm >= r.min_nm) || !(r.step_nm > 0.0)) {
        throw ConfigError(prefix + ": need 0 < d_min_nm <= d_max_nm and d_step_nm > 0");
    }
    return r;
}

// Injection rate per second for a surface concentration given per microlitre. The conversion
// (0.5 per second per 1e5 per uL by default) is a model assumption, configurable as sim.*.
inline double rate_from(const Config& c, const std::string& prefix, double per_conc, double default_conc) {
    if (c.has(prefix + ".rate_per_s")) {
        return c.number(prefix + ".rate_per_s", 0.0);
    }
    return per_conc * c.number(prefix + ".concentration_per_uL", default_conc) / 1e5;
}

}  // namespace detail

/// Reads every namespace so the manifest snapshot is complete; unknown keys are rejected.
inline Settings settings_from(const Config& c) {
    Settings s;
    auto& f = s.geometry.fiber;
    f.core_index = c.number("fiber.core_index", f.core_index);
    f.medium_index = c.number("fiber.medium_index", f.medium_index);
    f.waist_diameter_nm = c.number("fiber.waist_diameter_nm", f.waist_diameter_nm);
    f.waist_length_um = c.number("fiber.waist_length_um", f.waist_length_um);
    f.taper_slope_nm_per_um = c.number("fiber.taper_slope_nm_per_um", f.taper_slope_nm_per_um);
    s.geometry.z_min_um = c.number("fiber.z_min_um", s.geometry.z_min_um);
    s.geometry.z_max_um = c.number("fiber.z_max_um", s.geometry.z_max_um);
    s.geometry.z_step_um = c.number("fiber.z_step_um", s.geometry.z_step_um);
    s.geometry.validate();

    auto& p = s.particle;
    p.diameter_nm = c.number("particle.diameter_nm", p.diameter_nm);
    p.permittivity = detail::permittivity_from(c.text("particle.permittivity", "drude-lorentz"));
    p.polarizability = detail::polarizability_from(c.text("particle.polarizability", "mie-a1"));
    p.medium_index = c.number("particle.medium_index", f.medium_index);
    p.surface_gap_nm = c.number("particle.surface_gap_nm", p.surface_gap_nm);
    p.validate();

    auto& b = s.beams;
    b.p1_mW = c.number("beams.p1_mW", b.p1_mW);
    b.p2_mW = c.number("beams.p2_mW", b.p2_mW);
    b.forward_wavelength_nm = c.number("beams.forward_wavelength_nm", b.forward_wavelength_nm);
    b.backward_wavelength_nm = c.number("beams.backward_wavelength_nm", b.backward_wavelength_nm);
    b.polarization_angle_rad = c.number("beams.polarization_angle_deg", 0.0) * constants::pi / 180.0;
    b.reversed = c.flag("beams.reversed", b.reversed);
    b.validate();
    s.p1_over_balance = c.number("beams.p1_over_balance", 0.0);
    if (!(s.p1_over_balance >= 0.0)) {
        throw ConfigError("beams.p1_over_balance must be >= 0");
    }

    auto& m = s.sim;
    m.beams = b;
    m.duration_s = c.number("sim.duration_s", m.duration_s);
    m.burn_in_s = c.number("sim.burn_in_s", m.burn_in_s);
    m.dt_s = c.number("sim.dt_s", m.dt_s);
    m.temperature_K = c.number("sim.temperature_K", m.temperature_K);
    m.viscosity_Pa_s = c.number("sim.viscosity_Pa_s", m.viscosity_Pa_s);
    m.wall_drag_factor = c.number("sim.wall_drag_factor", m.wall_drag_factor);
    m.detachment_rate_per_s = c.number("sim.detachment_rate_per_s", m.detachment_rate_per_s);
    m.sticking_fraction = c.number("sim.sticking_fraction", m.sticking_fraction);
    m.frame_period_s = c.number("sim.frame_period_s", m.frame_period_s);
    const double per_conc = c.number("sim.rate_per_s_per_1e5_per_uL", 0.5);
    const auto ids = c.indices("species");
    if (ids.empty()) {
        m.species.push_back({c.text("particle.name", format_number(p.diameter_nm) + "nm"), p,
                             detail::rate_from(c, "particle", per_conc, 2.6e5)});
    }
    for (auto i : ids) {
        const std::string pre = "species." + std::to_string(i);
        ParticleSpec sp = p;
        sp.diameter_nm = c.number(pre + ".diameter_nm", p.diameter_nm);
        sp.validate();
        m.species.push_back(
            {c.text(pre + ".name", format_number(sp.diameter_nm) + "nm"), sp, detail::rate_from(c, pre, per_conc, 0.0)});
    }
    s.write_csv_kymograph = c.flag("sim.write_kymograph_csv", true);
    m.validate();

    auto& k = s.camera;
    k.fov_min_um = c.number("camera.fov_min_um", k.fov_min_um);
    k.fov_max_um = c.number("camera.fov_max_um", k.fov_max_um);
    k.pixel_pitch_um = c.number("camera.pixel_pitch_um", k.pixel_pitch_um);
    k.psf_sigma_px = c.number("camera.psf_sigma_px", k.psf_sigma_px);
    k.gain_counts_per_uW = c.number("camera.gain_counts_per_uW", k.gain_counts_per_uW);
    k.background_counts = c.number("camera.background_counts", k.background_counts);
    k.read_noise_counts = c.number("camera.read_noise_counts", k.read_noise_counts);
    k.shot_noise_factor = c.number("camera.shot_noise_factor", k.shot_noise_factor);
    k.validate();

    auto& a = s.analysis;
    a.peaks.prominence_factor = c.number("analysis.prominence_factor", a.peaks.prominence_factor);
    a.peaks.height_factor = c.number("analysis.height_factor", a.peaks.height_factor);
    a.peaks.min_separation = c.unsigned_integer("analysis.min_separation_px", a.peaks.min_separation);
    a.hough.theta_step_deg = c.number("analysis.theta_step_deg", a.hough.theta_step_deg);
    a.hough.rho_step = c.number("analysis.rho_step_px", a.hough.rho_step);
    a.link.max_gap_frames = c.unsigned_integer("analysis.max_gap_frames", a.link.max_gap_frames);
    a.link.max_jump_pixels = c.number("analysis.max_jump_px", a.link.max_jump_pixels);
    a.link.min_length = c.unsigned_integer("analysis.min_length_frames", a.link.min_length);
    a.link.stuck_min_frames = c.unsigned_integer("analysis.stuck_min_frames", a.link.stuck_min_frames);
    a.link.stuck_position_std_px = c.number("analysis.stuck_position_std_px", a.link.stuck_position_std_px);
    a.link.stuck_intensity_cv = c.number("analysis.stuck_intensity_cv", a.link.stuck_intensity_cv);
    a.top_lines = c.unsigned_integer("analysis.top_lines", a.top_lines);
    a.exclude_stuck = c.flag("analysis.exclude_stuck", a.exclude_stuck);

    s.modes = detail::range_from(c, "modes", s.modes);
    s.forces = detail::range_from(c, "forces", s.forces);
    s.sweep.p1_mW = c.numbers("sweep.p1_mW", {0, 1, 2, 3, 4, 5, 6, 7, 8});
    s.seed = c.unsigned_integer("run.seed", s.seed);
    s.workers = static_cast<unsigned>(c.unsigned_integer("run.workers", 0));
    s.sim.seed = s.seed;
    s.camera.seed = derive_seed(s.seed, 0xCA3E7A);
    c.reject_unused();
    return s;
}

/// P1 in effect: either beams.p1_mW or the requested multiple of the balance power.
inline double effective_p1(const Settings& s) {
    if (s.p1_over_balance > 0.0) {
        return s.p1_over_balance * balance_power(s.particle, s.geometry, s.beams.p2_mW, s.beams);
    }
    return s.beams.p1_mW;
}

/// Force tables for every species; P1-independent, so a sweep builds them once.
inline std::vector<ForceTable> species_tables(const Settings& s, unsigned workers = 0) {
    std::vector<ForceTable> out;
    for (const auto& sp : s.sim.species) {
        out.push_back(force_table(s.geometry, sp.particle, s.beams, workers));
    }
    return out;
}

struct SimulationRun {
    TrajectoryTruth truth;
    Kymograph kymograph;
};

/// One synthetic experiment at the given P1, with the run seed split into motion and camera streams.
inline SimulationRun simulate(const Settings& s, const std::vector<ForceTable>& tables, double p1_mW,
                              std::uint64_t seed, unsigned workers = 0) {
    SimConfig cfg = s.sim;
    cfg.beams.p1_mW = p1_mW;
    cfg.seed = seed;
    std::vector<ForceProfile> profiles;
    for (const auto& t : tables) {
        profiles.push_back(force_profile(t, cfg.beams));
    }
    CameraConfig cam = s.camera;
    cam.seed = derive_seed(seed, 0xCA3E7A);
    SimulationRun r;
    r.truth = run(cfg, profiles, workers);
    r.kymograph = render_kymograph(r.truth, cam, workers);
    return r;
}

/// For each trajectory, the truth track it follows: the one within `tolerance_px` of most of its
/// peaks, provided that covers at least half of them.
inline std::vector<std::optional<std::size_t>> match_tracks(const std::vector<Trajectory>& trajectories,
                                                            const TrajectoryTruth& truth, const Kymograph& k,
                                                            double tolerance_px = 3.0) {
    std::vector<std::map<std::size_t, std::pair<std::size_t, double>>> by_frame(truth.frames);
    for (std::size_t i = 0; i < truth.tracks.size(); ++i) {
        const auto& tr = truth.tracks[i];
        for (std::size_t j = 0; j < tr.frame.size(); ++j) {
            if (tr.frame[j] < truth.frames) {
                by_frame[tr.frame[j]][i] = {i, k.pixel_of(tr.z_um[j])};
            }
        }
    }
    std::vector<std::optional<std::size_t>> out;
    for (const auto& t : trajectories) {
        std::map<std::size_t, std::size_t> votes;
        for (const auto& p : t.peaks) {
            if (p.frame >= by_frame.size()) {
                continue;
            }
            std::optional<std::size_t> best;
            double best_d = tolerance_px;
            for (const auto& [i, v] : by_frame[p.frame]) {
                const double d = std::abs(v.second - p.pixel);
                if (d <= best_d) {
                    best_d = d;
                    best = i;
                }
            }
            if (best) {
                ++votes[*best];
            }
        }
        const auto it = std::max_element(votes.begin(), votes.end(),
                                         [](const auto& a, const auto& b) { return a.second < b.second; });
        if (it != votes.end() && 2 * it->second >= t.peaks.size()) {
            out.push_back(it->first);
        } else {
            out.push_back(std::nullopt);
        }
    }
    return out;
}

/// Species of each trajectory by majority vote of its peaks, each peak taking the species of the
/// nearest true particle within `tolerance_px`. Works where several particles share one spot.
inline std::vector<std::optional<std::size_t>> match_species(const std::vector<Trajectory>& trajectories,
                                                             const TrajectoryTruth& truth, const Kymograph& k,
                                                             double tolerance_px = 3.0) {
    std::vector<std::vector<std::pair<std::size_t, double>>> by_frame(truth.frames);
    for (const auto& tr : truth.tracks) {
        for (std::size_t j = 0; j < tr.frame.size(); ++j) {
            if (tr.frame[j] < truth.frames) {
                by_frame[tr.frame[j]].push_back({tr.species, k.pixel_of(tr.z_um[j])});
            }
        }
    }
    std::vector<std::optional<std::size_t>> out;
    for (const auto& t : trajectories) {
        std::map<std::size_t, std::size_t> votes;
        for (const auto& p : t.peaks) {
            if (p.frame >= by_frame.size()) {
                continue;
            }
            std::optional<std::size_t> best;
            double best_d = tolerance_px;
            for (const auto& [species, pixel] : by_frame[p.frame]) {
                const double d = std::abs(pixel - p.pixel);
                if (d <= best_d) {
                    best_d = d;
                    best = species;
                }
            }
            if (best) {
                ++votes[*best];
            }
        }
        const auto it = std::max_element(votes.begin(), votes.end(),
                                         [](const auto& a, const auto& b) { return a.second < b.second; });
        if (it != votes.end() && 2 * it->second >= t.peaks.size()) {
            out.push_back(it->first);
        } else {
            out.push_back(std::nullopt);
        }
    }
    return out;
}

struct SweepPoint {
    double p1_mW = 0.0;
    std::uint64_t seed = 0;
    std::optional<double> theta_deg;
    std::size_t peaks = 0;
    std::size_t trajectories = 0;
    std::optional<VelocityStats> velocity;
    std::vector<std::size_t> injected;  ///< per species, burn-in included
    SimulationRun run;
    AnalysisResult analysis;
};

inline std::uint64_t sweep_point_seed(std::uint64_t master, std::size_t index) {
    return derive_seed(master, 0x5EE9, index);
}

/// Simulates and analyses every sweep point. Points run in parallel; each keeps its own seed, so
/// results do not depend on the worker count.
inline std::vector<SweepPoint> run_sweep(const Settings& s, unsigned workers = 0) {
    s.sweep.validate();
    const auto tables = species_tables(s, workers);
    std::vector<SweepPoint> points(s.sweep.p1_mW.size());
    parallel_for(
        points.size(),
        [&](std::size_t i) {
            auto& pt = points[i];
            pt.p1_mW = s.sweep.p1_mW[i];
            pt.seed = sweep_point_seed(s.seed, i);
            pt.run = simulate(s, tables, pt.p1_mW, pt.seed, 1);
            pt.analysis = analyze(pt.run.kymograph, s.analysis, 1);
            pt.theta_deg = pt.analysis.dominant_theta_deg();
            pt.peaks = pt.analysis.peaks.peaks.size();
            pt.trajectories = pt.analysis.trajectories.size();
            pt.velocity = pt.analysis.stats;
            for (std::size_t sp = 0; sp < s.sim.species.size(); ++sp) {
                pt.injected.push_back(pt.run.truth.injected(sp));
            }
        },
        workers);
    return points;
}

inline void write_sweep_summary_csv(std::ostream& out, const Settings& s, const std::vector<SweepPoint>& points) {
    out << "p1_mW, seed, theta_deg, peaks, trajectories, mean_velocity_um_s, velocity_std_um_s, "
           "velocity_sem_um_s, moving_tracks";
    for (const auto& sp : s.sim.species) {
        out << ", injected_" << sp.name;
    }
    out << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("nan"); };
    for (const auto& pt : points) {
        out << format_number(pt.p1_mW) << ", " << pt.seed << ", " << opt(pt.theta_deg) << ", " << pt.peaks << ", "
            << pt.trajectories;
        if (pt.velocity) {
            out << ", " << format_number(pt.velocity->mean_um_s) << ", " << format_number(pt.velocity->std_um_s)
                << ", " << format_number(pt.velocity->standard_error_um_s) << ", " << pt.velocity->count;
        } else {
            out << ", nan, nan, nan, 0";
        }
        for (auto n : pt.injected) {
            out << ", " << n;
        }
        out << '\n';
    }
}

}  // namespace fibersieve
