// fibersieve: command-line front end. Every subcommand reads one flat config (see configs/),
// writes its outputs under --out, and finishes with manifest.json listing SHA-256 digests.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fibersieve/io.hpp"
#include "fibersieve/particle_forces.hpp"
#include "fibersieve/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fibersieve;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
};

Config load_config(const Common& c) {
    Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
    for (const auto& o : c.overrides) {
        cfg.set(std::string_view(o));
    }
    if (c.seed) {
        cfg.set("run.seed", std::to_string(*c.seed));
    }
    return cfg;
}

int cmd_modes(const Config& cfg, const Settings& s, RunManifest& m) {
    const std::vector<double> wl{s.beams.forward_wavelength_nm, s.beams.backward_wavelength_nm};
    const auto curve =
        surface_intensity_curve(s.geometry.fiber, wl, s.modes.min_nm, s.modes.max_nm, s.modes.step_nm, s.workers);
    m.write("surface_intensity.csv", [&](std::ostream& o) { write_surface_curve_csv(o, curve); });
    std::size_t crossings = 0;
    for (std::size_t i = 1; i < curve.diameters_nm.size(); ++i) {
        if (!curve.guided[0][i - 1] || !curve.guided[1][i - 1] || !curve.guided[0][i] || !curve.guided[1][i]) {
            continue;
        }
        const double a = curve.intensity[0][i - 1] - curve.intensity[1][i - 1];
        const double b = curve.intensity[0][i] - curve.intensity[1][i];
        if (a != 0.0 && (a < 0.0) != (b < 0.0)) {
            const double d = intensity_crossover(s.geometry.fiber, wl[0], wl[1], curve.diameters_nm[i - 1],
                                                 curve.diameters_nm[i]);
            std::cout << "crossover at d = " << format_number(d) << " nm\n";
            ++crossings;
        }
    }
    if (crossings == 0) {
        std::cout << "no crossover in range\n";
    }
    if (curve.truncated()) {
        std::cout << "curve truncated: mode cut off at some diameters (marked 'cutoff')\n";
    }
    m.write_manifest(cfg);
    return 0;
}

int cmd_forces(const Config& cfg, const Settings& s, RunManifest& m) {
    std::vector<ForceRatioRow> rows;
    const double d_fiber = s.geometry.fiber.waist_diameter_nm;
    const auto m1 = solve_he11(s.geometry.fiber, d_fiber, s.beams.forward_wavelength_nm);
    const auto m2 = solve_he11(s.geometry.fiber, d_fiber, s.beams.backward_wavelength_nm);
    for (double d = s.forces.min_nm; d <= s.forces.max_nm + 1e-9; d += s.forces.step_nm) {
        ParticleSpec p = s.particle;
        p.diameter_nm = d;
        const double f1 = axial_force(p, m1, 1.0, Direction::forward).axial_pN;
        const double f2 = axial_force(p, m2, 1.0, Direction::backward).axial_pN;
        rows.push_back({d, f1, f2, std::abs(f1) / std::abs(f2)});
    }
    m.write("force_ratio.csv", [&](std::ostream& o) {
        write_force_ratio_csv(o, rows, s.beams.forward_wavelength_nm, s.beams.backward_wavelength_nm);
    });
    m.write_manifest(cfg);
    return 0;
}

int cmd_trap(const Config& cfg, Settings s, RunManifest& m) {
    s.beams.p1_mW = effective_p1(s);
    const auto profile = force_profile(s.geometry, s.particle, s.beams, s.workers);
    TrapSearchOptions opts;
    opts.temperature_K = s.sim.temperature_K;
    const auto report = find_traps(profile, opts);
    auto j = to_json(report);
    j["p1_mW"] = s.beams.p1_mW;
    j["p2_mW"] = s.beams.p2_mW;
    if (s.beams.p2_mW > 0.0) {
        j["balance_p1_mW"] = balance_power(s.particle, s.geometry, s.beams.p2_mW, s.beams);
    }
    m.write("trap.csv", [&](std::ostream& o) { write_trap_csv(o, profile, report.potential); });
    m.write("trap_report.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    std::cout << "P1 = " << format_number(s.beams.p1_mW) << " mW, P2 = " << format_number(s.beams.p2_mW) << " mW\n";
    for (const auto& c : report.crossings) {
        std::cout << to_string(c.kind) << " at z = " << format_number(c.z_um) << " um, stiffness "
                  << format_number(c.stiffness_pN_per_um) << " pN/um\n";
    }
    if (report.z_trap_um) {
        std::cout << "trap depth " << format_number(report.depth_kT) << " kT (barriers "
                  << format_number(report.barrier_left_kT) << " / "
                  << format_number(report.barrier_right_kT) << ")\n";
    } else {
        std::cout << "no trap\n";
    }
    m.write_manifest(cfg);
    return 0;
}

void write_analysis(RunManifest& m, const fs::path& dir, const AnalysisResult& r) {
    m.write(dir / "peaks.csv", [&](std::ostream& o) { write_peaks_csv(o, r.peaks); });
    m.write(dir / "lines.csv", [&](std::ostream& o) { write_lines_csv(o, r.lines.lines); });
    m.write(dir / "trajectories.csv", [&](std::ostream& o) { write_trajectories_csv(o, r.trajectories); });
    nlohmann::json j;
    j["peaks"] = r.peaks.peaks.size();
    j["trajectories"] = r.trajectories.size();
    j["theta_deg"] = r.dominant_theta_deg() ? nlohmann::json(*r.dominant_theta_deg()) : nlohmann::json(nullptr);
    if (r.stats) {
        j["mean_velocity_um_s"] = r.stats->mean_um_s;
        j["velocity_std_um_s"] = r.stats->std_um_s;
        j["velocity_sem_um_s"] = r.stats->standard_error_um_s;
        j["moving_tracks"] = r.stats->count;
    }
    m.write(dir / "analysis.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

void write_run(RunManifest& m, const fs::path& dir, const SimulationRun& r, bool csv) {
    m.write(dir / "truth.csv", [&](std::ostream& o) { write_truth_csv(o, r.truth); });
    m.write(dir / "kymograph.pgm", [&](std::ostream& o) { write_kymograph_pgm(o, r.kymograph); }, true);
    if (csv) {
        m.write(dir / "kymograph.csv", [&](std::ostream& o) { write_kymograph_csv(o, r.kymograph); });
    }
}

int cmd_simulate(const Config& cfg, Settings s, RunManifest& m) {
    s.beams.p1_mW = effective_p1(s);
    s.sim.beams = s.beams;
    const auto tables = species_tables(s, s.workers);
    const auto r = simulate(s, tables, s.beams.p1_mW, s.seed, s.workers);
    write_run(m, "", r, s.write_csv_kymograph);
    for (std::size_t i = 0; i < s.sim.species.size(); ++i) {
        std::cout << s.sim.species[i].name << ": " << r.truth.injected(i) << " particles\n";
    }
    m.write_manifest(cfg);
    return 0;
}

int cmd_analyze(const Config& cfg, const Settings& s, RunManifest& m, const std::vector<std::string>& inputs) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto k = read_kymograph(inputs[i]);
        const auto r = analyze(k, s.analysis, s.workers);
        const fs::path dir = inputs.size() == 1 ? fs::path() : fs::path(fs::path(inputs[i]).stem());
        write_analysis(m, dir, r);
        std::cout << inputs[i] << ": " << r.peaks.peaks.size() << " peaks, " << r.trajectories.size()
                  << " trajectories, theta = "
                  << (r.dominant_theta_deg() ? format_number(*r.dominant_theta_deg()) : std::string("none"))
                  << " deg\n";
    }
    m.write_manifest(cfg);
    return 0;
}

int cmd_sweep(const Config& cfg, Settings s, RunManifest& m) {
    s.sim.beams = s.beams;
    const auto points = run_sweep(s, s.workers);
    for (std::size_t i = 0; i < points.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "point_%02zu", i);
        write_run(m, name, points[i].run, false);
        write_analysis(m, name, points[i].analysis);
    }
    m.write("summary.csv", [&](std::ostream& o) { write_sweep_summary_csv(o, s, points); });
    for (const auto& pt : points) {
        std::cout << "P1 = " << format_number(pt.p1_mW) << " mW: theta = "
                  << (pt.theta_deg ? format_number(*pt.theta_deg) : std::string("none")) << " deg";
        if (pt.velocity) {
            std::cout << ", mean v = " << format_number(pt.velocity->mean_um_s) << " um/s";
        }
        std::cout << '\n';
    }
    m.write_manifest(cfg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-color nanofiber taper sieve: modes, forces, traps, synthetic kymographs and analysis"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", common.seed, "master random seed (overrides run.seed)");
    app.add_option("--out", common.out_dir, "output directory")->capture_default_str();
    app.add_option("--set", common.overrides, "override a config key, key=value (repeatable)");

    auto* modes = app.add_subcommand("modes", "surface intensity per watt vs fiber diameter");
    auto* forces = app.add_subcommand("forces", "axial force per mW vs particle diameter at the waist");
    auto* trap = app.add_subcommand("trap", "force and potential along the taper, trap report");
    auto* simulate_cmd = app.add_subcommand("simulate", "Brownian transport and a synthetic kymograph");
    auto* analyze_cmd = app.add_subcommand("analyze", "peaks, Hough lines and trajectories of kymographs");
    std::vector<std::string> inputs;
    analyze_cmd->add_option("inputs", inputs, "kymograph .csv or .pgm files")->required()->check(CLI::ExistingFile);
    auto* sweep = app.add_subcommand("sweep", "simulate and analyse over a list of forward powers");
    for (auto* sub : {modes, forces, trap, simulate_cmd, analyze_cmd, sweep}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const Config cfg = load_config(common);
        const Settings s = settings_from(cfg);
        const std::string name = app.get_subcommands().front()->get_name();
        RunManifest m(name, s.seed, common.out_dir);
        fs::create_directories(common.out_dir);
        if (name == "modes") {
            return cmd_modes(cfg, s, m);
        }
        if (name == "forces") {
            return cmd_forces(cfg, s, m);
        }
        if (name == "trap") {
            return cmd_trap(cfg, s, m);
        }
        if (name == "simulate") {
            return cmd_simulate(cfg, s, m);
        }
        if (name == "analyze") {
            return cmd_analyze(cfg, s, m, inputs);
        }
        return cmd_sweep(cfg, s, m);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
