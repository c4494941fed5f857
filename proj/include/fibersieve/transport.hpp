#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "numerics.hpp"
#include "particle_forces.hpp"
#include "taper_trap.hpp"

namespace fibersieve {

/// One particle population on the fiber. Arrivals are a Poisson process with
/// `injection_rate_per_s`, landing uniformly over the simulation window.
struct Species {
    std::string name;
    ParticleSpec particle;
    double injection_rate_per_s = 0.0;
};

struct SimConfig {
    std::vector<Species> species;
    BeamConfig beams;
    double duration_s = 20.0;  ///< observed time; frames = duration / frame_period
    double burn_in_s = 30.0;   ///< simulated before the first frame so traps can fill
    double dt_s = 1e-3;
    double temperature_K = constants::room_temperature;
    double viscosity_Pa_s = constants::water_viscosity;
    double wall_drag_factor = 3.0;  ///< drag enhancement for a sphere sliding on the surface
    double detachment_rate_per_s = 0.0;
    double sticking_fraction = 0.0;  ///< arrivals that stick where they land
    double frame_period_s = 0.05;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(dt_s > 0.0) || !(duration_s >= dt_s)) {
            throw ConfigError("simulation needs dt > 0 and duration >= dt");
        }
        if (!(burn_in_s >= 0.0) || !(frame_period_s > 0.0)) {
            throw ConfigError("burn-in must be >= 0 and frame period > 0");
        }
        if (!(temperature_K >= 0.0) || !(viscosity_Pa_s > 0.0) || !(wall_drag_factor >= 1.0)) {
            throw ConfigError("need temperature >= 0, viscosity > 0, wall factor >= 1");
        }
        if (!(detachment_rate_per_s >= 0.0) || !(sticking_fraction >= 0.0 && sticking_fraction <= 1.0)) {
            throw ConfigError("detachment rate must be >= 0 and sticking fraction in [0, 1]");
        }
        for (const auto& s : species) {
            s.particle.validate();
            if (!(s.injection_rate_per_s >= 0.0)) {
                throw ConfigError("injection rates must be non-negative");
            }
        }
    }
    std::size_t frames() const {
        return static_cast<std::size_t>(std::llround(duration_s / frame_period_s));
    }
};

/// Stokes drag coefficient [pN s / um].
inline double drag_coefficient(double radius_nm, double viscosity_Pa_s, double wall_factor = 1.0) {
    // 6 pi eta a with eta in Pa s and a in um gives N s/m * 1e-6, i.e. pN s/um directly.
    return 6.0 * constants::pi * viscosity_Pa_s * radius_nm * 1e-3 * wall_factor;
}

inline double diffusion_coefficient(double temperature_K, double gamma_pN_s_per_um) {
    return constants::thermal_energy_pN_um(temperature_K) / gamma_pN_s_per_um;
}

/// Euler-Maruyama update of overdamped positions: z += F(z)/gamma dt + sqrt(2 D dt) xi.
template <class Force, class Rng>
void step(std::span<double> z, const Force& force, double gamma, double dt, double temperature_K,
          Rng& rng) {
    const double noise = std::sqrt(2.0 * diffusion_coefficient(temperature_K, gamma) * dt);
    std::normal_distribution<double> normal;
    for (auto& x : z) {
        const double drift = force(x) / gamma * dt;
        x += drift + (noise > 0.0 ? noise * normal(rng) : 0.0);
    }
}

template <class Rng>
void step(std::span<double> z, const ForceProfile& profile, double gamma, double dt,
          double temperature_K, Rng& rng) {
    step(z, [&](double x) { return profile.net_at(x); }, gamma, dt, temperature_K, rng);
}

/// Rejects time steps that would make the explicit update unstable in the stiffest trap.
inline void check_stability(const ForceProfile& profile, double gamma, double dt) {
    const double k = max_stiffness(profile);
    if (k * dt / gamma >= 0.1) {
        throw ConfigError("time step too large: kappa dt / gamma = " + std::to_string(k * dt / gamma) +
                          " (must be < 0.1)");
    }
}

struct ParticleTrack {
    std::size_t id = 0;
    std::size_t species = 0;
    double injected_s = 0.0;  ///< negative during burn-in
    double removed_s = std::numeric_limits<double>::infinity();  ///< infinity if still present
    bool stuck = false;
    std::vector<std::size_t> frame;  ///< frames in which the particle is present
    std::vector<double> z_um;
    std::vector<double> scatter_uW;
};

struct TrajectoryTruth {
    std::vector<ParticleTrack> tracks;
    std::vector<std::string> species_names;
    double frame_period_s = 0.05;
    std::size_t frames = 0;
    double window_min_um = 0.0;
    double window_max_um = 0.0;

    std::size_t injected(std::size_t species) const {
        return static_cast<std::size_t>(std::count_if(
            tracks.begin(), tracks.end(), [&](const ParticleTrack& t) { return t.species == species; }));
    }
};

namespace detail {

// Stream tags, so arrival and motion streams never share a seed.
inline constexpr std::uint64_t arrival_stream = 0xA441;
inline constexpr std::uint64_t motion_stream = 0x30E;
inline constexpr std::uint64_t noise_stream = 0x9015E;

struct Arrival {
    double t = 0.0;
    double z = 0.0;
    bool stuck = false;
};

inline std::vector<Arrival> arrivals(const SimConfig& cfg, std::size_t species, double z_min,
                                     double z_max) {
    std::vector<Arrival> out;
    const double rate = cfg.species[species].injection_rate_per_s;
    if (!(rate > 0.0)) {
        return out;
    }
    std::mt19937_64 rng(derive_seed(cfg.seed, arrival_stream, species));
    std::exponential_distribution<double> gap(rate);
    std::uniform_real_distribution<double> where(z_min, z_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double t = -cfg.burn_in_s;
    while (true) {
        t += gap(rng);
        if (t >= cfg.duration_s) {
            break;
        }
        const double z = where(rng);
        const bool stuck = unit(rng) < cfg.sticking_fraction;
        out.push_back({t, z, stuck});
    }
    return out;
}

}  // namespace detail

/// Simulates every species on its own force profile. Each particle is advanced with its own
/// random stream, so the ensemble is identical for any worker count.
inline TrajectoryTruth run(const SimConfig& cfg, std::span<const ForceProfile> profiles,
                           unsigned workers = 0) {
    cfg.validate();
    if (profiles.size() != cfg.species.size()) {
        throw ConfigError("one force profile is needed per species");
    }
    TrajectoryTruth truth;
    truth.frame_period_s = cfg.frame_period_s;
    truth.frames = cfg.frames();
    if (profiles.empty()) {
        return truth;
    }
    truth.window_min_um = profiles.front().z_um.front();
    truth.window_max_um = profiles.front().z_um.back();
    for (std::size_t s = 0; s < profiles.size(); ++s) {
        const auto& p = profiles[s];
        if (p.truncated()) {
            throw ConfigError("force profile for species '" + cfg.species[s].name +
                              "' has cut-off cells inside the simulation window");
        }
        if (p.z_um.front() != truth.window_min_um || p.z_um.back() != truth.window_max_um) {
            throw ConfigError("all species must share one simulation window");
        }
        const double gamma = drag_coefficient(cfg.species[s].particle.radius_nm(), cfg.viscosity_Pa_s,
                                              cfg.wall_drag_factor);
        check_stability(p, gamma, cfg.dt_s);
        truth.species_names.push_back(cfg.species[s].name);
    }

    struct Job {
        std::size_t species;
        std::size_t index;
        detail::Arrival arrival;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < cfg.species.size(); ++s) {
        const auto a = detail::arrivals(cfg, s, truth.window_min_um, truth.window_max_um);
        for (std::size_t i = 0; i < a.size(); ++i) {
            jobs.push_back({s, i, a[i]});
        }
    }
    truth.tracks.resize(jobs.size());

    const double dt = cfg.dt_s;
    const std::size_t frames = truth.frames;
    parallel_for(
        jobs.size(),
        [&](std::size_t j) {
            const auto& job = jobs[j];
            const auto& profile = profiles[job.species];
            const double gamma = drag_coefficient(cfg.species[job.species].particle.radius_nm(),
                                                  cfg.viscosity_Pa_s, cfg.wall_drag_factor);
            const double noise = std::sqrt(2.0 * diffusion_coefficient(cfg.temperature_K, gamma) * dt);
            const double p_detach = -std::expm1(-cfg.detachment_rate_per_s * dt);
            std::mt19937_64 rng(derive_seed(cfg.seed, detail::motion_stream + job.species, job.index));
            std::normal_distribution<double> normal;
            std::uniform_real_distribution<double> unit(0.0, 1.0);

            ParticleTrack track;
            track.id = j;
            track.species = job.species;
            track.injected_s = job.arrival.t;
            track.stuck = job.arrival.stuck;
            double z = job.arrival.z;
            // Time is counted in whole steps from the start of burn-in to avoid drift in t.
            const auto burn_steps = static_cast<long long>(std::llround(cfg.burn_in_s / dt));
            long long n = static_cast<long long>(std::ceil((job.arrival.t + cfg.burn_in_s) / dt));
            auto time_of = [&](long long k) { return static_cast<double>(k - burn_steps) * dt; };
            std::size_t next_frame = 0;
            auto record_frames = [&](double t_now) {
                while (next_frame < frames &&
                       static_cast<double>(next_frame) * cfg.frame_period_s <= t_now + 0.5 * dt) {
                    if (static_cast<double>(next_frame) * cfg.frame_period_s >= track.injected_s - 0.5 * dt) {
                        track.frame.push_back(next_frame);
                        track.z_um.push_back(z);
                        track.scatter_uW.push_back(profile.scatter_at(z));
                    }
                    ++next_frame;
                }
            };
            const double t_end = cfg.duration_s;
            while (true) {
                const double t = time_of(n);
                if (t > t_end) {
                    break;
                }
                record_frames(t);
                if (next_frame >= frames) {
                    break;
                }
                if (!track.stuck) {
                    z += profile.net_at(z) / gamma * dt + (noise > 0.0 ? noise * normal(rng) : 0.0);
                }
                if (p_detach > 0.0 && unit(rng) < p_detach) {
                    track.removed_s = time_of(n + 1);
                    break;
                }
                if (z < truth.window_min_um || z > truth.window_max_um) {
                    track.removed_s = time_of(n + 1);
                    break;
                }
                ++n;
            }
            truth.tracks[j] = std::move(track);
        },
        workers);
    return truth;
}

/// Intensity matrix I(f, p), row-major with one row per frame.
struct Kymograph {
    std::size_t frames = 0;
    std::size_t pixels = 0;
    std::vector<double> data;
    double pixel_pitch_um = 0.5;
    double frame_period_s = 0.05;
    double origin_um = 0.0;  ///< axial position of pixel 0

    double& at(std::size_t f, std::size_t p) { return data[f * pixels + p]; }
    double at(std::size_t f, std::size_t p) const { return data[f * pixels + p]; }
    std::span<const double> row(std::size_t f) const { return {data.data() + f * pixels, pixels}; }
    double pixel_of(double z_um) const { return (z_um - origin_um) / pixel_pitch_um; }
    double z_of(double pixel) const { return origin_um + pixel * pixel_pitch_um; }
};

struct CameraConfig {
    double fov_min_um = -400.0;
    double fov_max_um = 400.0;
    double pixel_pitch_um = 0.5;
    double psf_sigma_px = 1.5;
    double gain_counts_per_uW = 1.0;
    double background_counts = 10.0;
    double read_noise_counts = 3.0;
    double shot_noise_factor = 1.0;  ///< variance added per count of signal
    std::uint64_t seed = 1;

    void validate() const {
        if (!(pixel_pitch_um > 0.0) || !(fov_max_um > fov_min_um) || !(psf_sigma_px > 0.0)) {
            throw ConfigError("camera needs a positive pitch, PSF width and field of view");
        }
        if (!(gain_counts_per_uW >= 0.0) || !(background_counts >= 0.0) ||
            !(read_noise_counts >= 0.0) || !(shot_noise_factor >= 0.0)) {
            throw ConfigError("camera gain and noise parameters must be non-negative");
        }
    }
    std::size_t pixels() const {
        return static_cast<std::size_t>(std::floor((fov_max_um - fov_min_um) / pixel_pitch_um + 1e-9)) + 1;
    }
};

/// Each particle deposits a Gaussian spot of amplitude gain * scattered power at its pixel; the
/// noise model adds background, read noise and signal-dependent shot noise, clamped at zero.
inline Kymograph render_kymograph(const TrajectoryTruth& truth, const CameraConfig& cam,
                                  unsigned workers = 0) {
    cam.validate();
    Kymograph k;
    k.frames = truth.frames;
    k.pixels = cam.pixels();
    k.pixel_pitch_um = cam.pixel_pitch_um;
    k.frame_period_s = truth.frame_period_s;
    k.origin_um = cam.fov_min_um;
    k.data.assign(k.frames * k.pixels, 0.0);

    // Per-frame lists of (pixel, amplitude).
    std::vector<std::vector<std::pair<double, double>>> spots(k.frames);
    for (const auto& t : truth.tracks) {
        for (std::size_t i = 0; i < t.frame.size(); ++i) {
            spots[t.frame[i]].emplace_back(k.pixel_of(t.z_um[i]), cam.gain_counts_per_uW * t.scatter_uW[i]);
        }
    }
    const double reach = 4.0 * cam.psf_sigma_px;
    const double inv2s2 = 1.0 / (2.0 * cam.psf_sigma_px * cam.psf_sigma_px);
    parallel_for(
        k.frames,
        [&](std::size_t f) {
            double* row = k.data.data() + f * k.pixels;
            for (const auto& [m, a] : spots[f]) {
                const auto lo = static_cast<long long>(std::ceil(m - reach));
                const auto hi = static_cast<long long>(std::floor(m + reach));
                for (long long p = std::max(lo, 0LL); p <= std::min(hi, static_cast<long long>(k.pixels) - 1); ++p) {
                    const double d = static_cast<double>(p) - m;
                    row[p] += a * std::exp(-d * d * inv2s2);
                }
            }
            std::mt19937_64 rng(derive_seed(cam.seed, detail::noise_stream, f));
            std::normal_distribution<double> normal;
            const bool noisy = cam.read_noise_counts > 0.0 || cam.shot_noise_factor > 0.0;
            for (std::size_t p = 0; p < k.pixels; ++p) {
                const double signal = row[p];
                double v = cam.background_counts + signal;
                if (noisy) {
                    v += std::sqrt(cam.read_noise_counts * cam.read_noise_counts +
                                   cam.shot_noise_factor * signal) *
                         normal(rng);
                }
                row[p] = std::max(v, 0.0);
            }
        },
        workers);
    return k;
}

}  // namespace fibersieve
