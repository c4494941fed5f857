#pragma once

// Optical response of a gold nanosphere and the axial push it receives from one
// guided mode. The axial force is extinction cross-section times local intensity
// (n sigma_ext I / c); the radial gradient force is (1/4) Re(alpha) grad|E|^2.

#include <array>
#include <cmath>
#include <complex>
#include <string>

#include "constants.hpp"
#include "errors.hpp"
#include "fiber_modes.hpp"

namespace fibersieve {

enum class PermittivityModel { drude_lorentz, tabulated };
enum class PolarizabilityModel { quasi_static, radiative_dipole, mie_a1 };
enum class Direction { forward = +1, backward = -1 };

inline double sign_of(Direction d) { return d == Direction::forward ? 1.0 : -1.0; }

inline constexpr double gold_window_min_nm = 400.0;
inline constexpr double gold_window_max_nm = 1000.0;

namespace detail {

/// Drude model plus two critical-point terms (Etchegoin, Le Ru & Meyer, J. Chem. Phys. 125,
/// 164705 (2006)); wavelengths in nm.
inline std::complex<double> gold_drude_lorentz(double lambda) {
    using namespace std::complex_literals;
    constexpr double eps_inf = 1.54;
    constexpr double lambda_p = 143.0;
    constexpr double gamma_p = 14500.0;
    struct Pole {
        double amplitude, phase, lambda, gamma;
    };
    constexpr std::array<Pole, 2> poles{{{1.27, -constants::pi / 4, 470.0, 1900.0},
                                         {1.1, -constants::pi / 4, 325.0, 1060.0}}};
    std::complex<double> eps =
        eps_inf - 1.0 / (lambda_p * lambda_p * (1.0 / (lambda * lambda) + 1i / (gamma_p * lambda)));
    for (const auto& p : poles) {
        const auto e_plus = std::exp(1i * p.phase);
        const auto e_minus = std::exp(-1i * p.phase);
        eps += p.amplitude / p.lambda *
               (e_plus / (1.0 / p.lambda - 1.0 / lambda - 1i / p.gamma) +
                e_minus / (1.0 / p.lambda + 1.0 / lambda + 1i / p.gamma));
    }
    return eps;
}

/// Johnson & Christy (Phys. Rev. B 6, 4370 (1972)) gold optical constants: photon energy [eV], n, k.
struct OpticalConstant {
    double energy_eV, n, k;
};
inline constexpr std::array<OpticalConstant, 17> johnson_christy_gold{{
    {1.14, 0.27, 7.150}, {1.26, 0.22, 6.350}, {1.39, 0.17, 5.663}, {1.51, 0.16, 5.083},
    {1.64, 0.14, 4.542}, {1.76, 0.13, 4.103}, {1.88, 0.14, 3.697}, {2.01, 0.21, 3.272},
    {2.13, 0.29, 2.863}, {2.26, 0.43, 2.455}, {2.38, 0.62, 2.081}, {2.50, 1.04, 1.833},
    {2.63, 1.31, 1.849}, {2.75, 1.38, 1.914}, {2.88, 1.45, 1.948}, {3.00, 1.46, 1.958},
    {3.12, 1.47, 1.952},
}};

inline std::complex<double> gold_tabulated(double lambda) {
    const double energy = 1239.84193 / lambda;
    const auto& t = johnson_christy_gold;
    std::size_t i = 1;
    while (i + 1 < t.size() && t[i].energy_eV < energy) {
        ++i;
    }
    const double s = (energy - t[i - 1].energy_eV) / (t[i].energy_eV - t[i - 1].energy_eV);
    const double n = t[i - 1].n + s * (t[i].n - t[i - 1].n);
    const double k = t[i - 1].k + s * (t[i].k - t[i - 1].k);
    const std::complex<double> index{n, k};
    return index * index;
}

}  // namespace detail

/// Relative permittivity of gold at a vacuum wavelength in [400, 1000] nm.
inline std::complex<double> gold_permittivity(double wavelength_nm,
                                              PermittivityModel model = PermittivityModel::drude_lorentz) {
    if (!(wavelength_nm >= gold_window_min_nm && wavelength_nm <= gold_window_max_nm)) {
        throw RangeError("gold_permittivity: wavelength " + std::to_string(wavelength_nm) +
                         " nm outside 400-1000 nm");
    }
    return model == PermittivityModel::drude_lorentz ? detail::gold_drude_lorentz(wavelength_nm)
                                                     : detail::gold_tabulated(wavelength_nm);
}

struct ParticleSpec {
    double diameter_nm = 100.0;
    PermittivityModel permittivity = PermittivityModel::drude_lorentz;
    PolarizabilityModel polarizability = PolarizabilityModel::mie_a1;
    double medium_index = constants::water_index;
    /// Gap between particle surface and fiber surface; negative values push the sphere into the fiber.
    double surface_gap_nm = 0.0;

    double radius_nm() const { return 0.5 * diameter_nm; }

    void validate() const {
        if (!(diameter_nm > 0.0)) {
            throw ConfigError("particle: diameter_nm must be positive");
        }
        if (!(medium_index > 0.0)) {
            throw ConfigError("particle: medium_index must be positive");
        }
    }
};

struct OpticalResponse {
    double wavelength_nm = 0.0;
    std::complex<double> alpha{0.0, 0.0};  ///< p = eps0 eps_m alpha E [nm^3]
    double sigma_abs = 0.0;                ///< [nm^2]
    double sigma_scat = 0.0;
    double sigma_ext = 0.0;
};

/// Polarizability and cross-sections of a sphere with permittivity eps_p in a medium eps_m.
/// `wavelength_nm` is the vacuum wavelength.
inline OpticalResponse sphere_response(std::complex<double> eps_p, double eps_m, double radius_nm,
                                       double wavelength_nm, PolarizabilityModel model) {
    using namespace std::complex_literals;
    const double k = 2.0 * constants::pi * std::sqrt(eps_m) / wavelength_nm;
    const double k3 = k * k * k;
    const double volume_factor = 4.0 * constants::pi * std::pow(radius_nm, 3);
    OpticalResponse r;
    r.wavelength_nm = wavelength_nm;
    if (eps_p == std::complex<double>(eps_m, 0.0)) {
        return r;
    }

    switch (model) {
        case PolarizabilityModel::quasi_static: {
            const auto denom = eps_p + 2.0 * eps_m;
            if (std::abs(denom) < 1e-9 * eps_m) {
                throw ResonanceError("quasi-static polarizability: eps_p + 2 eps_m = 0");
            }
            r.alpha = volume_factor * (eps_p - eps_m) / denom;
            const auto inv0 = 1.0 / r.alpha;
            r.sigma_scat = k3 * k * std::norm(r.alpha) / (6.0 * constants::pi);
            r.sigma_abs = -k * std::norm(r.alpha) * std::imag(inv0);
            r.sigma_ext = k * std::imag(r.alpha);
            return r;
        }
        case PolarizabilityModel::radiative_dipole: {
            // 1/alpha = 1/alpha0 - i k^3 / 6 pi stays finite on the Froehlich pole.
            const auto inv0 = (eps_p + 2.0 * eps_m) / (volume_factor * (eps_p - eps_m));
            r.alpha = 1.0 / (inv0 - 1i * k3 / (6.0 * constants::pi));
            r.sigma_scat = k3 * k * std::norm(r.alpha) / (6.0 * constants::pi);
            r.sigma_abs = -k * std::norm(r.alpha) * std::imag(inv0);
            r.sigma_ext = k * std::imag(r.alpha);
            return r;
        }
        case PolarizabilityModel::mie_a1: {
            // First electric Mie coefficient from n = 1 Riccati-Bessel functions.
            const double x = k * radius_nm;
            const std::complex<double> m = std::sqrt(eps_p / eps_m);
            const std::complex<double> mx = m * x;
            auto psi = [](std::complex<double> z) { return std::sin(z) / z - std::cos(z); };
            auto dpsi = [](std::complex<double> z) {
                return std::cos(z) / z - std::sin(z) / (z * z) + std::sin(z);
            };
            // xi_1 = psi_1 - i chi_1 with chi_1(z) = cos z / z + sin z (= -z y_1(z)).
            auto xi = [&](double z) {
                const std::complex<double> zz{z, 0.0};
                return psi(zz) - 1i * (std::cos(zz) / zz + std::sin(zz));
            };
            auto dxi = [&](double z) {
                const std::complex<double> zz{z, 0.0};
                const auto dchi = -std::sin(zz) / zz - std::cos(zz) / (zz * zz) + std::cos(zz);
                return dpsi(zz) - 1i * dchi;
            };
            const auto a1 = (m * psi(mx) * dpsi(x) - psi(x) * dpsi(mx)) /
                            (m * psi(mx) * dxi(x) - xi(x) * dpsi(mx));
            r.alpha = 6.0 * constants::pi * 1i * a1 / k3;
            const double c = 6.0 * constants::pi / (k * k);
            r.sigma_ext = c * std::real(a1);
            r.sigma_scat = c * std::norm(a1);
            r.sigma_abs = r.sigma_ext - r.sigma_scat;
            return r;
        }
    }
    throw ConfigError("unknown polarizability model");
}

/// Optical response of a gold sphere at a vacuum wavelength.
inline OpticalResponse polarizability(const ParticleSpec& particle, double wavelength_nm) {
    particle.validate();
    const auto eps = gold_permittivity(wavelength_nm, particle.permittivity);
    const double eps_m = particle.medium_index * particle.medium_index;
    return sphere_response(eps, eps_m, particle.radius_nm(), wavelength_nm, particle.polarizability);
}

struct ForceComponents {
    double axial_pN = 0.0;     ///< signed along z
    double gradient_pN = 0.0;  ///< radial, positive toward the fiber surface
    double wavelength_nm = 0.0;
    Direction direction = Direction::forward;
    double local_intensity_per_W = 0.0;  ///< at the particle centre [1/um^2]
    double scattered_uW = 0.0;           ///< sigma_scat * I * P [uW]
};

/// Distance of the particle centre from the fiber axis [nm].
inline double particle_center_radius(const ParticleSpec& particle, const ModeSolution& mode) {
    const double r = mode.radius_nm() + particle.radius_nm() + particle.surface_gap_nm;
    if (r < mode.radius_nm()) {
        throw GeometryError("particle centre lies inside the fiber");
    }
    return r;
}

/// Forces on a particle touching the fiber at azimuth `azimuth_rad` from the polarisation
/// axis, from a mode carrying `guided_power_mW` and propagating in `direction`.
inline ForceComponents axial_force(const ParticleSpec& particle, const ModeSolution& mode,
                                   const OpticalResponse& response, double guided_power_mW,
                                   Direction direction, double azimuth_rad = 0.0) {
    if (!(guided_power_mW >= 0.0)) {
        throw ConfigError("axial_force: guided power must be non-negative");
    }
    const double r = particle_center_radius(particle, mode);
    const double i_per_W = field_intensity(mode, r, azimuth_rad);
    const double n = particle.medium_index;
    const double power_W = guided_power_mW * 1e-3;
    // I [1/um^2 per W] -> W/m^2 : * 1e12 * P ; sigma nm^2 -> m^2 : * 1e-18 ; N -> pN : * 1e12
    const double intensity_SI = i_per_W * 1e12 * power_W;
    ForceComponents f;
    f.wavelength_nm = mode.wavelength_nm;
    f.direction = direction;
    f.local_intensity_per_W = i_per_W;
    f.axial_pN = sign_of(direction) * n * response.sigma_ext * 1e-18 * intensity_SI /
                 constants::speed_of_light * 1e12;
    // F_grad = (n / 2c) Re(alpha) dI/dr, directed toward decreasing r.
    const double h = 0.5;
    const double r_in = std::max(r - h, mode.radius_nm());
    const double di_dr = (field_intensity(mode, r + h, azimuth_rad) - field_intensity(mode, r_in, azimuth_rad)) /
                         (r + h - r_in) * 1e12 / 1e-9;  // 1/m^3 per W
    f.gradient_pN = -n / (2.0 * constants::speed_of_light) * std::real(response.alpha) * 1e-27 *
                    di_dr * power_W * 1e12;
    f.scattered_uW = response.sigma_scat * 1e-18 * intensity_SI * 1e6;
    return f;
}

inline ForceComponents axial_force(const ParticleSpec& particle, const ModeSolution& mode,
                                   double guided_power_mW, Direction direction) {
    return axial_force(particle, mode, polarizability(particle, mode.wavelength_nm), guided_power_mW,
                       direction);
}

/// R = F(forward wavelength) / F(backward wavelength) at equal unit powers on a fiber of
/// diameter `diameter_nm` (magnitudes).
inline double force_ratio(const ParticleSpec& particle, const FiberSpec& fiber, double diameter_nm,
                          double forward_wavelength_nm = 640.0, double backward_wavelength_nm = 785.0) {
    const auto m1 = solve_he11(fiber, diameter_nm, forward_wavelength_nm);
    const auto m2 = solve_he11(fiber, diameter_nm, backward_wavelength_nm);
    const double f1 = std::abs(axial_force(particle, m1, 1.0, Direction::forward).axial_pN);
    const double f2 = std::abs(axial_force(particle, m2, 1.0, Direction::backward).axial_pN);
    if (!(f2 > 0.0)) {
        throw NumericError("force_ratio: backward force vanishes");
    }
    return f1 / f2;
}

}  // namespace fibersieve
