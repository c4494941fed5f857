#pragma once

// Fundamental HE11 mode of a step-index cylindrical fiber (silica core, water
// cladding). The exact hybrid-mode characteristic equation is solved; the
// weakly-guiding LP approximation is not accurate for an index step of 0.12.
//
// Field convention: exp(i(beta z - omega t)), azimuthal order l = +1 for the
// circular basis mode. The x-polarised (quasi-linear) mode is the normalised
// sum of the l = +1 and l = -1 circular modes. All lengths in nm unless the
// name says otherwise.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "numerics.hpp"

namespace fibersieve {

struct FiberSpec {
    double core_index = constants::silica_index;
    double medium_index = constants::water_index;
    double waist_diameter_nm = 550.0;
    double waist_length_um = 200.0;
    double taper_slope_nm_per_um = 2.0;

    void validate() const {
        if (!(medium_index > 1.0 && core_index > medium_index)) {
            throw ConfigError("fiber: require core_index > medium_index > 1");
        }
        if (!(waist_diameter_nm > 0.0)) {
            throw ConfigError("fiber: waist_diameter_nm must be positive");
        }
        if (!(waist_length_um >= 0.0)) {
            throw ConfigError("fiber: waist_length_um must be non-negative");
        }
        if (!(taper_slope_nm_per_um >= 0.0)) {
            throw ConfigError("fiber: taper_slope_nm_per_um must be non-negative");
        }
    }

    double numerical_aperture() const {
        return std::sqrt(core_index * core_index - medium_index * medium_index);
    }

    /// Normalised frequency V = pi d NA / lambda.
    double v_number(double diameter_nm, double wavelength_nm) const {
        return constants::pi * diameter_nm * numerical_aperture() / wavelength_nm;
    }
};

struct ModeSolverOptions {
    std::size_t scan_points = 2000;
    double residual_tolerance = 1e-10;
    double quadrature_tolerance = 1e-6;
    bool normalize = true;
};

struct ModeSolution {
    double wavelength_nm = 0.0;
    double diameter_nm = 0.0;
    double core_index = 0.0;
    double medium_index = 0.0;
    double effective_index = 0.0;
    double propagation_constant = 0.0;  ///< beta [rad/nm]
    double core_wavenumber = 0.0;       ///< h = sqrt(k0^2 n1^2 - beta^2) [1/nm]
    double exterior_decay = 0.0;        ///< q = sqrt(beta^2 - k0^2 n2^2) [1/nm]
    /// Z0 Hz / Ez amplitude ratio of the l = +1 mode (purely imaginary).
    std::complex<double> hz_ratio{0.0, 0.0};
    /// Ez amplitude [V/m at unit guided power once normalised].
    double amplitude = 1.0;
    double residual = 0.0;
    bool normalized = false;

    double radius_nm() const { return 0.5 * diameter_nm; }
    double free_space_wavenumber() const { return 2.0 * constants::pi / wavelength_nm; }
};

namespace detail {

inline double bessel_j(int n, double x) { return std::cyl_bessel_j(static_cast<double>(n), x); }
inline double bessel_k(int n, double x) { return std::cyl_bessel_k(static_cast<double>(n), x); }
inline double bessel_j1_prime(double x) { return bessel_j(0, x) - bessel_j(1, x) / x; }
inline double bessel_k1_prime(double x) { return -bessel_k(0, x) - bessel_k(1, x) / x; }

struct CharacteristicTerms {
    double value = 0.0;
    double scale = 0.0;  ///< sum of term magnitudes, for a scale-free residual
};

/// HE-branch characteristic function multiplied through by J1(u) so it has no poles.
inline CharacteristicTerms he_characteristic_terms(double n_eff, double diameter_nm,
                                                   double wavelength_nm, double n1, double n2) {
    const double k0 = 2.0 * constants::pi / wavelength_nm;
    const double a = 0.5 * diameter_nm;
    const double u = a * k0 * std::sqrt(n1 * n1 - n_eff * n_eff);
    const double w = a * k0 * std::sqrt(n_eff * n_eff - n2 * n2);
    const double k_ratio = bessel_k1_prime(w) / (w * bessel_k(1, w));
    const double n1sq = n1 * n1;
    const double n2sq = n2 * n2;
    const double geo = 1.0 / (u * u) + 1.0 / (w * w);
    const double r = std::sqrt(std::pow((n1sq - n2sq) / (2.0 * n1sq) * k_ratio, 2) +
                               std::pow(n_eff / n1, 2) * geo * geo);
    const double t0 = bessel_j(0, u) / u;
    const double j1 = bessel_j(1, u);
    const double t1 = (n1sq + n2sq) / (2.0 * n1sq) * k_ratio;
    const double t2 = -1.0 / (u * u);
    return {t0 + j1 * (t1 + t2 + r),
            std::abs(t0) + std::abs(j1) * (std::abs(t1) + std::abs(t2) + std::abs(r))};
}

inline double he_characteristic(double n_eff, double diameter_nm, double wavelength_nm, double n1,
                                double n2) {
    return he_characteristic_terms(n_eff, diameter_nm, wavelength_nm, n1, n2).value;
}

/// Cylindrical components (E_r, E_phi, E_z, Z0 H_r, Z0 H_phi) of the l = +1 mode at radius r,
/// without the exp(i phi) factor.
struct CircularFields {
    std::complex<double> e_r, e_phi, e_z, h_r, h_phi;
};

inline CircularFields circular_fields(const ModeSolution& m, double r, std::complex<double> A,
                                      std::complex<double> B) {
    using namespace std::complex_literals;
    const double k0 = m.free_space_wavenumber();
    const double beta = m.propagation_constant;
    const double a = m.radius_nm();

    std::complex<double> ez, ezp, hz, hzp;
    double kappa2 = 0.0;
    double n = 0.0;
    if (r < a) {
        const double h = m.core_wavenumber;
        kappa2 = h * h;
        n = m.core_index;
        const double j1 = bessel_j(1, h * r);
        const double j1p = bessel_j1_prime(h * r);
        ez = A * j1;
        ezp = A * h * j1p;
        hz = B * j1;
        hzp = B * h * j1p;
    } else {
        const double q = m.exterior_decay;
        kappa2 = -q * q;
        n = m.medium_index;
        const double c = bessel_j(1, m.core_wavenumber * a) / bessel_k(1, q * a);
        const double k1 = bessel_k(1, q * r);
        const double k1p = bessel_k1_prime(q * r);
        ez = A * c * k1;
        ezp = A * c * q * k1p;
        hz = B * c * k1;
        hzp = B * c * q * k1p;
    }
    const std::complex<double> f = 1i / kappa2;
    const double n2 = n * n;
    CircularFields out;
    out.e_r = f * (beta * ezp + 1i * k0 * hz / r);
    out.e_phi = f * (1i * beta * ez / r - k0 * hzp);
    out.e_z = ez;
    out.h_r = f * (beta * hzp - 1i * k0 * n2 * ez / r);
    out.h_phi = f * (1i * beta * hz / r + k0 * n2 * ezp);
    return out;
}

/// Z0 Hz / Ez ratio that makes E_phi continuous at the core boundary.
inline std::complex<double> matched_hz_ratio(const ModeSolution& m) {
    const double a = m.radius_nm();
    const double in = a * (1.0 - 1e-12);
    const auto ea = circular_fields(m, in, 1.0, 0.0).e_phi - circular_fields(m, a, 1.0, 0.0).e_phi;
    const auto eb = circular_fields(m, in, 0.0, 1.0).e_phi - circular_fields(m, a, 0.0, 1.0).e_phi;
    return -ea / eb;
}

/// Fields of the mode as scaled by its current amplitude.
inline CircularFields mode_fields(const ModeSolution& m, double r) {
    return circular_fields(m, r, m.amplitude, m.amplitude * m.hz_ratio);
}

/// Axial Poynting flux density integrand 2 pi r S_z for the circular mode [W per nm of radius].
inline double poynting_integrand(const ModeSolution& m, double r) {
    const auto f = mode_fields(m, r);
    const double s = std::real(f.e_r * std::conj(f.h_phi) - f.e_phi * std::conj(f.h_r));
    // (1/2Z0) Re(E x (Z0 H)*) . z, area element 2 pi r dr with r in nm -> 1e-18 m^2.
    return 0.5 / constants::vacuum_impedance * s * 2.0 * constants::pi * r * 1e-18;
}

}  // namespace detail

/// Guided power [W] carried by the mode as currently scaled, by adaptive Gauss-Kronrod quadrature.
inline double guided_power(const ModeSolution& mode, double rel_tol = 1e-6) {
    using boost::math::quadrature::gauss_kronrod;
    const double a = mode.radius_nm();
    auto f = [&](double r) { return detail::poynting_integrand(mode, r); };
    const double inner = gauss_kronrod<double, 31>::integrate(f, 0.0, a, 15, rel_tol);
    const double outer_end = a + 40.0 / mode.exterior_decay;
    const double outer = gauss_kronrod<double, 31>::integrate(f, a, outer_end, 15, rel_tol);
    return inner + outer;
}

/// Solves the exact HE11 characteristic equation at one (diameter, wavelength).
/// Throws ModeCutoffError if no root is bracketed in (medium_index, core_index).
inline ModeSolution solve_he11(const FiberSpec& fiber, double diameter_nm, double wavelength_nm,
                               const ModeSolverOptions& opts = {}) {
    if (!(wavelength_nm > 0.0) || !(diameter_nm > 0.0)) {
        throw ConfigError("solve_he11: wavelength and diameter must be positive");
    }
    const double n1 = fiber.core_index;
    const double n2 = fiber.medium_index;
    if (!(n1 > n2 && n2 > 1.0)) {
        throw ConfigError("solve_he11: require core_index > medium_index > 1");
    }
    auto g = [&](double n_eff) {
        return detail::he_characteristic(n_eff, diameter_nm, wavelength_nm, n1, n2);
    };

    // Scan downward from the core index; the first sign change is the fundamental branch.
    const std::size_t n = std::max<std::size_t>(opts.scan_points, 16);
    const double lo = n2 * (1.0 + 1e-9);
    const double hi = n1 * (1.0 - 1e-13);
    double upper = hi;
    double g_upper = g(upper);
    bool found = false;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double x = hi - (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        const double gx = g(x);
        if (std::isfinite(gx) && std::isfinite(g_upper) && (gx == 0.0 || (gx < 0.0) != (g_upper < 0.0))) {
            bracket_lo = x;
            bracket_hi = upper;
            found = true;
            break;
        }
        upper = x;
        g_upper = gx;
    }
    if (!found) {
        throw ModeCutoffError("mode cutoff: no HE11 root bracketed for d = " +
                              std::to_string(diameter_nm) + " nm, lambda = " +
                              std::to_string(wavelength_nm) + " nm");
    }

    std::uintmax_t max_iter = 200;
    const auto root = boost::math::tools::bisect(
        g, bracket_lo, bracket_hi,
        [](double a, double b) { return std::abs(b - a) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(a); },
        max_iter);
    const double n_eff = 0.5 * (root.first + root.second);
    const auto terms = detail::he_characteristic_terms(n_eff, diameter_nm, wavelength_nm, n1, n2);
    const double residual = std::abs(terms.value) / terms.scale;
    if (max_iter >= 200 || residual > opts.residual_tolerance) {
        throw SolverError("solve_he11: characteristic equation did not converge", residual);
    }

    ModeSolution m;
    m.wavelength_nm = wavelength_nm;
    m.diameter_nm = diameter_nm;
    m.core_index = n1;
    m.medium_index = n2;
    m.effective_index = n_eff;
    const double k0 = m.free_space_wavenumber();
    m.propagation_constant = n_eff * k0;
    m.core_wavenumber = k0 * std::sqrt(n1 * n1 - n_eff * n_eff);
    m.exterior_decay = k0 * std::sqrt(n_eff * n_eff - n2 * n2);
    m.residual = residual;
    m.hz_ratio = detail::matched_hz_ratio(m);
    if (opts.normalize) {
        const double p = guided_power(m, opts.quadrature_tolerance);
        if (!(p > 0.0) || !std::isfinite(p)) {
            throw NumericError("solve_he11: non-positive guided power during normalisation");
        }
        m.amplitude = 1.0 / std::sqrt(p);
        m.normalized = true;
    }
    return m;
}

/// Cylindrical field components of the x-polarised mode at (r, phi) relative to the
/// polarisation axis, in V/m at 1 W of guided power.
struct LinearFieldMagnitudes {
    double e_r2 = 0.0;
    double e_phi2 = 0.0;
    double e_z2 = 0.0;
    double total() const { return e_r2 + e_phi2 + e_z2; }
};

inline LinearFieldMagnitudes linear_field(const ModeSolution& mode, double r_nm, double phi_rad) {
    if (!mode.normalized) {
        throw ConfigError("field evaluation requires a mode normalised to unit guided power");
    }
    if (!(r_nm >= 0.0)) {
        throw ConfigError("field evaluation requires r >= 0");
    }
    const double r = std::max(r_nm, 1e-9 * mode.radius_nm());
    const auto f = detail::mode_fields(mode, r);
    const double c2 = std::cos(phi_rad) * std::cos(phi_rad);
    const double s2 = 1.0 - c2;
    LinearFieldMagnitudes out;
    out.e_r2 = 2.0 * std::norm(f.e_r) * c2;
    out.e_phi2 = 2.0 * std::norm(f.e_phi) * s2;
    out.e_z2 = 2.0 * std::norm(f.e_z) * c2;
    return out;
}

/// Local intensity n |E|^2 / (2 Z0) of the x-polarised mode per watt of guided power [1/um^2].
/// `phi_rad` is measured from the polarisation axis; `guided_power_W` scales linearly.
inline double field_intensity(const ModeSolution& mode, double r_nm, double phi_rad,
                              double guided_power_W = 1.0) {
    const double n = r_nm < mode.radius_nm() ? mode.core_index : mode.medium_index;
    const double e2 = linear_field(mode, r_nm, phi_rad).total();
    return guided_power_W * n * e2 / (2.0 * constants::vacuum_impedance) * 1e-12;
}

/// Intensity just outside the fiber surface on the polarisation axis [1/um^2 per W].
inline double surface_intensity(const ModeSolution& mode) {
    return field_intensity(mode, mode.radius_nm(), 0.0);
}

struct SurfaceIntensityCurve {
    std::vector<double> diameters_nm;
    std::vector<double> wavelengths_nm;
    /// intensity[w][i]: per-W surface intensity [1/um^2]; NaN where the mode is cut off.
    std::vector<std::vector<double>> intensity;
    /// guided[w][i] is false at cut-off points (the explicit truncation marker).
    std::vector<std::vector<bool>> guided;

    bool truncated() const {
        for (const auto& g : guided) {
            for (bool b : g) {
                if (!b) {
                    return true;
                }
            }
        }
        return false;
    }
};

inline SurfaceIntensityCurve surface_intensity_curve(const FiberSpec& fiber,
                                                     const std::vector<double>& wavelengths_nm,
                                                     double d_min_nm, double d_max_nm,
                                                     double step_nm = 5.0, unsigned workers = 0) {
    if (wavelengths_nm.empty()) {
        throw ConfigError("surface_intensity_curve: no wavelengths");
    }
    if (!(d_min_nm > 0.0 && d_max_nm >= d_min_nm && step_nm > 0.0)) {
        throw ConfigError("surface_intensity_curve: invalid diameter range");
    }
    SurfaceIntensityCurve c;
    c.wavelengths_nm = wavelengths_nm;
    const auto count = static_cast<std::size_t>(std::floor((d_max_nm - d_min_nm) / step_nm + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
        c.diameters_nm.push_back(d_min_nm + step_nm * static_cast<double>(i));
    }
    const std::size_t nw = wavelengths_nm.size();
    c.intensity.assign(nw, std::vector<double>(count, std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::vector<char>> guided(nw, std::vector<char>(count, 0));
    parallel_for(
        nw * count,
        [&](std::size_t k) {
            const std::size_t w = k / count;
            const std::size_t i = k % count;
            try {
                const auto mode = solve_he11(fiber, c.diameters_nm[i], wavelengths_nm[w]);
                c.intensity[w][i] = surface_intensity(mode);
                guided[w][i] = 1;
            } catch (const ModeCutoffError&) {
            }
        },
        workers);
    for (const auto& g : guided) {
        c.guided.emplace_back(g.begin(), g.end());
    }
    return c;
}

/// Diameter where two wavelengths' surface intensities are equal, refined by bisection on the
/// continuous intensity difference inside [d_lo, d_hi]. Both ends must bracket a sign change.
inline double intensity_crossover(const FiberSpec& fiber, double wavelength_a_nm,
                                  double wavelength_b_nm, double d_lo_nm, double d_hi_nm,
                                  double tol_nm = 1e-3) {
    auto diff = [&](double d) {
        return surface_intensity(solve_he11(fiber, d, wavelength_a_nm)) -
               surface_intensity(solve_he11(fiber, d, wavelength_b_nm));
    };
    double f_lo = diff(d_lo_nm);
    const double f_hi = diff(d_hi_nm);
    if ((f_lo < 0.0) == (f_hi < 0.0)) {
        throw NumericError("intensity_crossover: interval does not bracket a crossover");
    }
    while (d_hi_nm - d_lo_nm > tol_nm) {
        const double mid = 0.5 * (d_lo_nm + d_hi_nm);
        const double f_mid = diff(mid);
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            d_lo_nm = mid;
            f_lo = f_mid;
        } else {
            d_hi_nm = mid;
        }
    }
    return 0.5 * (d_lo_nm + d_hi_nm);
}

}  // namespace fibersieve
