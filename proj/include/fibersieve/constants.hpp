#pragma once

#include <numbers>

namespace fibersieve::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double speed_of_light = 299792458.0;           // m/s
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double vacuum_impedance = 376.730313668;        // ohm
inline constexpr double boltzmann = 1.380649e-23;                // J/K

inline constexpr double room_temperature = 293.0;  // K
inline constexpr double water_viscosity = 1.0e-3;  // Pa s

inline constexpr double silica_index = 1.45;
inline constexpr double water_index = 1.33;

/// k_B T in pN um (1 pN um = 1e-18 J).
constexpr double thermal_energy_pN_um(double temperature_K) {
    return boltzmann * temperature_K * 1e18;
}

}  // namespace fibersieve::constants
