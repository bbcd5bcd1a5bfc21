#pragma once

#include <numbers>

#include <Eigen/Core>

namespace microtrap {

using Vec3 = Eigen::Vector3d;

namespace constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// CODATA 2018 exact / recommended values, SI
inline constexpr double planck = 6.62607015e-34;
inline constexpr double hbar = planck / two_pi;
inline constexpr double speed_of_light = 299792458.0;
inline constexpr double boltzmann = 1.380649e-23;
inline constexpr double atomic_mass_unit = 1.66053906660e-27;
inline constexpr double standard_gravity = 9.80665;

}  // namespace constants

inline constexpr double kelvin_to_joule(double kelvin) { return kelvin * constants::boltzmann; }
inline constexpr double joule_to_kelvin(double joule) { return joule / constants::boltzmann; }

}  // namespace microtrap
