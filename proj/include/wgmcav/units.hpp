#ifndef WGMCAV_UNITS_HPP
#define WGMCAV_UNITS_HPP

#include <numbers>

/// Unit conventions used across the library: lengths in micrometres,
/// frequencies in THz, times in ps, cavity-QED rates in GHz (ν = ω/2π).
namespace wgmcav::units
{
/// Speed of light in μm/ps, so that ν[THz] = kSpeedOfLight / λ[μm].
inline constexpr double kSpeedOfLight = 299.792458;

inline constexpr double kPi = std::numbers::pi;

constexpr double frequency_thz(double wavelength_um) { return kSpeedOfLight / wavelength_um; }
constexpr double wavelength_um(double frequency_thz) { return kSpeedOfLight / frequency_thz; }

/// Engine time unit is μm/c; these convert to and from picoseconds.
constexpr double engine_time_to_ps(double t) { return t / kSpeedOfLight; }
constexpr double ps_to_engine_time(double t) { return t * kSpeedOfLight; }

/// Engine frequency unit is c/μm (cycles per μm of light travel).
constexpr double thz_to_engine_frequency(double nu) { return nu / kSpeedOfLight; }
constexpr double engine_frequency_to_thz(double f) { return f * kSpeedOfLight; }

} // namespace wgmcav::units

#endif // WGMCAV_UNITS_HPP
