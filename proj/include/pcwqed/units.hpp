// units.hpp: physical constants and the single linear <-> angular conversion point

#pragma once

#include <numbers>

namespace pcwqed::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Speed of light in nm * THz.
inline constexpr double c_nm_thz = 299792.458;

// Cs D1 free-space linewidth, Gamma0 = 2 pi x 4.56 MHz.
inline constexpr double gamma0_mhz = 4.56;
inline constexpr double cs_d1_thz = 335.116;

// Rates at the API boundary are in units of Gamma0 and detunings in linear MHz.
// Internally everything is an angular rate in rad/us (2 pi x MHz).
inline constexpr double angular_from_mhz(double mhz) noexcept { return two_pi * mhz; }
inline constexpr double mhz_from_angular(double w) noexcept { return w / two_pi; }
inline constexpr double angular_from_gamma0(double g) noexcept { return g * two_pi * gamma0_mhz; }
inline constexpr double gamma0_from_angular(double w) noexcept { return w / (two_pi * gamma0_mhz); }
inline constexpr double gamma0_from_mhz(double mhz) noexcept { return mhz / gamma0_mhz; }
inline constexpr double mhz_from_gamma0(double g) noexcept { return g * gamma0_mhz; }

inline constexpr double thz_from_ghz(double ghz) noexcept { return ghz * 1e-3; }
inline constexpr double ghz_from_thz(double thz) noexcept { return thz * 1e3; }

} // namespace pcwqed::units
