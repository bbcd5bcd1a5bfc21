#pragma once

#include <string>

namespace microtrap {

/// Spectroscopic data of an alkali species with a D1/D2 doublet. SI units,
/// linewidths as angular frequencies.
struct AtomSpecies {
    double mass = 0.0;
    double d2_wavelength = 0.0;
    double d1_wavelength = 0.0;
    double d2_linewidth = 0.0;
    double d1_linewidth = 0.0;
    double saturation_intensity_d2 = 0.0;
    std::string label;

    /// Throws InvalidInput unless every field is positive and D1 lies red of D2.
    void validate() const;

    /// D1 saturation intensity scaled from the D2 value (I_sat ~ Gamma / lambda^3).
    [[nodiscard]] double saturation_intensity_d1() const;
};

/// Reference data for 85Rb.
AtomSpecies rubidium85();

/// Laser-minus-transition angular frequencies for both lines. Negative is red.
struct Detuning {
    double delta_d2 = 0.0;
    double delta_d1 = 0.0;
    double laser_wavelength = 0.0;
};

Detuning detuning_from_wavelength(const AtomSpecies& species, double laser_wavelength);

/// Laser placed `delta_lambda_below_d2` to the red of the D2 line
/// (laser wavelength = d2_wavelength + offset).
Detuning detuning_from_offset(const AtomSpecies& species, double delta_lambda_below_d2);

/// Light-shift and scattering response per unit intensity, so that
/// U = shift * I and Gamma_sc = scattering * I.
struct LightResponse {
    double shift = 0.0;       // J per (W/m^2)
    double scattering = 0.0;  // 1/s per (W/m^2)
};

/// Two-line rotating-wave response for linear polarization. The D2 line carries
/// weight 1 and the D1 line weight 1/2 (the 2:1 line-strength ratio), so that
/// dropping D1 leaves the two-level result U = hbar Gamma^2 I / (8 I_sat Delta).
LightResponse light_response(const AtomSpecies& species, const Detuning& detuning);

double dipole_potential(const AtomSpecies& species, const Detuning& detuning, double intensity);
double scattering_rate(const AtomSpecies& species, const Detuning& detuning, double intensity);

double recoil_energy(const AtomSpecies& species, double wavelength);
double recoil_frequency(const AtomSpecies& species, double wavelength);
inline double recoil_frequency_d2(const AtomSpecies& species) {
    return recoil_frequency(species, species.d2_wavelength);
}

}  // namespace microtrap
