#include "microtrap/atoms.hpp"

#include <cmath>
#include <string>

#include "microtrap/constants.hpp"
#include "microtrap/errors.hpp"

namespace microtrap {

using namespace constants;

void AtomSpecies::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw InvalidInput(std::string("species field '") + name + "' must be positive");
    };
    positive(mass, "mass");
    positive(d2_wavelength, "d2_wavelength");
    positive(d1_wavelength, "d1_wavelength");
    positive(d2_linewidth, "d2_linewidth");
    positive(d1_linewidth, "d1_linewidth");
    positive(saturation_intensity_d2, "saturation_intensity_d2");
    if (!(d1_wavelength > d2_wavelength))
        throw InvalidInput("species: d1_wavelength must exceed d2_wavelength");
}

double AtomSpecies::saturation_intensity_d1() const {
    const double ratio = d2_wavelength / d1_wavelength;
    return saturation_intensity_d2 * (d1_linewidth / d2_linewidth) * ratio * ratio * ratio;
}

AtomSpecies rubidium85() {
    AtomSpecies rb;
    rb.label = "Rb-85";
    rb.mass = 84.9118 * atomic_mass_unit;
    rb.d2_wavelength = 780.24e-9;
    rb.d1_wavelength = 794.98e-9;
    rb.d2_linewidth = two_pi * 6.07e6;
    rb.d1_linewidth = two_pi * 5.75e6;
    rb.saturation_intensity_d2 = 16.7;
    return rb;
}

Detuning detuning_from_wavelength(const AtomSpecies& species, double laser_wavelength) {
    if (!(laser_wavelength > 0.0) || !std::isfinite(laser_wavelength))
        throw InvalidInput("laser wavelength must be positive");
    Detuning d;
    d.laser_wavelength = laser_wavelength;
    // Exact subtraction when the laser sits on a line keeps the resonance check meaningful.
    d.delta_d2 = laser_wavelength == species.d2_wavelength
                     ? 0.0
                     : two_pi * speed_of_light * (1.0 / laser_wavelength - 1.0 / species.d2_wavelength);
    d.delta_d1 = laser_wavelength == species.d1_wavelength
                     ? 0.0
                     : two_pi * speed_of_light * (1.0 / laser_wavelength - 1.0 / species.d1_wavelength);
    return d;
}

Detuning detuning_from_offset(const AtomSpecies& species, double delta_lambda_below_d2) {
    const double laser = species.d2_wavelength + delta_lambda_below_d2;
    if (!(laser > 0.0)) throw InvalidInput("detuning offset gives a non-positive laser wavelength");
    return detuning_from_wavelength(species, laser);
}

LightResponse light_response(const AtomSpecies& species, const Detuning& detuning) {
    if (detuning.delta_d2 == 0.0 || detuning.delta_d1 == 0.0)
        throw ResonantLightError("resonant light: detuning from a D line is zero, light shift diverges");

    const double g2 = species.d2_linewidth;
    const double g1 = species.d1_linewidth;
    const double is2 = species.saturation_intensity_d2;
    const double is1 = species.saturation_intensity_d1();
    constexpr double d1_weight = 0.5;

    LightResponse r;
    r.shift = hbar / 8.0 * (g2 * g2 / (is2 * detuning.delta_d2) + d1_weight * g1 * g1 / (is1 * detuning.delta_d1));
    r.scattering = 1.0 / 8.0 *
                   (g2 * g2 * g2 / (is2 * detuning.delta_d2 * detuning.delta_d2) +
                    d1_weight * g1 * g1 * g1 / (is1 * detuning.delta_d1 * detuning.delta_d1));
    return r;
}

double dipole_potential(const AtomSpecies& species, const Detuning& detuning, double intensity) {
    if (intensity < 0.0) throw InvalidInput("intensity must be non-negative");
    return light_response(species, detuning).shift * intensity;
}

double scattering_rate(const AtomSpecies& species, const Detuning& detuning, double intensity) {
    if (intensity < 0.0) throw InvalidInput("intensity must be non-negative");
    return light_response(species, detuning).scattering * intensity;
}

double recoil_energy(const AtomSpecies& species, double wavelength) {
    if (!(wavelength > 0.0)) throw InvalidInput("recoil wavelength must be positive");
    if (!(species.mass > 0.0)) throw InvalidInput("species mass must be positive");
    const double k = two_pi / wavelength;
    return hbar * hbar * k * k / (2.0 * species.mass);
}

double recoil_frequency(const AtomSpecies& species, double wavelength) {
    return recoil_energy(species, wavelength) / planck;
}

}  // namespace microtrap
