#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "microtrap/constants.hpp"

namespace microtrap {

enum class Polarization { H, V };
enum class TiltAxis { Vertical, Horizontal };

std::string_view to_string(Polarization p);

/// Paraxial validity bound on illumination tilt, enforced everywhere.
inline constexpr double max_tilt_angle = 0.2;

/// Microlens array. Lenslet (row, col) is 1-based; row 1 is the top row and
/// maps to the most negative y. The array is centred on the optical axis.
struct LensArrayGeometry {
    double pitch = 125e-6;
    double focal_length = 625e-6;
    int rows = 50;
    int cols = 50;
    std::vector<char> illuminated;      // rows*cols, row-major
    double transmission = 1.0;          // lumped diffraction efficiency
    double envelope_waist = 0.0;        // Gaussian illumination 1/e^2 radius; 0 = uniform
    TiltAxis tilt_axis = TiltAxis::Vertical;

    static LensArrayGeometry fully_illuminated(int rows, int cols, double pitch, double focal_length);

    [[nodiscard]] bool is_illuminated(int row, int col) const;
    void set_illuminated(int row, int col, bool on);
    [[nodiscard]] std::size_t illuminated_count() const;
    /// Lenslet centre in the focal plane for an untilted beam.
    [[nodiscard]] Vec3 lenslet_focus(int row, int col) const;
    void validate() const;
};

struct IlluminationBeam {
    double total_power = 0.0;
    double wavelength = 0.0;
    double tilt_angle = 0.0;
    Polarization polarization = Polarization::H;
    double focus_waist = 7e-6;
    int array_id = 1;

    void validate() const;
};

struct FocusSite {
    std::size_t site_id = 0;
    Vec3 center = Vec3::Zero();
    double waist = 0.0;
    double power = 0.0;
    double wavelength = 0.0;
    Polarization polarization = Polarization::H;
    int array_id = 1;
    int row = 0;
    int col = 0;

    [[nodiscard]] double rayleigh_range() const { return constants::pi * waist * waist / wavelength; }
    [[nodiscard]] double peak_intensity() const { return 2.0 * power / (constants::pi * waist * waist); }
    [[nodiscard]] double waist_at(double dz) const;
};

/// One focus per illuminated lenslet. Site ids start at `first_site_id` in
/// row-major order. A tilt of theta shifts every focus by f*tan(theta)
/// along the geometry's tilt axis.
std::vector<FocusSite> expand_foci(const LensArrayGeometry& geometry, const IlluminationBeam& beam,
                                   std::size_t first_site_id = 0);

/// Concatenates the foci of one or two beams; two beams must differ in polarization.
std::vector<FocusSite> expand_foci(const LensArrayGeometry& geometry, std::span<const IlluminationBeam> beams);

double gaussian_intensity(const FocusSite& site, const Vec3& point);

/// Intensity and its gradient for one focus; the beam axis is z.
double gaussian_intensity_gradient(const FocusSite& site, const Vec3& point, Vec3& gradient);

/// Incoherent sum over all foci. Orthogonally polarized beams carry no
/// interference term; foci of one beam are treated the same way.
double total_intensity(std::span<const FocusSite> sites, const Vec3& point);

double pair_separation(const LensArrayGeometry& geometry, double angle_1, double angle_2);

void write_foci_csv(std::ostream& out, std::span<const FocusSite> sites);

}  // namespace microtrap
