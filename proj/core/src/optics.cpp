#include "microtrap/optics.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "microtrap/errors.hpp"
#include "microtrap/io.hpp"

namespace microtrap {

std::string_view to_string(Polarization p) { return p == Polarization::H ? "H" : "V"; }

LensArrayGeometry LensArrayGeometry::fully_illuminated(int rows, int cols, double pitch, double focal_length) {
    LensArrayGeometry g;
    g.rows = rows;
    g.cols = cols;
    g.pitch = pitch;
    g.focal_length = focal_length;
    g.illuminated.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 1);
    return g;
}

bool LensArrayGeometry::is_illuminated(int row, int col) const {
    if (row < 1 || row > rows || col < 1 || col > cols) return false;
    return illuminated[static_cast<std::size_t>(row - 1) * cols + (col - 1)] != 0;
}

void LensArrayGeometry::set_illuminated(int row, int col, bool on) {
    if (row < 1 || row > rows || col < 1 || col > cols)
        throw InvalidInput("lenslet (" + std::to_string(row) + ", " + std::to_string(col) + ") outside the array");
    illuminated[static_cast<std::size_t>(row - 1) * cols + (col - 1)] = on ? 1 : 0;
}

std::size_t LensArrayGeometry::illuminated_count() const {
    std::size_t n = 0;
    for (char c : illuminated) n += c != 0;
    return n;
}

Vec3 LensArrayGeometry::lenslet_focus(int row, int col) const {
    return {(col - 0.5 * (cols + 1)) * pitch, (row - 0.5 * (rows + 1)) * pitch, 0.0};
}

void LensArrayGeometry::validate() const {
    if (!(pitch > 0.0)) throw ConfigError("lens array pitch must be positive");
    if (!(focal_length > 0.0)) throw ConfigError("lens array focal_length must be positive");
    if (rows < 1 || cols < 1) throw ConfigError("lens array needs at least one row and column");
    if (illuminated.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw ConfigError("illuminated_mask dimensions differ from rows x cols");
    if (!(transmission > 0.0) || transmission > 1.0) throw ConfigError("transmission must lie in (0, 1]");
    if (envelope_waist < 0.0) throw ConfigError("envelope_waist must be non-negative");
    if (illuminated_count() == 0) throw ConfigError("illuminated_mask empty");
}

void IlluminationBeam::validate() const {
    if (!(total_power >= 0.0)) throw InvalidInput("beam power must be non-negative");
    if (!(wavelength > 0.0)) throw InvalidInput("beam wavelength must be positive");
    if (!(focus_waist > 0.0)) throw InvalidInput("focus waist must be positive");
    if (!(std::abs(tilt_angle) < max_tilt_angle))
        throw InvalidInput("tilt angle " + std::to_string(tilt_angle) + " rad beyond the paraxial bound of 0.2 rad");
}

double FocusSite::waist_at(double dz) const {
    const double zr = rayleigh_range();
    return waist * std::sqrt(1.0 + (dz / zr) * (dz / zr));
}

std::vector<FocusSite> expand_foci(const LensArrayGeometry& geometry, const IlluminationBeam& beam,
                                   std::size_t first_site_id) {
    geometry.validate();
    beam.validate();

    const double shift = geometry.focal_length * std::tan(beam.tilt_angle);
    const Vec3 offset = geometry.tilt_axis == TiltAxis::Vertical ? Vec3(0.0, shift, 0.0) : Vec3(shift, 0.0, 0.0);

    std::vector<double> weights;
    double weight_sum = 0.0;
    for (int r = 1; r <= geometry.rows; ++r) {
        for (int c = 1; c <= geometry.cols; ++c) {
            if (!geometry.is_illuminated(r, c)) continue;
            double w = 1.0;
            if (geometry.envelope_waist > 0.0) {
                const Vec3 p = geometry.lenslet_focus(r, c);
                w = std::exp(-2.0 * p.squaredNorm() / (geometry.envelope_waist * geometry.envelope_waist));
            }
            weights.push_back(w);
            weight_sum += w;
        }
    }

    std::vector<FocusSite> foci;
    foci.reserve(weights.size());
    const double delivered = beam.total_power * geometry.transmission;
    std::size_t k = 0;
    for (int r = 1; r <= geometry.rows; ++r) {
        for (int c = 1; c <= geometry.cols; ++c) {
            if (!geometry.is_illuminated(r, c)) continue;
            FocusSite s;
            s.site_id = first_site_id + k;
            s.center = geometry.lenslet_focus(r, c) + offset;
            s.waist = beam.focus_waist;
            s.power = delivered * weights[k] / weight_sum;
            s.wavelength = beam.wavelength;
            s.polarization = beam.polarization;
            s.array_id = beam.array_id;
            s.row = r;
            s.col = c;
            foci.push_back(s);
            ++k;
        }
    }
    return foci;
}

std::vector<FocusSite> expand_foci(const LensArrayGeometry& geometry, std::span<const IlluminationBeam> beams) {
    if (beams.empty() || beams.size() > 2) throw ConfigError("exactly one or two illumination beams are supported");
    if (beams.size() == 2 && beams[0].polarization == beams[1].polarization)
        throw ConfigError("two beams must carry orthogonal polarization tags");
    std::vector<FocusSite> all;
    for (const auto& beam : beams) {
        auto foci = expand_foci(geometry, beam, all.size());
        all.insert(all.end(), foci.begin(), foci.end());
    }
    return all;
}

double gaussian_intensity(const FocusSite& site, const Vec3& point) {
    const Vec3 d = point - site.center;
    const double zr = site.rayleigh_range();
    const double w2 = site.waist * site.waist * (1.0 + (d.z() / zr) * (d.z() / zr));
    const double rho2 = d.x() * d.x() + d.y() * d.y();
    return 2.0 * site.power / (constants::pi * w2) * std::exp(-2.0 * rho2 / w2);
}

double gaussian_intensity_gradient(const FocusSite& site, const Vec3& point, Vec3& gradient) {
    const Vec3 d = point - site.center;
    const double zr = site.rayleigh_range();
    const double w02 = site.waist * site.waist;
    const double w2 = w02 * (1.0 + (d.z() / zr) * (d.z() / zr));
    const double rho2 = d.x() * d.x() + d.y() * d.y();
    const double intensity = 2.0 * site.power / (constants::pi * w2) * std::exp(-2.0 * rho2 / w2);
    const double dw2_dz = 2.0 * w02 * d.z() / (zr * zr);
    gradient.x() = -4.0 * d.x() / w2 * intensity;
    gradient.y() = -4.0 * d.y() / w2 * intensity;
    gradient.z() = intensity * (2.0 * rho2 / (w2 * w2) - 1.0 / w2) * dw2_dz;
    return intensity;
}

double total_intensity(std::span<const FocusSite> sites, const Vec3& point) {
    double sum = 0.0;
    for (const auto& s : sites) sum += gaussian_intensity(s, point);
    return sum;
}

double pair_separation(const LensArrayGeometry& geometry, double angle_1, double angle_2) {
    if (!(std::abs(angle_1) < max_tilt_angle) || !(std::abs(angle_2) < max_tilt_angle))
        throw InvalidInput("tilt angle beyond the paraxial bound of 0.2 rad");
    return geometry.focal_length * std::abs(std::tan(angle_1) - std::tan(angle_2));
}

void write_foci_csv(std::ostream& out, std::span<const FocusSite> sites) {
    out << "site_id,array_id,row,col,x_m,y_m,z_m,power_w,waist_m,wavelength_m,polarization\n";
    for (const auto& s : sites) {
        out << s.site_id << ',' << (s.array_id == 1 ? "I" : "II") << ',' << s.row << ',' << s.col << ','
            << fmt_num(s.center.x()) << ',' << fmt_num(s.center.y()) << ',' << fmt_num(s.center.z()) << ','
            << fmt_num(s.power) << ',' << fmt_num(s.waist) << ',' << fmt_num(s.wavelength) << ','
            << to_string(s.polarization) << '\n';
    }
}

}  // namespace microtrap
