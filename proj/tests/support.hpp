#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "microtrap/atoms.hpp"
#include "microtrap/optics.hpp"

namespace microtrap::test {

inline double rel_err(double value, double expected) { return std::abs(value - expected) / std::abs(expected); }

/// Seeded random parameter source for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
    bool coin() { return integer(0, 1) == 1; }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

inline LensArrayGeometry geometry(int rows, int cols, double pitch = 125e-6, double focal_length = 625e-6) {
    return LensArrayGeometry::fully_illuminated(rows, cols, pitch, focal_length);
}

inline IlluminationBeam beam(double power_per_trap, std::size_t traps, double wavelength, double waist,
                             Polarization pol = Polarization::H, double angle = 0.0) {
    IlluminationBeam b;
    b.total_power = power_per_trap * static_cast<double>(traps);
    b.wavelength = wavelength;
    b.focus_waist = waist;
    b.polarization = pol;
    b.tilt_angle = angle;
    b.array_id = pol == Polarization::H ? 1 : 2;
    return b;
}

/// One isolated focus at the origin.
inline FocusSite single_focus(double power, double wavelength, double waist) {
    FocusSite s;
    s.power = power;
    s.wavelength = wavelength;
    s.waist = waist;
    s.row = 1;
    s.col = 1;
    return s;
}

inline constexpr double kBaselineWavelength = 780.24e-9 + 0.4e-9;

inline std::vector<FocusSite> baseline_row() {
    return expand_foci(geometry(1, 8), beam(3e-3, 8, kBaselineWavelength, 7e-6));
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("microtrap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path source_path(const std::string& rel) { return std::filesystem::path(MICROTRAP_SOURCE_DIR) / rel; }

}  // namespace microtrap::test
