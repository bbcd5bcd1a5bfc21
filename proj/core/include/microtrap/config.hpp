#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "microtrap/atoms.hpp"
#include "microtrap/dynamics.hpp"
#include "microtrap/optics.hpp"
#include "microtrap/traps.hpp"

namespace microtrap {

struct DynamicsConfig {
    double temperature = 20e-6;
    std::size_t atoms_per_site = 100;
    double dt = 0.0;              // 0 -> 1 / (dt_fraction * nu_r,max)
    double dt_fraction = 200.0;
    double storage_time = 70e-3;
    int samples = 14;
    double residual_rate = 0.0;
    Vec3 residual_axis = Vec3::UnitZ();
    std::vector<double> tof_times{0.5e-3, 1e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3};
    std::size_t tof_atoms_per_site = 0;  // 0 -> atoms_per_site
    bool gravity = false;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    double target_lifetime = 35e-3;
    double calibration_tolerance = 0.02;
    double calibration_dt_fraction = 40.0;
    int calibration_samples = 14;
    double calibration_window = 2.0;
    std::size_t calibration_atoms_per_site = 0;  // 0 -> atoms_per_site
};

struct ImagingConfig {
    double psf_sigma = 17e-6;
    double tilt_elongation = 1.6;
    double pixel_pitch = 4e-6;
    double margin = 120e-6;
    bool shot_noise = false;
    double threshold_k = 5.0;
    double relative_floor = 0.01;
    double per_atom_rate = 1e5;   // detected photons per second per atom at unit efficiency
    double exposure = 1e-3;
};

struct RegisterConfig {
    long atoms_per_site = 500;
    std::vector<long> counts;     // per site id; overrides atoms_per_site when non-empty
    double detection_efficiency = 1.0;
    double detectability_threshold = 100.0;
};

struct ThresholdConfig {
    double gate_time = 1e-6;
    double collisional_gate_time = 1e-3;
    FeasibilityThresholds feasibility;
};

struct InterleaveConfig {
    double angle_start = 0.0;
    double angle_stop = 0.072;
    int angle_steps = 9;
    double cross_section_half_width = 80e-6;
    int cross_section_points = 801;
};

/// Complete run description. All quantities SI.
struct RunConfig {
    AtomSpecies species = rubidium85();
    LensArrayGeometry geometry;
    std::vector<IlluminationBeam> beams;
    DynamicsConfig dynamics;
    ImagingConfig imaging;
    RegisterConfig register_;
    ThresholdConfig thresholds;
    InterleaveConfig interleave;
    std::string source;

    [[nodiscard]] std::vector<FocusSite> foci() const;
    [[nodiscard]] std::vector<long> register_counts(std::size_t sites) const;
};

/// Parses the sectioned key-value format documented in the README. Unknown
/// sections or keys, duplicates, malformed values and inconsistent beams raise
/// ConfigError with the offending key in the message.
RunConfig parse_config(std::string_view text, std::string_view source_name = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// "1-4:1-20, 3:6" style lenslet rectangles; "all" and "none" are accepted.
std::vector<char> parse_mask(std::string_view spec, int rows, int cols);

}  // namespace microtrap
