#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "microtrap/atoms.hpp"
#include "microtrap/optics.hpp"
#include "microtrap/trap_field.hpp"

namespace microtrap {

struct TrapSiteReport {
    std::size_t site_id = 0;
    double depth = 0.0;               // J, |U| at the minimum
    double radial_frequency = 0.0;    // Hz
    double axial_frequency = 0.0;     // Hz
    double peak_scattering_rate = 0.0;
    double decoherence_time = 0.0;    // 1 / peak_scattering_rate
    double lamb_dicke_parameter = 0.0;
    double recoil_frequency = 0.0;    // D2 recoil, Hz

    [[nodiscard]] double depth_mk() const;
};

/// Harmonic expansion of an isolated Gaussian focus at its centre.
/// Throws UnsupportedConfiguration for blue detuning.
TrapSiteReport analytic_report(const FocusSite& site, const AtomSpecies& species, const Detuning& detuning);

struct MinimumSearchOptions {
    double step_fraction = 0.01;        // finite-difference step in units of w0
    double gradient_tolerance = 1e-6;   // in units of |U0| / w0
    int max_iterations = 60;
};

struct NumericTrap {
    std::size_t site_id = 0;
    Vec3 minimum = Vec3::Zero();
    double potential = 0.0;                  // U at the minimum (negative for a bound site)
    std::array<double, 3> frequencies{};     // Hz, ascending
    Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();  // principal axes as columns, same order
    double scattering_rate = 0.0;            // at the minimum
};

/// Locates the local minimum of the summed potential near a site by Newton
/// descent from the nominal centre, then diagonalises the central-difference
/// Hessian of U. Throws NoMinimumError when no bound minimum exists.
NumericTrap numeric_frequencies(const TrapField& field, std::size_t site_id, const MinimumSearchOptions& options = {});

/// Per-site report on the summed field: depth, frequencies and scattering at
/// the numeric minimum (radial = geometric mean of the two stiff axes).
std::vector<TrapSiteReport> characterize(const TrapField& field, const MinimumSearchOptions& options = {});

struct FeasibilityThresholds {
    double min_oscillation_ratio = 10.0;
    double min_decoherence_ratio = 1e3;
    double min_collisional_ratio = 50.0;
    double quoted_decoherence_ratio = 1e4;
};

struct GateFeasibility {
    double gate_time = 0.0;
    double oscillation_ratio = 0.0;      // (1/nu_r) / gate_time
    double decoherence_ratio = 0.0;      // decoherence_time / gate_time
    bool oscillation_ok = false;
    bool decoherence_ok = false;
    double collisional_gate_time = 0.0;  // 0 if not evaluated
    double collisional_ratio = 0.0;
    bool collisional_ok = false;
    std::string note;
};

GateFeasibility gate_feasibility(const TrapSiteReport& report, double gate_time,
                                 double collisional_gate_time = 0.0, const FeasibilityThresholds& thresholds = {});

struct SidebandCheck {
    bool feasible = false;
    double margin = 0.0;  // nu_r / nu_rec
};

SidebandCheck sideband_cooling_check(const TrapSiteReport& report);

void write_reports_csv(std::ostream& out, std::span<const TrapSiteReport> reports, std::span<const FocusSite> sites);
std::string summary_table(std::span<const TrapSiteReport> reports, std::span<const FocusSite> sites);

}  // namespace microtrap
