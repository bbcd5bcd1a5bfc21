#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "microtrap/constants.hpp"
#include "microtrap/trap_field.hpp"
#include "microtrap/traps.hpp"

namespace microtrap {

enum class HyperfineState { F2, F3 };

struct AtomState {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    HyperfineState internal_state = HyperfineState::F2;
    bool alive = true;
    std::optional<std::size_t> site_id;
    std::uint64_t rng_stream = 0;   // unique per atom
    std::uint64_t rng_counter = 0;  // draws consumed so far on that stream
};

/// Value type; operations return a new ensemble. Dead atoms stay in the list
/// but are excluded from every statistic.
struct Ensemble {
    std::vector<AtomState> atoms;
    double time = 0.0;
    std::uint64_t seed = 0;
    std::shared_ptr<const TrapField> field;

    [[nodiscard]] std::size_t alive_count() const;
    [[nodiscard]] double alive_fraction() const;
    /// Alive atoms per site, indexed by site id.
    [[nodiscard]] std::vector<std::size_t> population_by_site() const;
};

/// Thermal harmonic load: per site, positions along the numeric principal axes
/// with variance k_B T / (m w_i^2) and Maxwell velocities. All atoms start in F=2.
Ensemble sample_loading(std::shared_ptr<const TrapField> field, std::size_t per_site_count, double temperature,
                        std::uint64_t seed);

struct EvolveOptions {
    Vec3 residual_axis = Vec3::UnitZ();  // absorption direction of the residual light
    double recoil_wavelength = 0.0;      // 0 -> species D2 line
    double escape_factor = 3.0;          // dead once unbound and beyond factor * w(z) from every site
    unsigned threads = 0;                // 0 -> hardware concurrency
};

/// dt bound enforced by evolve: 1 / (20 nu_r,max).
double stability_dt_bound(const TrapField& field);
/// dt = 1 / (fraction * nu_r,max).
double default_dt(const TrapField& field, double fraction = 200.0);

/// Velocity-Verlet integration in the summed dipole force plus Poisson photon
/// recoil heating (one kick along the residual axis and one isotropic kick per event).
Ensemble evolve(const Ensemble& ensemble, double duration, double dt, double residual_rate,
                const EvolveOptions& options = {});

/// Kinetic plus potential energy of one atom on the full summed field.
double atom_energy(const TrapField& field, const AtomState& atom);

struct SurvivalPoint {
    double time = 0.0;
    double fraction = 0.0;
};

struct LifetimeFit {
    double lifetime = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // rms of ln-fraction residuals
    bool infinite = false;
};

/// Least-squares line through ln(fraction) vs time over the points with
/// non-zero fraction; lifetime = -1/slope, infinite when nothing decays.
LifetimeFit survival_fraction(std::span<const SurvivalPoint> series);

/// Kicks every alive atom of `site_id` by `heating_energy` (default 10x the
/// site depth) in a random direction. Other atoms are untouched.
Ensemble address_site(const Ensemble& ensemble, std::size_t site_id, std::optional<double> heating_energy = {});

struct TofOptions {
    bool gravity = false;
    Vec3 gravity_direction = -Vec3::UnitY();
};

struct TofResult {
    double temperature = 0.0;
    double uncertainty = 0.0;
    double sigma0_squared = 0.0;
    std::vector<double> times;
    std::vector<double> sigma_squared;  // per-axis mean variance, m^2
};

/// Ballistic release and fit of sigma^2(t) = sigma0^2 + (k_B T / m) t^2.
TofResult time_of_flight(const Ensemble& ensemble, std::span<const double> expansion_times, const TofOptions& options = {});

struct StorageRun {
    std::vector<SurvivalPoint> series;
    LifetimeFit fit;
    Ensemble final_state;
};

/// Evolves in `samples` equal intervals over `duration`, recording the alive
/// fraction (including t = 0). Stops early once every atom is lost.
StorageRun run_storage(const Ensemble& initial, double duration, int samples, double dt, double residual_rate,
                       const EvolveOptions& options = {});

struct CalibrationSettings {
    double target_lifetime = 35e-3;
    double temperature = 20e-6;
    std::size_t atoms_per_site = 125;
    std::uint64_t seed = 1;
    double dt = 0.0;              // 0 -> default_dt(field, dt_fraction)
    double dt_fraction = 40.0;
    double window_factor = 2.0;   // storage window = window_factor * target
    int samples = 14;
    double tolerance = 0.02;      // relative, on the fitted lifetime
    int max_evaluations = 24;
    EvolveOptions evolve;
};

struct CalibrationStep {
    double rate = 0.0;
    double lifetime = 0.0;
};

struct CalibrationResult {
    double rate = 0.0;
    double lifetime = 0.0;
    bool converged = false;
    std::vector<CalibrationStep> history;
};

/// Finds the residual scattering rate whose fitted survival lifetime matches
/// the target: geometric bracketing, then false position on log(rate) vs
/// log(lifetime) with a bisection safeguard. Same loaded ensemble every time.
CalibrationResult calibrate_residual_rate(std::shared_ptr<const TrapField> field, const CalibrationSettings& settings);

/// Versioned text dump; doubles are written as hexfloats so restore is exact.
void write_ensemble(std::ostream& out, const Ensemble& ensemble);
Ensemble read_ensemble(std::istream& in, std::shared_ptr<const TrapField> field);

void write_survival_csv(std::ostream& out, std::span<const SurvivalPoint> series);
void write_trajectory_csv(std::ostream& out, const Ensemble& ensemble);

}  // namespace microtrap
