#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "microtrap/constants.hpp"
#include "microtrap/dynamics.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/traps.hpp"
#include "support.hpp"

using namespace microtrap;
using namespace microtrap::test;

namespace {

const AtomSpecies rb = rubidium85();

std::shared_ptr<const TrapField> baseline_field() {
    static const auto field = std::make_shared<const TrapField>(baseline_row(), rb);
    return field;
}

std::shared_ptr<const TrapField> block_field() {
    static const auto field =
        std::make_shared<const TrapField>(expand_foci(geometry(4, 20), beam(3e-3, 80, kBaselineWavelength, 7e-6)), rb);
    return field;
}

double mean_energy(const Ensemble& e) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& a : e.atoms)
        if (a.alive) {
            sum += atom_energy(*e.field, a);
            ++n;
        }
    return sum / static_cast<double>(n);
}

bool same_atoms(const AtomState& a, const AtomState& b) {
    return a.position == b.position && a.velocity == b.velocity && a.alive == b.alive && a.site_id == b.site_id &&
           a.internal_state == b.internal_state && a.rng_stream == b.rng_stream && a.rng_counter == b.rng_counter;
}

}  // namespace

TEST(Loading, CountsStatesAndReproducibility) {
    const auto field = block_field();
    const Ensemble e = sample_loading(field, 100, 20e-6, 7);
    EXPECT_EQ(e.atoms.size(), 8000u);
    EXPECT_EQ(e.alive_count(), 8000u);
    for (const auto& a : e.atoms) EXPECT_EQ(a.internal_state, HyperfineState::F2);
    for (auto n : e.population_by_site()) EXPECT_EQ(n, 100u);

    const Ensemble again = sample_loading(field, 100, 20e-6, 7);
    const Ensemble other = sample_loading(field, 100, 20e-6, 8);
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < e.atoms.size(); ++i) {
        all_same = all_same && same_atoms(e.atoms[i], again.atoms[i]);
        any_diff = any_diff || !same_atoms(e.atoms[i], other.atoms[i]);
    }
    EXPECT_TRUE(all_same);
    EXPECT_TRUE(any_diff);
}

TEST(Loading, EquipartitionKineticEnergy) {
    const Ensemble e = sample_loading(baseline_field(), 1250, 20e-6, 3);
    double kinetic = 0.0;
    for (const auto& a : e.atoms) kinetic += 0.5 * rb.mass * a.velocity.squaredNorm();
    kinetic /= static_cast<double>(e.atoms.size());
    EXPECT_LT(rel_err(kinetic, 1.5 * constants::boltzmann * 20e-6), 0.02);
}

TEST(Loading, ColdLimitStaysAtCentres) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 50, 1e-9, 3);
    for (const auto& a : e.atoms) EXPECT_LT((a.position - field->site(*a.site_id).center).norm(), 0.1 * 7e-6);
}

TEST(Loading, Errors) {
    EXPECT_THROW(sample_loading(baseline_field(), 10, -1.0, 1), InvalidInput);
    EXPECT_THROW(sample_loading(nullptr, 10, 20e-6, 1), ConfigError);
}

TEST(Evolve, StabilityBoundEnforced) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 10, 20e-6, 1);
    const double bound = stability_dt_bound(*field);
    EXPECT_NEAR(bound, 1.0 / (20.0 * field->max_radial_frequency()), 1e-20);
    try {
        (void)evolve(e, 1e-4, 1.01 * bound, 0.0);
        FAIL() << "expected InvalidInput";
    } catch (const InvalidInput& ex) {
        EXPECT_NE(std::string(ex.what()).find("stability"), std::string::npos);
    }
}

TEST(Evolve, RadialOscillationFrequency) {
    const auto field = baseline_field();
    const auto analytic = analytic_report(field->site(0), rb, detuning_from_wavelength(rb, kBaselineWavelength));
    Ensemble e;
    e.field = field;
    AtomState a;
    a.site_id = 0;
    a.position = field->site(0).center + Vec3(0.1 * 7e-6, 0, 0);
    e.atoms.push_back(a);
    const double dt = default_dt(*field);
    const double x0 = field->site(0).center.x();
    std::vector<double> crossings;
    double prev = e.atoms[0].position.x() - x0;
    for (int i = 0; i < 4000 && crossings.size() < 9; ++i) {
        e = evolve(e, dt, dt, 0.0);
        const double x = e.atoms[0].position.x() - x0;
        if ((prev < 0.0) != (x < 0.0)) crossings.push_back(e.time - dt * x / (x - prev));
        prev = x;
    }
    ASSERT_GE(crossings.size(), 9u);
    const double period = (crossings[8] - crossings[0]) / 4.0;
    EXPECT_LT(rel_err(1.0 / period, analytic.radial_frequency), 0.01);
}

// Verlet energy oscillates at O((omega dt)^2) but does not drift: compare the
// per-atom energy averaged over the first and last thousand steps.
TEST(Evolve, SymplecticEnergyDrift) {
    const auto field = baseline_field();
    Ensemble e = sample_loading(field, 6, 20e-6, 5);
    const double dt = default_dt(*field, 200.0);
    const int steps = 10000, window = 1000;
    std::vector<double> first(e.atoms.size(), 0.0), last(e.atoms.size(), 0.0), start(e.atoms.size());
    for (std::size_t i = 0; i < e.atoms.size(); ++i) start[i] = atom_energy(*field, e.atoms[i]);
    for (int s = 1; s <= steps; ++s) {
        e = evolve(e, dt, dt, 0.0);
        for (std::size_t i = 0; i < e.atoms.size(); ++i) {
            if (s <= window) first[i] += atom_energy(*field, e.atoms[i]) / window;
            if (s > steps - window) last[i] += atom_energy(*field, e.atoms[i]) / window;
        }
    }
    for (std::size_t i = 0; i < e.atoms.size(); ++i) {
        ASSERT_TRUE(e.atoms[i].alive);
        EXPECT_LT(std::abs(last[i] - first[i]) / std::abs(start[i]), 1e-6) << "atom " << i;
    }
}

TEST(Evolve, ScheduleIndependentBitIdentical) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 40, 20e-6, 9);
    EvolveOptions one, many;
    one.threads = 1;
    many.threads = 5;
    const double dt = default_dt(*field, 40.0);
    const Ensemble a = evolve(e, 2e-4, dt, 5e4, one);
    const Ensemble b = evolve(e, 2e-4, dt, 5e4, many);
    ASSERT_EQ(a.atoms.size(), b.atoms.size());
    for (std::size_t i = 0; i < a.atoms.size(); ++i) EXPECT_TRUE(same_atoms(a.atoms[i], b.atoms[i])) << i;
}

TEST(Evolve, HeatingRateTwoRecoilsPerEvent) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 250, 20e-6, 11);
    // Absorption along the stiff radial axis keeps the mean radiation-pressure
    // displacement negligible, so the energy gain is the recoil heating alone.
    EvolveOptions radial;
    radial.residual_axis = Vec3::UnitX();
    const double rate = 2e5, duration = 1e-3;
    const Ensemble after = evolve(e, duration, default_dt(*field, 40.0), rate, radial);
    ASSERT_EQ(after.alive_count(), e.atoms.size());
    const double gain = mean_energy(after) - mean_energy(e);
    const double expected = 2.0 * recoil_energy(rb, rb.d2_wavelength) * rate * duration;
    EXPECT_LT(rel_err(gain, expected), 0.05);
}

TEST(Evolve, EquipartitionAfterTenAxialPeriods) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 50, 20e-6, 13);
    const auto trap = numeric_frequencies(*field, 0);
    const Ensemble after = evolve(e, 10.0 / trap.frequencies[0], default_dt(*field, 40.0), 0.0);
    std::vector<double> minimum(field->size());
    for (std::size_t s = 0; s < field->size(); ++s) minimum[s] = numeric_frequencies(*field, s).potential;
    double kinetic = 0.0, harmonic = 0.0;
    for (const auto& a : after.atoms) {
        kinetic += 0.5 * rb.mass * a.velocity.squaredNorm();
        harmonic += field->potential(a.position) - minimum[*a.site_id];
    }
    EXPECT_LT(rel_err(harmonic, kinetic), 0.10);
}

TEST(Survival, SyntheticExponential) {
    std::vector<SurvivalPoint> series;
    for (int i = 0; i <= 14; ++i) series.push_back({i * 5e-3, std::exp(-i * 5e-3 / 35e-3)});
    const auto fit = survival_fraction(series);
    EXPECT_FALSE(fit.infinite);
    EXPECT_LT(rel_err(fit.lifetime, 35e-3), 0.03);
    EXPECT_LT(fit.residual, 1e-12);
}

TEST(Survival, ConstantIsInfinite) {
    std::vector<SurvivalPoint> series;
    for (int i = 0; i < 6; ++i) series.push_back({i * 1e-3, 1.0});
    const auto fit = survival_fraction(series);
    EXPECT_TRUE(fit.infinite);
    EXPECT_TRUE(std::isinf(fit.lifetime));
}

TEST(Survival, TwoPointSlopeIsExact) {
    const SurvivalPoint pts[2] = {{0.0, 1.0}, {10e-3, std::exp(-0.5)}};
    const auto fit = survival_fraction(pts);
    EXPECT_LT(rel_err(fit.lifetime, 20e-3), 1e-12);
    const SurvivalPoint one[1] = {{0.0, 1.0}};
    EXPECT_THROW(survival_fraction(one), FitError);
}

TEST(Storage, ZeroRateKeepsEveryone) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 20, 20e-6, 2);
    const auto run = run_storage(e, 2e-3, 4, default_dt(*field, 40.0), 0.0);
    EXPECT_EQ(run.series.size(), 5u);
    EXPECT_TRUE(run.fit.infinite);
    EXPECT_EQ(run.final_state.alive_count(), e.atoms.size());
}

TEST(Address, OnlyTargetSiteChangesAndEmpties) {
    const auto field = block_field();
    const Ensemble e = sample_loading(field, 20, 20e-6, 4);
    const std::size_t target = 2 * 20 + 5;  // row 3, col 6
    ASSERT_EQ(field->site(target).row, 3);
    ASSERT_EQ(field->site(target).col, 6);
    const Ensemble kicked = address_site(e, target);
    for (std::size_t i = 0; i < e.atoms.size(); ++i)
        if (e.atoms[i].site_id != target) EXPECT_TRUE(same_atoms(e.atoms[i], kicked.atoms[i]));

    const double dt = default_dt(*field, 40.0);
    const Ensemble plain = evolve(e, 5e-3, dt, 0.0);
    const Ensemble after = evolve(kicked, 5e-3, dt, 0.0);
    const auto pop = after.population_by_site();
    const auto ref = plain.population_by_site();
    EXPECT_EQ(pop[target], 0u);
    for (std::size_t s = 0; s < pop.size(); ++s)
        if (s != target) EXPECT_EQ(pop[s], ref[s]);
    for (std::size_t i = 0; i < e.atoms.size(); ++i)
        if (e.atoms[i].site_id != target) EXPECT_TRUE(same_atoms(plain.atoms[i], after.atoms[i]));
}

TEST(Address, ZeroAndGentleKicks) {
    const auto field = baseline_field();
    const Ensemble e = sample_loading(field, 100, 20e-6, 4);
    const Ensemble untouched = address_site(e, 3, 0.0);
    for (std::size_t i = 0; i < e.atoms.size(); ++i) EXPECT_TRUE(same_atoms(e.atoms[i], untouched.atoms[i]));

    const double depth = std::abs(numeric_frequencies(*field, 3).potential);
    const Ensemble after = evolve(address_site(e, 3, 0.01 * depth), 5e-3, default_dt(*field, 40.0), 0.0);
    EXPECT_GT(after.population_by_site()[3], 95u);
    EXPECT_THROW(address_site(e, 99), UnknownSiteError);
}

TEST(TimeOfFlight, RecoversLoadTemperature) {
    const Ensemble e = sample_loading(baseline_field(), 500, 20e-6, 21);
    const double times[] = {0.5e-3, 1e-3, 1.5e-3, 2e-3, 2.5e-3, 3e-3};
    const auto tof = time_of_flight(e, times);
    EXPECT_LT(rel_err(tof.temperature, 20e-6), 0.05);
    ASSERT_EQ(tof.sigma_squared.size(), 6u);

    Ensemble fast = e;
    for (auto& a : fast.atoms) a.velocity *= 2.0;
    EXPECT_LT(rel_err(time_of_flight(fast, times).temperature, 4.0 * tof.temperature), 1e-3);

    Ensemble still = e;
    for (auto& a : still.atoms) a.velocity.setZero();
    EXPECT_LT(std::abs(time_of_flight(still, times).temperature), 1e-12);
}

TEST(TimeOfFlight, Errors) {
    const Ensemble e = sample_loading(baseline_field(), 50, 20e-6, 21);
    const double two[] = {1e-3, 2e-3};
    const double same[] = {1e-3, 1e-3, 1e-3};
    EXPECT_THROW(time_of_flight(e, two), InvalidInput);
    EXPECT_THROW(time_of_flight(e, same), FitError);
}

TEST(EnsembleDump, RoundTripIsExact) {
    const auto field = baseline_field();
    Ensemble e = evolve(sample_loading(field, 20, 20e-6, 17), 1e-4, default_dt(*field, 40.0), 1e5);
    e.atoms[3].alive = false;
    e.atoms[3].site_id.reset();
    e.atoms[5].internal_state = HyperfineState::F3;
    std::stringstream ss;
    write_ensemble(ss, e);
    const Ensemble back = read_ensemble(ss, field);
    EXPECT_EQ(back.time, e.time);
    EXPECT_EQ(back.seed, e.seed);
    ASSERT_EQ(back.atoms.size(), e.atoms.size());
    for (std::size_t i = 0; i < e.atoms.size(); ++i) EXPECT_TRUE(same_atoms(back.atoms[i], e.atoms[i])) << i;
    std::stringstream again;
    write_ensemble(again, back);
    std::stringstream first;
    write_ensemble(first, e);
    EXPECT_EQ(again.str(), first.str());

    std::stringstream bad("not-an-ensemble 1\n");
    EXPECT_THROW(read_ensemble(bad, field), InvalidInput);
}
