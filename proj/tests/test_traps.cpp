#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "microtrap/constants.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/trap_field.hpp"
#include "microtrap/traps.hpp"
#include "support.hpp"

using namespace microtrap;
using namespace microtrap::test;

namespace {

const AtomSpecies rb = rubidium85();

TrapSiteReport report_for(double power, double wavelength, double waist) {
    return analytic_report(single_focus(power, wavelength, waist), rb, detuning_from_wavelength(rb, wavelength));
}

}  // namespace

TEST(AnalyticReport, BaselineOracle) {
    const auto r = report_for(3e-3, kBaselineWavelength, 7e-6);
    EXPECT_LT(rel_err(r.depth_mk(), 2.58297), 1e-5);
    EXPECT_LT(rel_err(r.radial_frequency, 22868.9), 1e-5);
    EXPECT_LT(rel_err(r.axial_frequency, 574.027), 1e-5);
    EXPECT_LT(rel_err(r.decoherence_time, 9.45131e-5), 1e-5);
    EXPECT_LT(rel_err(r.lamb_dicke_parameter, 0.410822), 1e-5);
    EXPECT_LT(rel_err(r.depth_mk(), 2.5), 0.30);
}

TEST(AnalyticReport, TiSapphireOracle) {
    const auto r = report_for(50e-3, 825e-9, 7e-6);
    EXPECT_LT(rel_err(r.depth_mk(), 0.726361), 1e-5);
    EXPECT_LT(rel_err(r.radial_frequency, 12127.2), 1e-5);
    EXPECT_LT(rel_err(r.decoherence_time, 0.0303543), 1e-5);
    EXPECT_LT(rel_err(r.radial_frequency, 10e3), 0.5);
    EXPECT_GT(r.decoherence_time, 25e-3);
    EXPECT_LT(r.decoherence_time, 100e-3);
}

TEST(AnalyticReport, HighNaOracle) {
    const auto r = report_for(1e-3, 850e-9, 1e-6);
    EXPECT_LT(rel_err(r.radial_frequency, 66081.5), 1e-5);
    EXPECT_LT(rel_err(r.axial_frequency, 12642.5), 1e-5);
    EXPECT_LT(rel_err(r.decoherence_time, 0.0828697), 1e-5);
    EXPECT_LT(rel_err(r.radial_frequency, 50e3), 0.5);
    EXPECT_GT(r.decoherence_time, 75e-3);
    EXPECT_LT(r.decoherence_time, 300e-3);
}

TEST(AnalyticReport, BlueDetuningUnsupported) {
    EXPECT_THROW(report_for(1e-3, 770e-9, 5e-6), UnsupportedConfiguration);
}

TEST(AnalyticReport, Identities) {
    Gen g(31);
    for (int i = 0; i < 200; ++i) {
        const auto r = report_for(g.log_uniform(1e-4, 0.1), g.uniform(800e-9, 1064e-9), g.uniform(1e-6, 10e-6));
        EXPECT_DOUBLE_EQ(r.decoherence_time * r.peak_scattering_rate, 1.0);
        EXPECT_LT(rel_err(r.lamb_dicke_parameter * r.lamb_dicke_parameter * r.radial_frequency, r.recoil_frequency), 1e-14);
    }
}

TEST(AnalyticReport, ScalingLaws) {
    Gen g(32);
    for (int i = 0; i < 100; ++i) {
        const double p = g.log_uniform(1e-4, 0.05), lam = g.uniform(800e-9, 1064e-9), w = g.uniform(1e-6, 10e-6);
        const auto base = report_for(p, lam, w);
        const auto twice_power = report_for(2.0 * p, lam, w);
        const auto twice_waist = report_for(p, lam, 2.0 * w);
        EXPECT_LT(rel_err(twice_power.depth, 2.0 * base.depth), 1e-12);
        EXPECT_LT(rel_err(twice_power.radial_frequency, std::sqrt(2.0) * base.radial_frequency), 1e-12);
        EXPECT_LT(rel_err(twice_waist.depth, 0.25 * base.depth), 1e-12);
        EXPECT_LT(rel_err(twice_waist.radial_frequency, 0.25 * base.radial_frequency), 1e-12);
    }
}

TEST(AnalyticReport, RadialFrequencyVersusDetuningSingleLine) {
    // nu_r ~ 1/sqrt|Delta| for small offsets; the D1 term bends it by a few percent at 2 nm.
    const double w = 7e-6, p = 3e-3;
    const auto near = analytic_report(single_focus(p, 781e-9, w), rb, detuning_from_offset(rb, 0.2e-9));
    Gen g(33);
    for (int i = 0; i < 50; ++i) {
        const double off = g.uniform(0.2e-9, 2e-9);
        const Detuning d = detuning_from_offset(rb, off);
        const auto r = analytic_report(single_focus(p, d.laser_wavelength, w), rb, d);
        const Detuning d0 = detuning_from_offset(rb, 0.2e-9);
        const double expected = near.radial_frequency * std::sqrt(d0.delta_d2 / d.delta_d2);
        EXPECT_LT(rel_err(r.radial_frequency, expected), 0.05);
    }
}

TEST(NumericFrequencies, IsolatedSiteMatchesAnalytic) {
    Gen g(34);
    for (int i = 0; i < 20; ++i) {
        const double p = g.log_uniform(1e-4, 0.05), lam = g.uniform(800e-9, 1064e-9), w = g.uniform(1e-6, 10e-6);
        const FocusSite s = single_focus(p, lam, w);
        const TrapField field({s}, rb);
        const auto analytic = analytic_report(s, rb, detuning_from_wavelength(rb, lam));
        const auto numeric = numeric_frequencies(field, 0);
        EXPECT_LT(rel_err(numeric.frequencies[0], analytic.axial_frequency), 0.01);
        EXPECT_LT(rel_err(numeric.frequencies[1], analytic.radial_frequency), 0.01);
        EXPECT_LT(rel_err(numeric.frequencies[2], analytic.radial_frequency), 0.01);
        EXPECT_LT(rel_err(-numeric.potential, analytic.depth), 1e-9);
        EXPECT_LT(numeric.minimum.norm(), 1e-3 * w);
        // Softest axis is the beam axis.
        EXPECT_GT(std::abs(numeric.axes.col(0).z()), 0.999);
    }
}

TEST(NumericFrequencies, OverlappedPairScalesBySqrtTwo) {
    const auto g = geometry(1, 1);
    const IlluminationBeam pair[2] = {beam(3e-3, 1, kBaselineWavelength, 7e-6), beam(3e-3, 1, kBaselineWavelength, 7e-6, Polarization::V)};
    const TrapField doubled(expand_foci(g, pair), rb);
    const TrapField single(expand_foci(g, pair[0]), rb);
    const auto a = numeric_frequencies(single, 0);
    const auto b = numeric_frequencies(doubled, 0);
    for (int k = 0; k < 3; ++k) EXPECT_LT(rel_err(b.frequencies[k], std::sqrt(2.0) * a.frequencies[k]), 1e-3);
    EXPECT_LT(rel_err(b.potential, 2.0 * a.potential), 1e-9);
}

TEST(NumericFrequencies, SeparatedPairHasNoCrossTalk) {
    const auto g = geometry(1, 1);
    const IlluminationBeam pair[2] = {beam(3e-3, 1, kBaselineWavelength, 7e-6),
                                      beam(3e-3, 1, kBaselineWavelength, 7e-6, Polarization::V, 0.071876)};
    const TrapField field(expand_foci(g, pair), rb);
    const TrapField single(expand_foci(g, pair[0]), rb);
    const auto iso = numeric_frequencies(single, 0);
    for (std::size_t site = 0; site < 2; ++site) {
        const auto n = numeric_frequencies(field, site);
        for (int k = 0; k < 3; ++k) EXPECT_LT(rel_err(n.frequencies[k], iso.frequencies[k]), 1e-3);
    }
}

TEST(NumericFrequencies, BlueDetunedHasNoMinimum) {
    const TrapField field({single_focus(1e-3, 770e-9, 5e-6)}, rb);
    EXPECT_THROW(numeric_frequencies(field, 0), NoMinimumError);
    EXPECT_THROW(numeric_frequencies(field, 3), UnknownSiteError);
}

TEST(Characterize, BaselineRow) {
    const TrapField field(baseline_row(), rb);
    const auto reports = characterize(field);
    ASSERT_EQ(reports.size(), 8u);
    for (const auto& r : reports) {
        EXPECT_LT(rel_err(r.depth_mk(), 2.58297), 1e-4);
        EXPECT_LT(rel_err(r.radial_frequency, 22868.9), 0.01);
    }
    std::ostringstream csv;
    write_reports_csv(csv, reports, field.sites());
    EXPECT_NE(csv.str().find("depth_mk"), std::string::npos);
    EXPECT_NE(summary_table(reports, field.sites()).find("2.583"), std::string::npos);
}

TEST(GateFeasibility, HighNaRydbergGate) {
    TrapSiteReport r;
    r.radial_frequency = 50e3;
    r.decoherence_time = 150e-3;
    const auto f = gate_feasibility(r, 1e-6);
    EXPECT_NEAR(f.oscillation_ratio, 20.0, 1e-9);
    EXPECT_NEAR(f.decoherence_ratio, 1.5e5, 1e-6);
    EXPECT_TRUE(f.oscillation_ok);
    EXPECT_TRUE(f.decoherence_ok);
    EXPECT_FALSE(f.note.empty());
}

TEST(GateFeasibility, CollisionalGate) {
    TrapSiteReport r;
    r.radial_frequency = 10e3;
    r.decoherence_time = 50e-3;
    const auto f = gate_feasibility(r, 1e-6, 1e-3);
    EXPECT_NEAR(f.collisional_ratio, 50.0, 1e-9);
    EXPECT_TRUE(f.collisional_ok);
}

TEST(GateFeasibility, GateAsLongAsCoherenceFails) {
    TrapSiteReport r;
    r.radial_frequency = 10e3;
    r.decoherence_time = 1e-3;
    const auto f = gate_feasibility(r, 1e-3);
    EXPECT_DOUBLE_EQ(f.decoherence_ratio, 1.0);
    EXPECT_FALSE(f.decoherence_ok);
    EXPECT_THROW(gate_feasibility(r, 0.0), InvalidInput);
}

TEST(Sideband, Margins) {
    const double nu_rec = recoil_frequency_d2(rb);
    TrapSiteReport r;
    r.recoil_frequency = nu_rec;
    r.radial_frequency = 50e3;
    auto c = sideband_cooling_check(r);
    EXPECT_TRUE(c.feasible);
    EXPECT_NEAR(c.margin, 12.954, 1e-3);
    r.radial_frequency = 7.5e3;
    c = sideband_cooling_check(r);
    EXPECT_TRUE(c.feasible);
    EXPECT_NEAR(c.margin, 1.943, 1e-3);
    r.radial_frequency = nu_rec;
    EXPECT_FALSE(sideband_cooling_check(r).feasible);
}
