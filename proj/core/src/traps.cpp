#include "microtrap/traps.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "microtrap/errors.hpp"
#include "microtrap/io.hpp"

namespace microtrap {

using namespace constants;

double TrapSiteReport::depth_mk() const { return joule_to_kelvin(depth) * 1e3; }

TrapSiteReport analytic_report(const FocusSite& site, const AtomSpecies& species, const Detuning& detuning) {
    const LightResponse response = light_response(species, detuning);
    if (!(response.shift < 0.0))
        throw UnsupportedConfiguration("blue-detuned focus does not form a bound trap at its centre");

    const double peak = site.peak_intensity();
    const double u0 = std::abs(response.shift * peak);
    const double zr = site.rayleigh_range();

    TrapSiteReport r;
    r.site_id = site.site_id;
    r.depth = u0;
    r.radial_frequency = std::sqrt(4.0 * u0 / (species.mass * site.waist * site.waist)) / two_pi;
    r.axial_frequency = std::sqrt(2.0 * u0 / (species.mass * zr * zr)) / two_pi;
    r.peak_scattering_rate = response.scattering * peak;
    r.decoherence_time = 1.0 / r.peak_scattering_rate;
    r.recoil_frequency = recoil_frequency_d2(species);
    r.lamb_dicke_parameter = std::sqrt(r.recoil_frequency / r.radial_frequency);
    return r;
}

namespace {

Eigen::Matrix3d gradient_hessian(const TrapField& field, const Vec3& x, double h) {
    Eigen::Matrix3d hess;
    for (int a = 0; a < 3; ++a) {
        Vec3 step = Vec3::Zero();
        step[a] = h;
        Vec3 gp, gm;
        field.potential_gradient(x + step, gp);
        field.potential_gradient(x - step, gm);
        hess.col(a) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
}

Eigen::Matrix3d potential_hessian(const TrapField& field, const Vec3& x, double h) {
    Eigen::Matrix3d hess;
    const double u0 = field.potential(x);
    for (int a = 0; a < 3; ++a) {
        Vec3 ea = Vec3::Zero();
        ea[a] = h;
        hess(a, a) = (field.potential(x + ea) - 2.0 * u0 + field.potential(x - ea)) / (h * h);
        for (int b = a + 1; b < 3; ++b) {
            Vec3 eb = Vec3::Zero();
            eb[b] = h;
            const double mixed = field.potential(x + ea + eb) - field.potential(x + ea - eb) -
                                 field.potential(x - ea + eb) + field.potential(x - ea - eb);
            hess(a, b) = hess(b, a) = mixed / (4.0 * h * h);
        }
    }
    return hess;
}

}  // namespace

NumericTrap numeric_frequencies(const TrapField& field, std::size_t site_id, const MinimumSearchOptions& options) {
    const FocusSite& site = field.site(site_id);
    const double w0 = site.waist;
    const double h = options.step_fraction * w0;

    Vec3 x = site.center;
    const double u_start = field.potential(x);
    if (!(u_start < 0.0))
        throw NoMinimumError("site " + std::to_string(site_id) + ": potential is not attractive at the focus");
    const double tolerance = options.gradient_tolerance * std::abs(u_start) / w0;

    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
        Vec3 g;
        const double u = field.potential_gradient(x, g);
        if (g.norm() < tolerance) {
            converged = true;
            break;
        }
        const Eigen::Matrix3d hess = gradient_hessian(field, x, h);
        Eigen::LLT<Eigen::Matrix3d> llt(hess);
        Vec3 dx = llt.info() == Eigen::Success ? Vec3(-llt.solve(g)) : Vec3(-g.normalized() * 0.1 * w0);
        if (dx.norm() > w0) dx *= w0 / dx.norm();
        int halvings = 0;
        while (field.potential(x + dx) > u && halvings < 30) {
            dx *= 0.5;
            ++halvings;
        }
        x += dx;
        if (dx.norm() < 1e-15 * w0) break;
    }
    if (!converged) {
        Vec3 g;
        field.potential_gradient(x, g);
        converged = g.norm() < tolerance;
    }
    if (!converged)
        throw NoMinimumError("site " + std::to_string(site_id) + ": minimum search did not converge");

    const Eigen::Matrix3d hess = potential_hessian(field, x, h);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(hess);
    if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0))
        throw NoMinimumError("site " + std::to_string(site_id) + ": stationary point is not a bound minimum");

    NumericTrap out;
    out.site_id = site_id;
    out.minimum = x;
    out.potential = field.potential(x);
    for (int a = 0; a < 3; ++a)
        out.frequencies[static_cast<std::size_t>(a)] = std::sqrt(eig.eigenvalues()[a] / field.species().mass) / two_pi;
    out.axes = eig.eigenvectors();
    out.scattering_rate = field.scattering_rate(x);
    return out;
}

std::vector<TrapSiteReport> characterize(const TrapField& field, const MinimumSearchOptions& options) {
    std::vector<TrapSiteReport> reports;
    reports.reserve(field.size());
    const double recoil = recoil_frequency_d2(field.species());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const NumericTrap trap = numeric_frequencies(field, i, options);
        TrapSiteReport r;
        r.site_id = i;
        r.depth = std::abs(trap.potential);
        r.axial_frequency = trap.frequencies[0];
        r.radial_frequency = std::sqrt(trap.frequencies[1] * trap.frequencies[2]);
        r.peak_scattering_rate = trap.scattering_rate;
        r.decoherence_time = 1.0 / trap.scattering_rate;
        r.recoil_frequency = recoil;
        r.lamb_dicke_parameter = std::sqrt(recoil / r.radial_frequency);
        reports.push_back(r);
    }
    return reports;
}

GateFeasibility gate_feasibility(const TrapSiteReport& report, double gate_time, double collisional_gate_time,
                                 const FeasibilityThresholds& thresholds) {
    if (!(gate_time > 0.0)) throw InvalidInput("gate time must be positive");
    GateFeasibility f;
    f.gate_time = gate_time;
    f.oscillation_ratio = (1.0 / report.radial_frequency) / gate_time;
    f.decoherence_ratio = report.decoherence_time / gate_time;
    f.oscillation_ok = f.oscillation_ratio >= thresholds.min_oscillation_ratio;
    f.decoherence_ok = f.decoherence_ratio >= thresholds.min_decoherence_ratio;
    if (collisional_gate_time > 0.0) {
        f.collisional_gate_time = collisional_gate_time;
        f.collisional_ratio = report.decoherence_time / collisional_gate_time;
        f.collisional_ok = f.collisional_ratio >= thresholds.min_collisional_ratio;
    }
    if (f.decoherence_ratio >= 10.0 * thresholds.quoted_decoherence_ratio) {
        f.note = "decoherence/gate ratio " + fmt_num(f.decoherence_ratio) + " exceeds the quoted " +
                 fmt_num(thresholds.quoted_decoherence_ratio) +
                 " by more than 10x; the reference ratio may assume a different decoherence basis";
    }
    return f;
}

SidebandCheck sideband_cooling_check(const TrapSiteReport& report) {
    SidebandCheck c;
    c.margin = report.radial_frequency / report.recoil_frequency;
    c.feasible = report.radial_frequency > report.recoil_frequency;
    return c;
}

void write_reports_csv(std::ostream& out, std::span<const TrapSiteReport> reports, std::span<const FocusSite> sites) {
    out << "site_id,array_id,row,col,depth_j,depth_mk,radial_frequency_hz,axial_frequency_hz,"
           "peak_scattering_rate_hz,decoherence_time_s,lamb_dicke,recoil_frequency_hz\n";
    for (const auto& r : reports) {
        const FocusSite& s = sites[r.site_id];
        out << r.site_id << ',' << (s.array_id == 1 ? "I" : "II") << ',' << s.row << ',' << s.col << ','
            << fmt_num(r.depth) << ',' << fmt_num(r.depth_mk()) << ',' << fmt_num(r.radial_frequency) << ','
            << fmt_num(r.axial_frequency) << ',' << fmt_num(r.peak_scattering_rate) << ','
            << fmt_num(r.decoherence_time) << ',' << fmt_num(r.lamb_dicke_parameter) << ','
            << fmt_num(r.recoil_frequency) << '\n';
    }
}

std::string summary_table(std::span<const TrapSiteReport> reports, std::span<const FocusSite> sites) {
    std::ostringstream ss;
    ss << "site  array  row  col   depth[mK]   nu_r[kHz]   nu_z[Hz]   tau_sc[ms]   eta\n";
    for (const auto& r : reports) {
        const FocusSite& s = sites[r.site_id];
        auto pad = [](std::string v, std::size_t n) { return v.size() >= n ? v : std::string(n - v.size(), ' ') + v; };
        ss << pad(std::to_string(r.site_id), 4) << pad(s.array_id == 1 ? "I" : "II", 7) << pad(std::to_string(s.row), 5)
           << pad(std::to_string(s.col), 5) << pad(fmt_fixed(r.depth_mk(), 3), 12)
           << pad(fmt_fixed(r.radial_frequency * 1e-3, 3), 12) << pad(fmt_fixed(r.axial_frequency, 1), 11)
           << pad(fmt_fixed(r.decoherence_time * 1e3, 3), 13) << pad(fmt_fixed(r.lamb_dicke_parameter, 4), 8) << '\n';
    }
    return ss.str();
}

}  // namespace microtrap
