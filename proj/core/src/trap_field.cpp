#include "microtrap/trap_field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "microtrap/errors.hpp"

namespace microtrap {

namespace {
constexpr double neighbor_radius_in_waists = 12.0;
}

TrapField::TrapField(std::vector<FocusSite> foci, AtomSpecies species)
    : foci_(std::move(foci)), species_(std::move(species)) {
    species_.validate();
    if (foci_.empty()) throw ConfigError("trap field needs at least one focus");
    responses_.reserve(foci_.size());
    double max_waist = 0.0;
    for (std::size_t i = 0; i < foci_.size(); ++i) {
        if (foci_[i].site_id != i) throw ConfigError("focus site ids must be 0..N-1 in order");
        responses_.push_back(light_response(species_, detuning_from_wavelength(species_, foci_[i].wavelength)));
        max_waist = std::max(max_waist, foci_[i].waist);
    }
    const double radius = neighbor_radius_in_waists * max_waist;
    neighbors_.resize(foci_.size());
    for (std::size_t i = 0; i < foci_.size(); ++i) {
        for (std::size_t j = 0; j < foci_.size(); ++j) {
            const Vec3 d = foci_[j].center - foci_[i].center;
            if (d.head<2>().norm() <= radius) neighbors_[i].push_back(j);
        }
    }
}

const FocusSite& TrapField::site(std::size_t id) const {
    if (id >= foci_.size()) throw UnknownSiteError("unknown site id " + std::to_string(id));
    return foci_[id];
}

double TrapField::potential(const Vec3& p) const {
    double u = 0.0;
    for (std::size_t i = 0; i < foci_.size(); ++i) u += responses_[i].shift * gaussian_intensity(foci_[i], p);
    return u;
}

double TrapField::potential_gradient(const Vec3& p, Vec3& gradient) const {
    double u = 0.0;
    gradient.setZero();
    Vec3 g;
    for (std::size_t i = 0; i < foci_.size(); ++i) {
        const double intensity = gaussian_intensity_gradient(foci_[i], p, g);
        u += responses_[i].shift * intensity;
        gradient += responses_[i].shift * g;
    }
    return u;
}

double TrapField::local_potential_gradient(std::size_t site_id, const Vec3& p, Vec3& gradient) const {
    const auto& near = neighbors_[site_id];
    if (near.size() == 1) {
        const std::size_t i = near.front();
        const double intensity = gaussian_intensity_gradient(foci_[i], p, gradient);
        gradient *= responses_[i].shift;
        return responses_[i].shift * intensity;
    }
    double u = 0.0;
    gradient.setZero();
    Vec3 g;
    for (std::size_t i : near) {
        const double intensity = gaussian_intensity_gradient(foci_[i], p, g);
        u += responses_[i].shift * intensity;
        gradient += responses_[i].shift * g;
    }
    return u;
}

std::span<const std::size_t> TrapField::neighbors(std::size_t site_id) const {
    if (site_id >= neighbors_.size()) throw UnknownSiteError("unknown site id " + std::to_string(site_id));
    return neighbors_[site_id];
}

double TrapField::intensity(const Vec3& p) const { return total_intensity(foci_, p); }

double TrapField::scattering_rate(const Vec3& p) const {
    double rate = 0.0;
    for (std::size_t i = 0; i < foci_.size(); ++i) rate += responses_[i].scattering * gaussian_intensity(foci_[i], p);
    return rate;
}

bool TrapField::outside_all_sites(const Vec3& p, double factor) const {
    for (const auto& s : foci_) {
        const Vec3 d = p - s.center;
        const double w = s.waist_at(d.z());
        if (d.squaredNorm() <= factor * factor * w * w) return false;
    }
    return true;
}

double TrapField::max_radial_frequency() const {
    double best = 0.0;
    for (std::size_t i = 0; i < foci_.size(); ++i) {
        const Vec3 c = foci_[i].center;
        const double h = foci_[i].waist / 100.0;
        Eigen::Matrix3d hess;
        for (int a = 0; a < 3; ++a) {
            Vec3 gp, gm;
            Vec3 step = Vec3::Zero();
            step[a] = h;
            local_potential_gradient(i, c + step, gp);
            local_potential_gradient(i, c - step, gm);
            hess.col(a) = (gp - gm) / (2.0 * h);
        }
        const Eigen::Matrix3d sym = 0.5 * (hess + hess.transpose());
        const double top = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(sym, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
        if (top > 0.0) best = std::max(best, std::sqrt(top / species_.mass) / constants::two_pi);
    }
    return best;
}

}  // namespace microtrap
