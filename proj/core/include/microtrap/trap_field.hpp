#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "microtrap/atoms.hpp"
#include "microtrap/constants.hpp"
#include "microtrap/optics.hpp"

namespace microtrap {

/// Summed optical potential of a set of foci for one species. Each focus
/// carries its own light response (two beams may differ in wavelength).
///
/// Besides the exact sum over all foci, a site-local evaluation sums only the
/// foci whose centres lie within `neighbor_radius` of the site's focus; the
/// default radius (12 waists) truncates terms below exp(-288) of the peak.
class TrapField {
public:
    TrapField(std::vector<FocusSite> foci, AtomSpecies species);

    [[nodiscard]] const std::vector<FocusSite>& sites() const { return foci_; }
    [[nodiscard]] const AtomSpecies& species() const { return species_; }
    [[nodiscard]] std::size_t size() const { return foci_.size(); }
    [[nodiscard]] const FocusSite& site(std::size_t id) const;
    [[nodiscard]] const LightResponse& response(std::size_t id) const { return responses_[id]; }

    [[nodiscard]] double potential(const Vec3& p) const;
    double potential_gradient(const Vec3& p, Vec3& gradient) const;
    [[nodiscard]] double intensity(const Vec3& p) const;
    [[nodiscard]] double scattering_rate(const Vec3& p) const;

    /// Potential and gradient restricted to the neighbourhood of `site_id`.
    double local_potential_gradient(std::size_t site_id, const Vec3& p, Vec3& gradient) const;
    [[nodiscard]] std::span<const std::size_t> neighbors(std::size_t site_id) const;

    /// True when p lies further than `factor * w(z)` from every focus centre.
    [[nodiscard]] bool outside_all_sites(const Vec3& p, double factor) const;

    /// Upper bound on the radial trap frequency, from the curvature of the
    /// summed potential at each focus centre. Hz.
    [[nodiscard]] double max_radial_frequency() const;

private:
    std::vector<FocusSite> foci_;
    AtomSpecies species_;
    std::vector<LightResponse> responses_;
    std::vector<std::vector<std::size_t>> neighbors_;
};

}  // namespace microtrap
