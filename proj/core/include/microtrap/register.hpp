#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "microtrap/dynamics.hpp"
#include "microtrap/optics.hpp"

namespace microtrap {

enum class SiteState { Empty, F2, F3 };

std::string_view to_string(SiteState s);

struct RegisterSite {
    std::size_t site_id = 0;
    int array_id = 1;
    int row = 0;
    int col = 0;
    long count = 0;
    SiteState state = SiteState::Empty;

    bool operator==(const RegisterSite&) const = default;
};

/// Population-level qubit register: one entry per trap site plus a log of the
/// operations that produced it. Operations return new values.
struct RegisterState {
    std::vector<RegisterSite> sites;
    std::vector<std::string> log;

    [[nodiscard]] const RegisterSite& at(std::size_t site_id) const;
    /// Site id of lenslet (row, col) of the given array; throws UnknownSiteError.
    [[nodiscard]] std::size_t find(int row, int col, int array_id = 1) const;
    [[nodiscard]] std::size_t populated_count() const;
};

struct SiteSelector {
    bool all = false;
    std::size_t site_id = 0;

    static SiteSelector every() { return {true, 0}; }
    static SiteSelector one(std::size_t id) { return {false, id}; }
};

/// Counts are matched to sites by position; missing trailing counts are zero.
RegisterState load_register(std::span<const FocusSite> sites, std::span<const long> per_site_counts);

/// Alive atoms per site; the state label is the majority internal state.
RegisterState register_from_ensemble(const Ensemble& ensemble);

RegisterState pump(const RegisterState& reg, SiteSelector selector);
RegisterState remove(const RegisterState& reg, std::size_t site_id);

struct ReadoutSettings {
    bool repump_on = true;
    double detection_efficiency = 1.0;
    double detectability_threshold = 0.0;  // atoms
};

struct SiteSignal {
    std::size_t site_id = 0;
    double signal = 0.0;
    bool scatters = false;
    bool below_threshold = false;
};

/// Detection light resonant with F=3 only: with the repumper on every populated
/// site scatters, with it off only F=3 sites do. Signal = efficiency * count.
std::vector<SiteSignal> readout(const RegisterState& reg, const ReadoutSettings& settings);

void write_register_csv(std::ostream& out, const RegisterState& reg);
void write_readout_csv(std::ostream& out, const RegisterState& reg, std::span<const SiteSignal> signals);

}  // namespace microtrap
