#include "microtrap/register.hpp"

#include <algorithm>
#include <ostream>
#include <string>

#include "microtrap/diagnostics.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/io.hpp"

namespace microtrap {

std::string_view to_string(SiteState s) {
    switch (s) {
        case SiteState::Empty: return "empty";
        case SiteState::F2: return "F2";
        case SiteState::F3: return "F3";
    }
    return "?";
}

namespace {

std::string site_label(const RegisterSite& s) {
    return "site " + std::to_string(s.site_id) + " (r" + std::to_string(s.row) + "c" + std::to_string(s.col) +
           (s.array_id == 1 ? "" : ", array II") + ")";
}

}  // namespace

const RegisterSite& RegisterState::at(std::size_t site_id) const {
    if (site_id >= sites.size()) throw UnknownSiteError("unknown site id " + std::to_string(site_id));
    return sites[site_id];
}

std::size_t RegisterState::find(int row, int col, int array_id) const {
    for (const auto& s : sites)
        if (s.row == row && s.col == col && s.array_id == array_id) return s.site_id;
    throw UnknownSiteError("no trap site at row " + std::to_string(row) + ", col " + std::to_string(col));
}

std::size_t RegisterState::populated_count() const {
    return static_cast<std::size_t>(std::count_if(sites.begin(), sites.end(), [](const RegisterSite& s) { return s.count > 0; }));
}

RegisterState load_register(std::span<const FocusSite> sites, std::span<const long> per_site_counts) {
    RegisterState reg;
    reg.sites.reserve(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const long count = i < per_site_counts.size() ? per_site_counts[i] : 0;
        if (count < 0) throw InvalidInput("atom counts must be non-negative");
        RegisterSite s;
        s.site_id = sites[i].site_id;
        s.array_id = sites[i].array_id;
        s.row = sites[i].row;
        s.col = sites[i].col;
        s.count = count;
        s.state = count > 0 ? SiteState::F2 : SiteState::Empty;
        reg.sites.push_back(s);
    }
    reg.log.push_back("load " + std::to_string(reg.populated_count()) + " of " + std::to_string(reg.sites.size()) +
                      " sites populated, all F2");
    return reg;
}

RegisterState register_from_ensemble(const Ensemble& ensemble) {
    if (!ensemble.field) throw InvalidInput("ensemble has no trap field");
    const auto& foci = ensemble.field->sites();
    std::vector<long> f2(foci.size(), 0), f3(foci.size(), 0);
    for (const auto& a : ensemble.atoms) {
        if (!a.alive || !a.site_id || *a.site_id >= foci.size()) continue;
        (a.internal_state == HyperfineState::F2 ? f2 : f3)[*a.site_id]++;
    }
    std::vector<long> counts(foci.size());
    for (std::size_t i = 0; i < foci.size(); ++i) counts[i] = f2[i] + f3[i];
    RegisterState reg = load_register(foci, counts);
    for (std::size_t i = 0; i < foci.size(); ++i)
        if (f3[i] > f2[i]) reg.sites[i].state = SiteState::F3;
    reg.log.back() = "from ensemble at t=" + fmt_num(ensemble.time) + " s";
    return reg;
}

RegisterState pump(const RegisterState& reg, SiteSelector selector) {
    RegisterState out = reg;
    if (selector.all) {
        std::size_t pumped = 0;
        for (auto& s : out.sites)
            if (s.count > 0) {
                s.state = SiteState::F3;
                ++pumped;
            }
        if (pumped == 0) {
            warn("pump all: no populated sites, nothing to do");
            out.log.push_back("pump all (no-op: register empty)");
        } else {
            out.log.push_back("pump all -> " + std::to_string(pumped) + " sites F3");
        }
        return out;
    }
    if (selector.site_id >= out.sites.size())
        throw UnknownSiteError("unknown site id " + std::to_string(selector.site_id));
    RegisterSite& s = out.sites[selector.site_id];
    if (s.count == 0) {
        warn("pump " + site_label(s) + ": site is empty, nothing to do");
        out.log.push_back("pump " + site_label(s) + " (no-op: empty)");
        return out;
    }
    s.state = SiteState::F3;
    out.log.push_back("pump " + site_label(s) + " -> F3");
    return out;
}

RegisterState remove(const RegisterState& reg, std::size_t site_id) {
    if (site_id >= reg.sites.size()) throw UnknownSiteError("unknown site id " + std::to_string(site_id));
    RegisterState out = reg;
    RegisterSite& s = out.sites[site_id];
    if (s.count == 0) {
        out.log.push_back("remove " + site_label(s) + " (no-op: empty)");
        return out;
    }
    s.count = 0;
    s.state = SiteState::Empty;
    out.log.push_back("remove " + site_label(s));
    return out;
}

std::vector<SiteSignal> readout(const RegisterState& reg, const ReadoutSettings& settings) {
    if (settings.detectability_threshold < 0.0) throw InvalidInput("detectability threshold must be non-negative");
    std::vector<SiteSignal> signals;
    signals.reserve(reg.sites.size());
    for (const auto& s : reg.sites) {
        SiteSignal sig;
        sig.site_id = s.site_id;
        sig.scatters = s.count > 0 && (settings.repump_on || s.state == SiteState::F3);
        if (sig.scatters) {
            if (static_cast<double>(s.count) < settings.detectability_threshold)
                sig.below_threshold = true;
            else
                sig.signal = settings.detection_efficiency * static_cast<double>(s.count);
        }
        signals.push_back(sig);
    }
    return signals;
}

void write_register_csv(std::ostream& out, const RegisterState& reg) {
    out << "site_id,array_id,row,col,count,state\n";
    for (const auto& s : reg.sites)
        out << s.site_id << ',' << (s.array_id == 1 ? "I" : "II") << ',' << s.row << ',' << s.col << ',' << s.count << ','
            << to_string(s.state) << '\n';
}

void write_readout_csv(std::ostream& out, const RegisterState& reg, std::span<const SiteSignal> signals) {
    out << "site_id,row,col,count,state,signal,scatters,below_threshold\n";
    for (const auto& sig : signals) {
        const auto& s = reg.at(sig.site_id);
        out << sig.site_id << ',' << s.row << ',' << s.col << ',' << s.count << ',' << to_string(s.state) << ','
            << fmt_num(sig.signal) << ',' << (sig.scatters ? 1 : 0) << ',' << (sig.below_threshold ? 1 : 0) << '\n';
    }
}

}  // namespace microtrap
