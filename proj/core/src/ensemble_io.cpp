#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "microtrap/dynamics.hpp"
#include "microtrap/errors.hpp"

// Format (one record per line, whitespace separated):
//   microtrap-ensemble 1
//   seed <u64>
//   time <hexfloat>
//   sites <count of trap sites in the field>
//   atoms <N>
//   <x> <y> <z> <vx> <vy> <vz> <F2|F3> <alive 0|1> <site id or -> <stream> <counter>   (N lines)

namespace microtrap {
namespace {

std::string hex(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::hex);
    (void)ec;
    return {buf.data(), end};
}

double parse_hex(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    bool negative = false;
    if (!s.empty() && s[0] == '-') {
        negative = true;
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v, std::chars_format::hex);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw InvalidInput("ensemble dump: bad number '" + s + "'");
    return negative ? -v : v;
}

std::string expect_key(std::istream& in, const char* key) {
    std::string k, v;
    if (!(in >> k >> v) || k != key) throw InvalidInput(std::string("ensemble dump: expected '") + key + "'");
    return v;
}

}  // namespace

void write_ensemble(std::ostream& out, const Ensemble& ensemble) {
    out << "microtrap-ensemble 1\n";
    out << "seed " << ensemble.seed << '\n';
    out << "time " << hex(ensemble.time) << '\n';
    out << "sites " << (ensemble.field ? ensemble.field->size() : 0) << '\n';
    out << "atoms " << ensemble.atoms.size() << '\n';
    for (const auto& a : ensemble.atoms) {
        out << hex(a.position.x()) << ' ' << hex(a.position.y()) << ' ' << hex(a.position.z()) << ' '
            << hex(a.velocity.x()) << ' ' << hex(a.velocity.y()) << ' ' << hex(a.velocity.z()) << ' '
            << (a.internal_state == HyperfineState::F2 ? "F2" : "F3") << ' ' << (a.alive ? 1 : 0) << ' '
            << (a.site_id ? std::to_string(*a.site_id) : std::string("-")) << ' ' << a.rng_stream << ' '
            << a.rng_counter << '\n';
    }
}

Ensemble read_ensemble(std::istream& in, std::shared_ptr<const TrapField> field) {
    std::string magic, version;
    if (!(in >> magic >> version) || magic != "microtrap-ensemble") throw InvalidInput("not a microtrap ensemble dump");
    if (version != "1") throw InvalidInput("unsupported ensemble dump version " + version);

    Ensemble ens;
    ens.field = std::move(field);
    ens.seed = std::stoull(expect_key(in, "seed"));
    ens.time = parse_hex(expect_key(in, "time"));
    const std::size_t sites = std::stoull(expect_key(in, "sites"));
    if (ens.field && ens.field->size() != sites)
        throw InvalidInput("ensemble dump was written for " + std::to_string(sites) + " sites, field has " +
                           std::to_string(ens.field->size()));
    const std::size_t n = std::stoull(expect_key(in, "atoms"));
    ens.atoms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<std::string, 6> f;
        std::string state, site;
        int alive = 0;
        AtomState a;
        if (!(in >> f[0] >> f[1] >> f[2] >> f[3] >> f[4] >> f[5] >> state >> alive >> site >> a.rng_stream >> a.rng_counter))
            throw InvalidInput("ensemble dump truncated at atom " + std::to_string(i));
        a.position = {parse_hex(f[0]), parse_hex(f[1]), parse_hex(f[2])};
        a.velocity = {parse_hex(f[3]), parse_hex(f[4]), parse_hex(f[5])};
        if (state == "F2")
            a.internal_state = HyperfineState::F2;
        else if (state == "F3")
            a.internal_state = HyperfineState::F3;
        else
            throw InvalidInput("ensemble dump: bad internal state '" + state + "'");
        a.alive = alive != 0;
        if (site != "-") a.site_id = std::stoull(site);
        ens.atoms.push_back(a);
    }
    return ens;
}

}  // namespace microtrap
