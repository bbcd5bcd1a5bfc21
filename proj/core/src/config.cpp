#include "microtrap/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <string>

#include "microtrap/errors.hpp"
#include "microtrap/io.hpp"

namespace microtrap {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

const std::set<std::string, std::less<>> known_sections = {"species",  "lens_array", "beam.1",     "beam.2",
                                                           "dynamics", "imaging",    "register",   "thresholds",
                                                           "interleave"};

class Document {
public:
    Document(std::string_view text, std::string source) : source_(std::move(source)) {
        std::string section;
        int line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t eol = text.find('\n', pos);
            std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
            pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
            ++line_no;
            // Comments start at '#' or ';' (whole line, or after whitespace).
            for (std::size_t i = 0; i < line.size(); ++i) {
                if ((line[i] == '#' || line[i] == ';') && (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
                    line = line.substr(0, i);
                    break;
                }
            }
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') fail(line_no, "malformed section header '" + std::string(line) + "'");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (section == "beam") section = "beam.1";
                if (!known_sections.contains(section)) fail(line_no, "unknown section [" + section + "]");
                if (!seen_.insert(section).second) fail(line_no, "duplicate section [" + section + "]");
                entries_[section];
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos) fail(line_no, "expected 'key = value', got '" + std::string(line) + "'");
            if (section.empty()) fail(line_no, "key outside of any section");
            const std::string key(trim(line.substr(0, eq)));
            const std::string value(trim(line.substr(eq + 1)));
            if (key.empty()) fail(line_no, "empty key");
            auto& sec = entries_[section];
            if (sec.contains(key)) fail(line_no, section + "." + key + ": duplicate key");
            sec[key] = Entry{value, line_no, false};
        }
    }

    [[nodiscard]] bool has_section(const std::string& s) const { return entries_.contains(s); }

    Entry* find(const std::string& section, const std::string& key) {
        auto sit = entries_.find(section);
        if (sit == entries_.end()) return nullptr;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return nullptr;
        kit->second.used = true;
        return &kit->second;
    }

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
    }
    [[noreturn]] void fail_key(const std::string& section, const std::string& key, const Entry* e, const std::string& msg) const {
        throw ConfigError(source_ + (e ? ":" + std::to_string(e->line) : std::string()) + ": " + section + "." + key +
                          ": " + msg);
    }

    double number(const std::string& s, const std::string& k, double fallback) {
        Entry* e = find(s, k);
        return e ? to_number(s, k, e, e->value) : fallback;
    }

    double to_number(const std::string& s, const std::string& k, const Entry* e, std::string_view text) const {
        text = trim(text);
        double v = 0.0;
        const char* first = text.data();
        if (!text.empty() && text.front() == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
            fail_key(s, k, e, "expected a number, got '" + std::string(text) + "'");
        return v;
    }

    long integer(const std::string& s, const std::string& k, long fallback) {
        Entry* e = find(s, k);
        if (!e) return fallback;
        long v = 0;
        auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
        if (ec != std::errc{} || ptr != e->value.data() + e->value.size())
            fail_key(s, k, e, "expected an integer, got '" + e->value + "'");
        return v;
    }

    bool boolean(const std::string& s, const std::string& k, bool fallback) {
        Entry* e = find(s, k);
        if (!e) return fallback;
        std::string v = e->value;
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "off" || v == "no" || v == "0") return false;
        fail_key(s, k, e, "expected true/false, got '" + e->value + "'");
    }

    std::vector<double> numbers(const std::string& s, const std::string& k, std::vector<double> fallback) {
        Entry* e = find(s, k);
        if (!e) return fallback;
        std::vector<double> out;
        for (auto part : split(e->value, ',')) out.push_back(to_number(s, k, e, part));
        return out;
    }

    void check_unused() const {
        for (const auto& [section, keys] : entries_)
            for (const auto& [key, entry] : keys)
                if (!entry.used)
                    throw ConfigError(source_ + ":" + std::to_string(entry.line) + ": " + section + "." + key +
                                      ": unknown key");
    }

    [[nodiscard]] const std::string& source() const { return source_; }

private:
    std::string source_;
    std::map<std::string, std::map<std::string, Entry>> entries_;
    std::set<std::string> seen_;
};

template <class F>
void wrap(Document& doc, const std::string& section, const std::string& key, F&& f) {
    try {
        f();
    } catch (const InvalidInput& ex) {
        Entry* e = doc.find(section, key);
        doc.fail_key(section, key, e, ex.what());
    }
}

void require_positive(Document& doc, const std::string& s, const std::string& k, double v) {
    if (!(v > 0.0)) doc.fail_key(s, k, doc.find(s, k), "must be positive");
}

}  // namespace

std::vector<char> parse_mask(std::string_view spec, int rows, int cols) {
    std::vector<char> mask(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0);
    spec = trim(spec);
    if (spec == "all") {
        std::fill(mask.begin(), mask.end(), 1);
        return mask;
    }
    if (spec == "none" || spec.empty()) return mask;

    auto parse_range = [](std::string_view r, int limit) {
        auto parse_int = [](std::string_view t) {
            t = trim(t);
            int v = 0;
            auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
            if (ec != std::errc{} || ptr != t.data() + t.size()) throw InvalidInput("bad lenslet index '" + std::string(t) + "'");
            return v;
        };
        const std::size_t dash = r.find('-');
        int lo = 0, hi = 0;
        if (dash == std::string_view::npos) {
            lo = hi = parse_int(r);
        } else {
            lo = parse_int(r.substr(0, dash));
            hi = parse_int(r.substr(dash + 1));
        }
        if (lo < 1 || hi > limit || lo > hi)
            throw InvalidInput("lenslet range '" + std::string(trim(r)) + "' outside 1.." + std::to_string(limit));
        return std::pair{lo, hi};
    };

    for (auto rect : split(spec, ',')) {
        const std::size_t colon = rect.find(':');
        if (colon == std::string_view::npos) throw InvalidInput("mask rectangle '" + std::string(rect) + "' needs rows:cols");
        const auto [r0, r1] = parse_range(rect.substr(0, colon), rows);
        const auto [c0, c1] = parse_range(rect.substr(colon + 1), cols);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) mask[static_cast<std::size_t>(r - 1) * cols + (c - 1)] = 1;
    }
    return mask;
}

std::vector<FocusSite> RunConfig::foci() const { return expand_foci(geometry, beams); }

std::vector<long> RunConfig::register_counts(std::size_t sites) const {
    if (!register_.counts.empty()) {
        std::vector<long> c = register_.counts;
        c.resize(sites, 0);
        return c;
    }
    return std::vector<long>(sites, register_.atoms_per_site);
}

RunConfig parse_config(std::string_view text, std::string_view source_name) {
    Document doc(text, std::string(source_name));
    RunConfig cfg;
    cfg.source = std::string(source_name);

    // species
    {
        const std::string s = "species";
        AtomSpecies& sp = cfg.species;
        sp.mass = doc.number(s, "mass", sp.mass);
        sp.d2_wavelength = doc.number(s, "d2_wavelength", sp.d2_wavelength);
        sp.d1_wavelength = doc.number(s, "d1_wavelength", sp.d1_wavelength);
        sp.d2_linewidth = doc.number(s, "d2_linewidth", sp.d2_linewidth);
        sp.d1_linewidth = doc.number(s, "d1_linewidth", sp.d1_linewidth);
        sp.saturation_intensity_d2 = doc.number(s, "saturation_intensity_d2", sp.saturation_intensity_d2);
        if (Entry* e = doc.find(s, "label")) sp.label = e->value;
        try {
            sp.validate();
        } catch (const InvalidInput& ex) {
            throw ConfigError(doc.source() + ": species: " + ex.what());
        }
    }

    // lens array
    {
        const std::string s = "lens_array";
        if (!doc.has_section(s)) throw ConfigError(doc.source() + ": missing section [lens_array]");
        LensArrayGeometry& g = cfg.geometry;
        g.pitch = doc.number(s, "pitch", g.pitch);
        g.focal_length = doc.number(s, "focal_length", g.focal_length);
        g.rows = static_cast<int>(doc.integer(s, "rows", g.rows));
        g.cols = static_cast<int>(doc.integer(s, "cols", g.cols));
        require_positive(doc, s, "pitch", g.pitch);
        require_positive(doc, s, "focal_length", g.focal_length);
        if (g.rows < 1) doc.fail_key(s, "rows", doc.find(s, "rows"), "must be at least 1");
        if (g.cols < 1) doc.fail_key(s, "cols", doc.find(s, "cols"), "must be at least 1");
        g.transmission = doc.number(s, "transmission", g.transmission);
        if (!(g.transmission > 0.0) || g.transmission > 1.0)
            doc.fail_key(s, "transmission", doc.find(s, "transmission"), "must lie in (0, 1]");
        g.envelope_waist = doc.number(s, "envelope_waist", g.envelope_waist);
        if (g.envelope_waist < 0.0) doc.fail_key(s, "envelope_waist", doc.find(s, "envelope_waist"), "must be non-negative");
        if (Entry* e = doc.find(s, "tilt_axis")) {
            if (e->value == "vertical")
                g.tilt_axis = TiltAxis::Vertical;
            else if (e->value == "horizontal")
                g.tilt_axis = TiltAxis::Horizontal;
            else
                doc.fail_key(s, "tilt_axis", e, "expected vertical or horizontal, got '" + e->value + "'");
        }
        Entry* mask = doc.find(s, "illuminated_mask");
        wrap(doc, s, "illuminated_mask", [&] { g.illuminated = parse_mask(mask ? mask->value : "all", g.rows, g.cols); });
        if (g.illuminated_count() == 0) doc.fail_key(s, "illuminated_mask", mask, "illuminated_mask empty");
    }

    // beams
    for (int b = 1; b <= 2; ++b) {
        const std::string s = "beam." + std::to_string(b);
        if (!doc.has_section(s)) continue;
        IlluminationBeam beam;
        beam.array_id = b;
        beam.polarization = b == 1 ? Polarization::H : Polarization::V;

        Entry* power = doc.find(s, "power");
        Entry* per_trap = doc.find(s, "power_per_trap");
        if ((power != nullptr) == (per_trap != nullptr))
            doc.fail_key(s, "power", power ? power : per_trap, "give exactly one of power or power_per_trap");
        if (power) {
            beam.total_power = doc.to_number(s, "power", power, power->value);
        } else {
            const double ppt = doc.to_number(s, "power_per_trap", per_trap, per_trap->value);
            beam.total_power = ppt * static_cast<double>(cfg.geometry.illuminated_count()) / cfg.geometry.transmission;
        }
        if (beam.total_power < 0.0) doc.fail_key(s, power ? "power" : "power_per_trap", power ? power : per_trap, "must be non-negative");

        Entry* wl = doc.find(s, "wavelength");
        Entry* offset = doc.find(s, "delta_lambda_below_d2");
        if ((wl != nullptr) == (offset != nullptr))
            doc.fail_key(s, "wavelength", wl ? wl : offset, "give exactly one of wavelength or delta_lambda_below_d2");
        if (wl) {
            beam.wavelength = doc.to_number(s, "wavelength", wl, wl->value);
        } else {
            const double off = doc.to_number(s, "delta_lambda_below_d2", offset, offset->value);
            beam.wavelength = cfg.species.d2_wavelength + off;
        }
        require_positive(doc, s, wl ? "wavelength" : "delta_lambda_below_d2", beam.wavelength);

        beam.focus_waist = doc.number(s, "waist", beam.focus_waist);
        require_positive(doc, s, "waist", beam.focus_waist);
        beam.tilt_angle = doc.number(s, "angle", 0.0);
        if (!(std::abs(beam.tilt_angle) < max_tilt_angle))
            doc.fail_key(s, "angle", doc.find(s, "angle"), "beyond the paraxial bound of 0.2 rad");
        if (Entry* e = doc.find(s, "polarization")) {
            if (e->value == "H")
                beam.polarization = Polarization::H;
            else if (e->value == "V")
                beam.polarization = Polarization::V;
            else
                doc.fail_key(s, "polarization", e, "expected H or V, got '" + e->value + "'");
        }
        try {
            light_response(cfg.species, detuning_from_wavelength(cfg.species, beam.wavelength));
        } catch (const ResonantLightError& ex) {
            doc.fail_key(s, wl ? "wavelength" : "delta_lambda_below_d2", wl ? wl : offset, ex.what());
        }
        cfg.beams.push_back(beam);
    }
    if (cfg.beams.empty()) throw ConfigError(doc.source() + ": at least one [beam.1] section is required");
    if (cfg.beams.size() == 2 && cfg.beams[0].polarization == cfg.beams[1].polarization)
        throw ConfigError(doc.source() + ": beam.2.polarization: two beams must carry distinct polarization tags");

    // dynamics
    {
        const std::string s = "dynamics";
        DynamicsConfig& d = cfg.dynamics;
        d.temperature = doc.number(s, "temperature", d.temperature);
        require_positive(doc, s, "temperature", d.temperature);
        const long aps = doc.integer(s, "atoms_per_site", static_cast<long>(d.atoms_per_site));
        if (aps < 0) doc.fail_key(s, "atoms_per_site", doc.find(s, "atoms_per_site"), "must be non-negative");
        d.atoms_per_site = static_cast<std::size_t>(aps);
        d.dt = doc.number(s, "dt", d.dt);
        if (d.dt < 0.0) doc.fail_key(s, "dt", doc.find(s, "dt"), "must be non-negative (0 selects the default)");
        d.dt_fraction = doc.number(s, "dt_fraction", d.dt_fraction);
        if (!(d.dt_fraction >= 20.0)) doc.fail_key(s, "dt_fraction", doc.find(s, "dt_fraction"), "must be at least 20 (stability bound)");
        d.storage_time = doc.number(s, "storage_time", d.storage_time);
        require_positive(doc, s, "storage_time", d.storage_time);
        d.samples = static_cast<int>(doc.integer(s, "samples", d.samples));
        if (d.samples < 1) doc.fail_key(s, "samples", doc.find(s, "samples"), "must be at least 1");
        d.residual_rate = doc.number(s, "residual_rate", d.residual_rate);
        if (d.residual_rate < 0.0) doc.fail_key(s, "residual_rate", doc.find(s, "residual_rate"), "must be non-negative");
        if (Entry* e = doc.find(s, "residual_axis")) {
            if (e->value == "x")
                d.residual_axis = Vec3::UnitX();
            else if (e->value == "y")
                d.residual_axis = Vec3::UnitY();
            else if (e->value == "z")
                d.residual_axis = Vec3::UnitZ();
            else
                doc.fail_key(s, "residual_axis", e, "expected x, y or z, got '" + e->value + "'");
        }
        d.tof_times = doc.numbers(s, "tof_times", d.tof_times);
        for (double t : d.tof_times)
            if (t < 0.0) doc.fail_key(s, "tof_times", doc.find(s, "tof_times"), "times must be non-negative");
        d.tof_atoms_per_site = static_cast<std::size_t>(std::max(0L, doc.integer(s, "tof_atoms_per_site", 0)));
        d.gravity = doc.boolean(s, "gravity", d.gravity);
        const long seed = doc.integer(s, "seed", static_cast<long>(d.seed));
        if (seed < 0) doc.fail_key(s, "seed", doc.find(s, "seed"), "must be non-negative");
        d.seed = static_cast<std::uint64_t>(seed);
        d.threads = static_cast<unsigned>(std::max(0L, doc.integer(s, "threads", 0)));
        d.target_lifetime = doc.number(s, "target_lifetime", d.target_lifetime);
        require_positive(doc, s, "target_lifetime", d.target_lifetime);
        d.calibration_tolerance = doc.number(s, "calibration_tolerance", d.calibration_tolerance);
        require_positive(doc, s, "calibration_tolerance", d.calibration_tolerance);
        d.calibration_dt_fraction = doc.number(s, "calibration_dt_fraction", d.calibration_dt_fraction);
        if (!(d.calibration_dt_fraction >= 20.0))
            doc.fail_key(s, "calibration_dt_fraction", doc.find(s, "calibration_dt_fraction"), "must be at least 20");
        d.calibration_samples = static_cast<int>(doc.integer(s, "calibration_samples", d.calibration_samples));
        if (d.calibration_samples < 2)
            doc.fail_key(s, "calibration_samples", doc.find(s, "calibration_samples"), "must be at least 2");
        d.calibration_window = doc.number(s, "calibration_window", d.calibration_window);
        require_positive(doc, s, "calibration_window", d.calibration_window);
        d.calibration_atoms_per_site = static_cast<std::size_t>(std::max(0L, doc.integer(s, "calibration_atoms_per_site", 0)));
    }

    // imaging
    {
        const std::string s = "imaging";
        ImagingConfig& im = cfg.imaging;
        im.psf_sigma = doc.number(s, "psf_sigma", im.psf_sigma);
        require_positive(doc, s, "psf_sigma", im.psf_sigma);
        im.tilt_elongation = doc.number(s, "tilt_elongation", im.tilt_elongation);
        if (!(im.tilt_elongation >= 1.0)) doc.fail_key(s, "tilt_elongation", doc.find(s, "tilt_elongation"), "must be >= 1");
        im.pixel_pitch = doc.number(s, "pixel_pitch", im.pixel_pitch);
        require_positive(doc, s, "pixel_pitch", im.pixel_pitch);
        im.margin = doc.number(s, "margin", im.margin);
        if (im.margin < 0.0) doc.fail_key(s, "margin", doc.find(s, "margin"), "must be non-negative");
        im.shot_noise = doc.boolean(s, "shot_noise", im.shot_noise);
        im.threshold_k = doc.number(s, "threshold_k", im.threshold_k);
        im.relative_floor = doc.number(s, "relative_floor", im.relative_floor);
        im.per_atom_rate = doc.number(s, "per_atom_rate", im.per_atom_rate);
        require_positive(doc, s, "per_atom_rate", im.per_atom_rate);
        im.exposure = doc.number(s, "exposure", im.exposure);
        require_positive(doc, s, "exposure", im.exposure);
    }

    // register
    {
        const std::string s = "register";
        RegisterConfig& r = cfg.register_;
        r.atoms_per_site = doc.integer(s, "atoms_per_site", r.atoms_per_site);
        if (r.atoms_per_site < 0) doc.fail_key(s, "atoms_per_site", doc.find(s, "atoms_per_site"), "must be non-negative");
        if (Entry* e = doc.find(s, "counts")) {
            for (auto part : split(e->value, ',')) {
                const double v = doc.to_number(s, "counts", e, part);
                if (v < 0.0 || v != std::floor(v)) doc.fail_key(s, "counts", e, "counts must be non-negative integers");
                r.counts.push_back(static_cast<long>(v));
            }
        }
        r.detection_efficiency = doc.number(s, "detection_efficiency", r.detection_efficiency);
        require_positive(doc, s, "detection_efficiency", r.detection_efficiency);
        r.detectability_threshold = doc.number(s, "detectability_threshold", r.detectability_threshold);
        if (r.detectability_threshold < 0.0)
            doc.fail_key(s, "detectability_threshold", doc.find(s, "detectability_threshold"), "must be non-negative");
    }

    // thresholds
    {
        const std::string s = "thresholds";
        ThresholdConfig& t = cfg.thresholds;
        t.gate_time = doc.number(s, "gate_time", t.gate_time);
        require_positive(doc, s, "gate_time", t.gate_time);
        t.collisional_gate_time = doc.number(s, "collisional_gate_time", t.collisional_gate_time);
        if (t.collisional_gate_time < 0.0)
            doc.fail_key(s, "collisional_gate_time", doc.find(s, "collisional_gate_time"), "must be non-negative");
        t.feasibility.min_oscillation_ratio = doc.number(s, "min_oscillation_ratio", t.feasibility.min_oscillation_ratio);
        t.feasibility.min_decoherence_ratio = doc.number(s, "min_decoherence_ratio", t.feasibility.min_decoherence_ratio);
        t.feasibility.min_collisional_ratio = doc.number(s, "min_collisional_ratio", t.feasibility.min_collisional_ratio);
        t.feasibility.quoted_decoherence_ratio = doc.number(s, "quoted_decoherence_ratio", t.feasibility.quoted_decoherence_ratio);
    }

    // interleave
    {
        const std::string s = "interleave";
        InterleaveConfig& il = cfg.interleave;
        il.angle_start = doc.number(s, "angle_start", il.angle_start);
        il.angle_stop = doc.number(s, "angle_stop", il.angle_stop);
        for (const char* k : {"angle_start", "angle_stop"}) {
            const double v = std::string(k) == "angle_start" ? il.angle_start : il.angle_stop;
            if (!(std::abs(v) < max_tilt_angle)) doc.fail_key(s, k, doc.find(s, k), "beyond the paraxial bound of 0.2 rad");
        }
        il.angle_steps = static_cast<int>(doc.integer(s, "angle_steps", il.angle_steps));
        if (il.angle_steps < 1) doc.fail_key(s, "angle_steps", doc.find(s, "angle_steps"), "must be at least 1");
        il.cross_section_half_width = doc.number(s, "cross_section_half_width", il.cross_section_half_width);
        require_positive(doc, s, "cross_section_half_width", il.cross_section_half_width);
        il.cross_section_points = static_cast<int>(doc.integer(s, "cross_section_points", il.cross_section_points));
        if (il.cross_section_points < 3)
            doc.fail_key(s, "cross_section_points", doc.find(s, "cross_section_points"), "must be at least 3");
    }

    doc.check_unused();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& ex) {
        throw ConfigError(ex.what());
    }
    return parse_config(text, path.filename().string());
}

}  // namespace microtrap
