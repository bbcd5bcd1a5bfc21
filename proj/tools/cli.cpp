#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "microtrap/config.hpp"
#include "microtrap/constants.hpp"
#include "microtrap/diagnostics.hpp"
#include "microtrap/dynamics.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/imaging.hpp"
#include "microtrap/io.hpp"
#include "microtrap/optics.hpp"
#include "microtrap/register.hpp"
#include "microtrap/rng.hpp"
#include "microtrap/trap_field.hpp"
#include "microtrap/traps.hpp"

namespace microtrap::cli {

namespace {

namespace fs = std::filesystem;

/// Everything a command produces; written only after the command has finished.
struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;

    void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }

    void commit(const fs::path& dir) const {
        for (const auto& [name, content] : files) atomic_write(dir / name, content);
    }
};

template <class F>
std::string to_text(F&& f) {
    std::ostringstream ss;
    f(ss);
    return ss.str();
}

std::string two_digits(std::size_t n) {
    std::string s = std::to_string(n);
    return s.size() < 2 ? "0" + s : s;
}

// ---------------------------------------------------------------- characterize

void cmd_characterize(const RunConfig& cfg, Outputs& outputs, std::ostream& out) {
    const auto foci = cfg.foci();
    const TrapField field(foci, cfg.species);
    const auto reports = characterize(field);

    outputs.add("foci.csv", to_text([&](std::ostream& s) { write_foci_csv(s, foci); }));
    outputs.add("sites.csv", to_text([&](std::ostream& s) { write_reports_csv(s, reports, foci); }));

    std::ostringstream summary;
    summary << "config: " << cfg.source << '\n' << "sites: " << reports.size() << "\n\n";
    summary << summary_table(reports, foci);
    if (!reports.empty()) {
        const auto& r = reports.front();
        const auto g = gate_feasibility(r, cfg.thresholds.gate_time, cfg.thresholds.collisional_gate_time,
                                        cfg.thresholds.feasibility);
        const auto sb = sideband_cooling_check(r);
        summary << "\nsite 0 feasibility (gate " << fmt_num(g.gate_time) << " s)\n"
                << "  oscillation ratio  " << fmt_fixed(g.oscillation_ratio, 2) << (g.oscillation_ok ? "  ok" : "  FAIL") << '\n'
                << "  decoherence ratio  " << fmt_fixed(g.decoherence_ratio, 1) << (g.decoherence_ok ? "  ok" : "  FAIL") << '\n';
        if (g.collisional_gate_time > 0.0)
            summary << "  collisional ratio  " << fmt_fixed(g.collisional_ratio, 2) << (g.collisional_ok ? "  ok" : "  FAIL")
                    << " (gate " << fmt_num(g.collisional_gate_time) << " s)\n";
        if (!g.note.empty()) summary << "  note: " << g.note << '\n';
        summary << "  sideband cooling   nu_r/nu_rec = " << fmt_fixed(sb.margin, 2) << (sb.feasible ? "  feasible" : "  not resolved")
                << '\n';
    }
    outputs.add("summary.txt", summary.str());
    out << summary.str();
}

// ------------------------------------------------------------------ interleave

int count_minima(const std::vector<double>& u) {
    const double deepest = *std::min_element(u.begin(), u.end());
    int n = 0;
    for (std::size_t i = 1; i + 1 < u.size(); ++i)
        if (u[i] < u[i - 1] && u[i] <= u[i + 1] && u[i] < 0.1 * deepest) ++n;
    return n;
}

void cmd_interleave(const RunConfig& cfg, Outputs& outputs, std::ostream& out) {
    const InterleaveConfig& il = cfg.interleave;
    IlluminationBeam first = cfg.beams.front();
    IlluminationBeam second = cfg.beams.size() > 1 ? cfg.beams[1] : first;
    if (cfg.beams.size() == 1) {
        second.polarization = first.polarization == Polarization::H ? Polarization::V : Polarization::H;
        second.array_id = 2;
    }
    const bool vertical = cfg.geometry.tilt_axis == TiltAxis::Vertical;

    std::ostringstream sep_csv, xs_csv, summary;
    sep_csv << "angle_rad,separation_m,f_tan_theta_m,minima,pair_depth_mk\n";
    xs_csv << "angle_rad,offset_m,potential_mk\n";
    summary << "angle[mrad]  separation[um]  minima  depth[mK]\n";

    for (int k = 0; k < il.angle_steps; ++k) {
        const double theta = il.angle_steps == 1
                                 ? il.angle_start
                                 : il.angle_start + (il.angle_stop - il.angle_start) * k / (il.angle_steps - 1);
        second.tilt_angle = first.tilt_angle + theta;
        if (!(std::abs(second.tilt_angle) < max_tilt_angle))
            throw InvalidInput("interleave angle " + fmt_num(second.tilt_angle) + " rad beyond the paraxial bound");
        const IlluminationBeam pair[2] = {first, second};
        const auto foci = expand_foci(cfg.geometry, pair);
        const TrapField field(foci, cfg.species);
        const std::size_t n1 = foci.size() / 2;
        const Vec3 mid = 0.5 * (foci[0].center + foci[n1].center);
        const Vec3 axis = vertical ? Vec3::UnitY() : Vec3::UnitX();
        const double separation = (foci[n1].center - foci[0].center).norm();

        std::vector<double> u(static_cast<std::size_t>(il.cross_section_points));
        for (int i = 0; i < il.cross_section_points; ++i) {
            const double offset = -il.cross_section_half_width + 2.0 * il.cross_section_half_width * i / (il.cross_section_points - 1);
            u[static_cast<std::size_t>(i)] = field.potential(mid + offset * axis);
            xs_csv << fmt_num(theta) << ',' << fmt_num(offset) << ',' << fmt_num(joule_to_kelvin(u[i]) * 1e3) << '\n';
        }
        const int minima = count_minima(u);
        const double depth_mk = -joule_to_kelvin(*std::min_element(u.begin(), u.end())) * 1e3;
        sep_csv << fmt_num(theta) << ',' << fmt_num(separation) << ','
                << fmt_num(pair_separation(cfg.geometry, first.tilt_angle, second.tilt_angle)) << ','
                << minima << ',' << fmt_num(depth_mk) << '\n';
        summary << fmt_fixed(theta * 1e3, 2) << "  " << fmt_fixed(separation * 1e6, 3) << "  " << minima << "  "
                << fmt_fixed(depth_mk, 4) << '\n';
    }
    outputs.add("separations.csv", sep_csv.str());
    outputs.add("cross_sections.csv", xs_csv.str());
    out << summary.str();
}

// -------------------------------------------------------------------- dynamics

EvolveOptions evolve_options(const RunConfig& cfg) {
    EvolveOptions opts;
    opts.residual_axis = cfg.dynamics.residual_axis;
    opts.threads = cfg.dynamics.threads;
    return opts;
}

double resolve_dt(const RunConfig& cfg, const TrapField& field) {
    const double dt = cfg.dynamics.dt > 0.0 ? cfg.dynamics.dt : default_dt(field, cfg.dynamics.dt_fraction);
    const double bound = stability_dt_bound(field);
    if (dt > bound)
        throw ConfigError(cfg.source + ": dynamics.dt: " + fmt_num(dt) + " s exceeds the stability bound 1/(20 nu_r) = " +
                          fmt_num(bound) + " s");
    return dt;
}

void cmd_dynamics(const RunConfig& cfg, Outputs& outputs, std::ostream& out) {
    const DynamicsConfig& d = cfg.dynamics;
    auto field = std::make_shared<const TrapField>(cfg.foci(), cfg.species);
    const double dt = resolve_dt(cfg, *field);
    if (d.atoms_per_site == 0) throw ConfigError(cfg.source + ": dynamics.atoms_per_site: must be positive");

    const Ensemble initial = sample_loading(field, d.atoms_per_site, d.temperature, d.seed);
    const StorageRun storage = run_storage(initial, d.storage_time, d.samples, dt, d.residual_rate, evolve_options(cfg));

    std::ostringstream summary;
    summary << "config: " << cfg.source << '\n'
            << "seed: " << d.seed << '\n'
            << "atoms: " << initial.atoms.size() << " (" << d.atoms_per_site << " per site, " << field->size() << " sites)\n"
            << "dt: " << fmt_num(dt) << " s\n"
            << "residual_rate: " << fmt_num(d.residual_rate) << " 1/s\n"
            << "final_alive_fraction: " << fmt_num(storage.final_state.alive_fraction()) << '\n';
    if (storage.fit.infinite)
        summary << "lifetime: infinite\n";
    else
        summary << "lifetime: " << fmt_num(storage.fit.lifetime) << " s\n"
                << "fit_rms_residual: " << fmt_num(storage.fit.residual) << '\n';

    outputs.add("survival.csv", to_text([&](std::ostream& s) { write_survival_csv(s, storage.series); }));
    outputs.add("ensemble.dat", to_text([&](std::ostream& s) { write_ensemble(s, storage.final_state); }));

    if (!d.tof_times.empty()) {
        const std::size_t per_site = d.tof_atoms_per_site > 0 ? d.tof_atoms_per_site : d.atoms_per_site;
        const Ensemble tof_load = sample_loading(field, per_site, d.temperature, d.seed);
        TofOptions tof_opts;
        tof_opts.gravity = d.gravity;
        const TofResult tof = time_of_flight(tof_load, d.tof_times, tof_opts);
        outputs.add("tof.csv", to_text([&](std::ostream& s) {
                        s << "time_s,sigma_squared_m2\n";
                        for (std::size_t i = 0; i < tof.times.size(); ++i)
                            s << fmt_num(tof.times[i]) << ',' << fmt_num(tof.sigma_squared[i]) << '\n';
                    }));
        summary << "tof_temperature: " << fmt_num(tof.temperature) << " K\n"
                << "tof_uncertainty: " << fmt_num(tof.uncertainty) << " K\n";
    }
    outputs.add("summary.txt", summary.str());
    out << summary.str();
}

// ---------------------------------------------------------- calibrate-lifetime

bool cmd_calibrate(const RunConfig& cfg, Outputs& outputs, std::ostream& out) {
    const DynamicsConfig& d = cfg.dynamics;
    auto field = std::make_shared<const TrapField>(cfg.foci(), cfg.species);
    CalibrationSettings cs;
    cs.target_lifetime = d.target_lifetime;
    cs.temperature = d.temperature;
    cs.atoms_per_site = d.calibration_atoms_per_site > 0 ? d.calibration_atoms_per_site : d.atoms_per_site;
    cs.seed = d.seed;
    cs.dt = d.dt;
    cs.dt_fraction = d.calibration_dt_fraction;
    cs.window_factor = d.calibration_window;
    cs.samples = d.calibration_samples;
    cs.tolerance = d.calibration_tolerance;
    cs.evolve = evolve_options(cfg);
    if (cs.dt > stability_dt_bound(*field))
        throw ConfigError(cfg.source + ": dynamics.dt: exceeds the stability bound 1/(20 nu_r) = " +
                          fmt_num(stability_dt_bound(*field)) + " s");

    const CalibrationResult result = calibrate_residual_rate(field, cs);

    outputs.add("calibration.csv", to_text([&](std::ostream& s) {
                    s << "evaluation,rate_per_s,lifetime_s\n";
                    for (std::size_t i = 0; i < result.history.size(); ++i)
                        s << i + 1 << ',' << fmt_num(result.history[i].rate) << ',' << fmt_num(result.history[i].lifetime) << '\n';
                }));
    std::ostringstream summary;
    summary << "config: " << cfg.source << '\n'
            << "target_lifetime: " << fmt_num(cs.target_lifetime) << " s\n"
            << "atoms: " << cs.atoms_per_site * field->size() << '\n'
            << "residual_rate: " << fmt_num(result.rate) << " 1/s\n"
            << "lifetime: " << fmt_num(result.lifetime) << " s\n"
            << "evaluations: " << result.history.size() << '\n'
            << "converged: " << (result.converged ? "yes" : "no") << '\n';
    outputs.add("summary.txt", summary.str());
    out << summary.str();
    return result.converged;
}

// -------------------------------------------------------------------- imaging

std::vector<SpotSource> spots_for(const std::vector<FocusSite>& foci, std::span<const SiteSignal> signals) {
    std::vector<SpotSource> spots;
    for (const auto& sig : signals) {
        const FocusSite& f = foci[sig.site_id];
        spots.push_back({f.center.x(), f.center.y(), sig.signal});
    }
    return spots;
}

ImageFrame frame_for(const RunConfig& cfg, const std::vector<FocusSite>& foci) {
    std::vector<SpotSource> all;
    for (const auto& f : foci) all.push_back({f.center.x(), f.center.y(), 0.0});
    return frame_around(all, cfg.imaging.pixel_pitch, cfg.imaging.margin);
}

RenderSettings render_settings(const RunConfig& cfg, std::uint64_t seed) {
    RenderSettings rs;
    rs.psf_sigma = cfg.imaging.psf_sigma;
    rs.tilt_elongation = cfg.imaging.tilt_elongation;
    rs.shot_noise = cfg.imaging.shot_noise;
    rs.seed = seed;
    rs.photons_per_signal = cfg.imaging.per_atom_rate * cfg.imaging.exposure;
    rs.exposure = cfg.imaging.exposure;
    return rs;
}

ReadoutSettings readout_settings(const RunConfig& cfg, bool repump_on) {
    ReadoutSettings rs;
    rs.repump_on = repump_on;
    rs.detection_efficiency = cfg.register_.detection_efficiency;
    rs.detectability_threshold = cfg.register_.detectability_threshold;
    return rs;
}

void add_frame(Outputs& outputs, const std::string& stem, const FluorescenceImage& img, const RenderSettings& rs) {
    std::ostringstream pgm(std::ios::binary);
    const double scale = write_pgm(pgm, img);
    outputs.add(stem + ".pgm", pgm.str());
    outputs.add(stem + ".txt", image_sidecar(img, scale, rs));
}

void cmd_image(const RunConfig& cfg, Outputs& outputs, std::ostream& out) {
    const auto foci = cfg.foci();
    const RegisterState reg = load_register(foci, cfg.register_counts(foci.size()));
    const auto signals = readout(reg, readout_settings(cfg, true));
    const auto spots = spots_for(foci, signals);
    const RenderSettings rs = render_settings(cfg, cfg.dynamics.seed);
    const FluorescenceImage img = render(spots, frame_for(cfg, foci), rs);

    std::vector<GridNode> grid;
    for (const auto& f : foci) grid.push_back({f.site_id, f.row, f.col, f.center.x(), f.center.y()});
    DetectionSettings ds;
    ds.psf_sigma = cfg.imaging.psf_sigma;
    ds.tilt_elongation = cfg.imaging.tilt_elongation;
    ds.threshold_k = cfg.imaging.threshold_k;
    ds.relative_floor = cfg.imaging.relative_floor;
    ds.detection_efficiency = cfg.register_.detection_efficiency;
    ds.per_atom_rate = cfg.imaging.per_atom_rate;
    ds.exposure = cfg.imaging.exposure;
    const auto detections = detect_sites(img, ds, std::span<const GridNode>(grid));

    add_frame(outputs, "image", img, rs);
    outputs.add("detections.csv", to_text([&](std::ostream& s) { write_detections_csv(s, detections); }));
    const auto found = std::count_if(detections.begin(), detections.end(), [](const Detection& d) {
        return (d.flags & kAssigned) != 0u;
    });
    out << "frame: " << img.frame.width << " x " << img.frame.height << " px\n"
        << "sites: " << foci.size() << ", detected: " << found << '\n';
}

// -------------------------------------------------------------------- register

struct ScriptOp {
    enum Kind { Load, Pump, Remove, Readout, Render } kind = Load;
    int line = 0;
    std::string target;  // site token or "ALL"
    bool repump = true;
    std::optional<long> count;
};

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    return s;
}

bool valid_site_token(const std::string& t) {
    if (t.empty()) return false;
    if (std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) return true;
    int row = 0, col = 0;
    char tail = 0;
    return std::sscanf(t.c_str(), "r%dc%d%c", &row, &col, &tail) == 2 || std::sscanf(t.c_str(), "R%dC%d%c", &row, &col, &tail) == 2;
}

std::size_t resolve_site(const RegisterState& reg, const std::string& t) {
    if (std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
        std::size_t id = 0;
        std::from_chars(t.data(), t.data() + t.size(), id);
        (void)reg.at(id);
        return id;
    }
    int row = 0, col = 0;
    if (std::sscanf(t.c_str(), "r%dc%d", &row, &col) != 2) std::sscanf(t.c_str(), "R%dC%d", &row, &col);
    return reg.find(row, col);
}

std::vector<ScriptOp> parse_script(const std::string& text, const std::string& name) {
    std::vector<ScriptOp> ops;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    auto fail = [&](const std::string& msg) -> void { throw ConfigError(name + ":" + std::to_string(line_no) + ": " + msg); };
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        ScriptOp op;
        op.line = line_no;
        const std::string verb = upper(tok[0]);
        if (verb == "LOAD") {
            op.kind = ScriptOp::Load;
            if (tok.size() > 2) fail("LOAD takes at most one argument (atoms per site)");
            if (tok.size() == 2) {
                long n = 0;
                auto [p, ec] = std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), n);
                if (ec != std::errc{} || p != tok[1].data() + tok[1].size() || n < 0) fail("LOAD count must be a non-negative integer");
                op.count = n;
            }
        } else if (verb == "PUMP" || verb == "REMOVE") {
            op.kind = verb == "PUMP" ? ScriptOp::Pump : ScriptOp::Remove;
            if (tok.size() != 2) fail(verb + " takes exactly one site");
            op.target = tok[1];
            if (upper(op.target) == "ALL") {
                if (op.kind == ScriptOp::Remove) fail("REMOVE ALL is not supported");
                op.target = "ALL";
            } else if (!valid_site_token(op.target)) {
                fail("bad site '" + op.target + "' (use r<row>c<col> or a site id)");
            }
        } else if (verb == "READOUT" || verb == "RENDER") {
            op.kind = verb == "READOUT" ? ScriptOp::Readout : ScriptOp::Render;
            if (tok.size() > 2) fail(verb + " takes at most repump=on|off");
            if (tok.size() == 2) {
                const std::string arg = tok[1];
                if (arg == "repump=on")
                    op.repump = true;
                else if (arg == "repump=off")
                    op.repump = false;
                else
                    fail("expected repump=on or repump=off, got '" + arg + "'");
            }
        } else {
            fail("unknown verb '" + tok[0] + "'");
        }
        ops.push_back(op);
    }
    return ops;
}

void cmd_register(const RunConfig& cfg, const std::vector<ScriptOp>& ops, Outputs& outputs, std::ostream& out) {
    if (ops.empty()) return;
    const auto foci = cfg.foci();
    const ImageFrame frame = frame_for(cfg, foci);
    std::optional<RegisterState> reg;
    std::optional<std::vector<SiteSignal>> last_readout;
    std::vector<std::string> log;

    std::size_t step = 0;
    for (const auto& op : ops) {
        ++step;
        const std::string nn = two_digits(step);
        const std::string where = "line " + std::to_string(op.line);
        try {
            if (op.kind != ScriptOp::Load && !reg) throw InvalidInput("no register loaded (LOAD first)");
            switch (op.kind) {
                case ScriptOp::Load: {
                    const auto counts = op.count ? std::vector<long>(foci.size(), *op.count) : cfg.register_counts(foci.size());
                    reg = load_register(foci, counts);
                    last_readout.reset();
                    break;
                }
                case ScriptOp::Pump:
                    reg = pump(*reg, op.target == "ALL" ? SiteSelector::every() : SiteSelector::one(resolve_site(*reg, op.target)));
                    break;
                case ScriptOp::Remove: reg = remove(*reg, resolve_site(*reg, op.target)); break;
                case ScriptOp::Readout: {
                    last_readout = readout(*reg, readout_settings(cfg, op.repump));
                    reg->log.push_back(std::string("readout repump=") + (op.repump ? "on" : "off"));
                    outputs.add("readout_" + nn + ".csv",
                                to_text([&](std::ostream& s) { write_readout_csv(s, *reg, *last_readout); }));
                    break;
                }
                case ScriptOp::Render: {
                    const auto signals = last_readout ? *last_readout : readout(*reg, readout_settings(cfg, op.repump));
                    const RenderSettings rs = render_settings(cfg, stream_key(cfg.dynamics.seed, step));
                    add_frame(outputs, "frame_" + nn, render(spots_for(foci, signals), frame, rs), rs);
                    reg->log.push_back("render frame_" + nn);
                    break;
                }
            }
        } catch (const std::exception& ex) {
            throw std::runtime_error(where + ": " + ex.what());
        }
        if (op.kind != ScriptOp::Readout && op.kind != ScriptOp::Render)
            outputs.add("register_" + nn + ".csv", to_text([&](std::ostream& s) { write_register_csv(s, *reg); }));
        log.push_back(nn + " " + where + ": " + reg->log.back());
    }
    std::string log_text;
    for (const auto& l : log) log_text += l + '\n';
    outputs.add("log.txt", log_text);
    out << log_text;
}

fs::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("MICROTRAP_OUT_DIR"); env && *env) return env;
    return "out";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Microlens-array dipole trap simulator", "microtrap"};
    app.require_subcommand(1);
    std::string config_path, out_dir, script_path;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config,-c", config_path, "Run configuration file")->required();
        sub->add_option("--seed", seed, "Random seed (overrides the config)");
        sub->add_option("--out,-o", out_dir, "Output directory (default: $MICROTRAP_OUT_DIR or ./out)");
    };
    auto* characterize_cmd = app.add_subcommand("characterize", "Per-site depth, frequencies and decoherence");
    auto* interleave_cmd = app.add_subcommand("interleave", "Two-array separation sweep and pair cross-sections");
    auto* dynamics_cmd = app.add_subcommand("dynamics", "Load, store, fit lifetime and time-of-flight");
    auto* register_cmd = app.add_subcommand("register", "Run a register operation script");
    auto* image_cmd = app.add_subcommand("image", "Render and analyse a fluorescence frame of the loaded register");
    auto* calibrate_cmd = app.add_subcommand("calibrate-lifetime", "Find the residual scattering rate for a target lifetime");
    for (auto* sub : {characterize_cmd, interleave_cmd, dynamics_cmd, register_cmd, image_cmd, calibrate_cmd}) add_common(sub);
    register_cmd->add_option("--script,-s", script_path, "Operation script")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        return kConfigError;
    }

    auto previous_sink = set_warning_sink([&err](std::string_view msg) { err << "warning: " << msg << '\n'; });
    struct Restore {
        WarningSink sink;
        ~Restore() { set_warning_sink(std::move(sink)); }
    } restore{std::move(previous_sink)};

    try {
        RunConfig cfg = load_config(config_path);
        if (seed) cfg.dynamics.seed = *seed;
        std::vector<ScriptOp> ops;
        if (register_cmd->parsed()) {
            std::string script;
            try {
                script = read_text_file(script_path);
            } catch (const std::exception& ex) {
                throw ConfigError(ex.what());
            }
            ops = parse_script(script, fs::path(script_path).filename().string());
        }
        // Site expansion can still reject the geometry; do it before any work.
        try {
            (void)cfg.foci();
        } catch (const InvalidInput& ex) {
            throw ConfigError(cfg.source + ": " + ex.what());
        }

        Outputs outputs;
        bool ok = true;
        if (characterize_cmd->parsed())
            cmd_characterize(cfg, outputs, out);
        else if (interleave_cmd->parsed())
            cmd_interleave(cfg, outputs, out);
        else if (dynamics_cmd->parsed())
            cmd_dynamics(cfg, outputs, out);
        else if (register_cmd->parsed())
            cmd_register(cfg, ops, outputs, out);
        else if (image_cmd->parsed())
            cmd_image(cfg, outputs, out);
        else if (calibrate_cmd->parsed())
            ok = cmd_calibrate(cfg, outputs, out);
        outputs.commit(output_dir(out_dir));
        if (!ok) {
            err << "error: lifetime calibration did not converge within tolerance\n";
            return kRuntimeError;
        }
        return kSuccess;
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << '\n';
        return kConfigError;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace microtrap::cli
