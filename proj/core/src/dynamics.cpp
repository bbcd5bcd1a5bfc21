#include "microtrap/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "microtrap/diagnostics.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/io.hpp"
#include "microtrap/parallel.hpp"
#include "microtrap/rng.hpp"

namespace microtrap {

using namespace constants;

std::size_t Ensemble::alive_count() const {
    return static_cast<std::size_t>(std::count_if(atoms.begin(), atoms.end(), [](const AtomState& a) { return a.alive; }));
}

double Ensemble::alive_fraction() const {
    return atoms.empty() ? 0.0 : static_cast<double>(alive_count()) / static_cast<double>(atoms.size());
}

std::vector<std::size_t> Ensemble::population_by_site() const {
    std::vector<std::size_t> pop(field ? field->size() : 0, 0);
    for (const auto& a : atoms)
        if (a.alive && a.site_id && *a.site_id < pop.size()) ++pop[*a.site_id];
    return pop;
}

Ensemble sample_loading(std::shared_ptr<const TrapField> field, std::size_t per_site_count, double temperature,
                        std::uint64_t seed) {
    if (!field || field->size() == 0) throw ConfigError("site list empty");
    if (!(temperature > 0.0)) throw InvalidInput("loading temperature must be positive");

    const double mass = field->species().mass;
    const double kt = kelvin_to_joule(temperature);
    const double sigma_v = std::sqrt(kt / mass);

    Ensemble ens;
    ens.seed = seed;
    ens.field = field;
    ens.atoms.reserve(field->size() * per_site_count);

    for (std::size_t site = 0; site < field->size(); ++site) {
        const NumericTrap trap = numeric_frequencies(*field, site);
        if (kt >= std::abs(trap.potential))
            warn("site " + std::to_string(site) + ": k_B T exceeds the trap depth, load will be largely unbound");
        std::array<double, 3> sigma_x{};
        for (std::size_t a = 0; a < 3; ++a) {
            const double omega = two_pi * trap.frequencies[a];
            sigma_x[a] = std::sqrt(kt / (mass * omega * omega));
        }
        for (std::size_t j = 0; j < per_site_count; ++j) {
            AtomState atom;
            atom.rng_stream = ens.atoms.size();
            atom.site_id = site;
            CounterRng rng(stream_key(seed, atom.rng_stream));
            std::normal_distribution<double> normal;
            atom.position = trap.minimum;
            for (int a = 0; a < 3; ++a)
                atom.position += trap.axes.col(a) * (sigma_x[static_cast<std::size_t>(a)] * normal(rng));
            for (int a = 0; a < 3; ++a) atom.velocity[a] = sigma_v * normal(rng);
            atom.rng_counter = rng.counter();
            ens.atoms.push_back(atom);
        }
    }
    return ens;
}

double stability_dt_bound(const TrapField& field) { return 1.0 / (20.0 * field.max_radial_frequency()); }

double default_dt(const TrapField& field, double fraction) { return 1.0 / (fraction * field.max_radial_frequency()); }

double atom_energy(const TrapField& field, const AtomState& atom) {
    return 0.5 * field.species().mass * atom.velocity.squaredNorm() + field.potential(atom.position);
}

Ensemble evolve(const Ensemble& ensemble, double duration, double dt, double residual_rate, const EvolveOptions& options) {
    if (!ensemble.field) throw InvalidInput("ensemble has no trap field");
    const TrapField& field = *ensemble.field;
    if (!(dt > 0.0)) throw InvalidInput("time step must be positive");
    const double bound = stability_dt_bound(field);
    if (dt > bound * (1.0 + 1e-12))
        throw InvalidInput("time step " + fmt_num(dt) + " s violates the stability bound 1/(20 nu_r,max) = " +
                           fmt_num(bound) + " s");
    if (duration < 0.0) throw InvalidInput("duration must be non-negative");
    if (residual_rate < 0.0) throw InvalidInput("residual scattering rate must be non-negative");

    Ensemble out = ensemble;
    out.time = ensemble.time + duration;
    if (duration == 0.0) return out;

    const auto steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
    const double h = duration / static_cast<double>(steps);
    const double mass = field.species().mass;
    const double inv_mass = 1.0 / mass;
    const double recoil_lambda = options.recoil_wavelength > 0.0 ? options.recoil_wavelength : field.species().d2_wavelength;
    const double v_recoil = hbar * two_pi / recoil_lambda / mass;
    const Vec3 axis = options.residual_axis.normalized();
    const double mean_events = residual_rate * h;
    const double exp_neg_mean = std::exp(-mean_events);
    const double escape = options.escape_factor;
    const std::uint64_t seed = ensemble.seed;

    auto evaluate = [&field](const AtomState& a, const Vec3& x, Vec3& grad) {
        return a.site_id ? field.local_potential_gradient(*a.site_id, x, grad) : field.potential_gradient(x, grad);
    };

    parallel_for(out.atoms.size(), options.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            AtomState& atom = out.atoms[i];
            if (!atom.alive) continue;
            CounterRng rng(stream_key(seed, atom.rng_stream), atom.rng_counter);
            Vec3 x = atom.position;
            Vec3 v = atom.velocity;
            Vec3 grad;
            evaluate(atom, x, grad);
            Vec3 acc = -grad * inv_mass;
            for (std::size_t s = 0; s < steps; ++s) {
                v += 0.5 * h * acc;
                x += h * v;
                const double u = evaluate(atom, x, grad);
                acc = -grad * inv_mass;
                v += 0.5 * h * acc;
                if (mean_events > 0.0) {
                    const unsigned events = poisson_draw(rng, mean_events, exp_neg_mean);
                    for (unsigned e = 0; e < events; ++e) v += v_recoil * (axis + isotropic_direction(rng));
                }
                if (0.5 * mass * v.squaredNorm() + u > 0.0 && field.outside_all_sites(x, escape)) {
                    atom.alive = false;
                    break;
                }
            }
            atom.position = x;
            atom.velocity = v;
            atom.rng_counter = rng.counter();
        }
    });
    return out;
}

LifetimeFit survival_fraction(std::span<const SurvivalPoint> series) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : series)
        if (p.fraction > 0.0) pts.emplace_back(p.time, std::log(p.fraction));
    if (pts.size() < 2) throw FitError("survival fit needs at least two points with non-zero population");

    const double n = static_cast<double>(pts.size());
    double mt = 0.0, my = 0.0;
    for (auto [t, y] : pts) {
        mt += t;
        my += y;
    }
    mt /= n;
    my /= n;
    double stt = 0.0, sty = 0.0;
    for (auto [t, y] : pts) {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
    }
    if (!(stt > 0.0)) throw FitError("survival fit: all time points coincide");

    LifetimeFit fit;
    fit.slope = sty / stt;
    fit.intercept = my - fit.slope * mt;
    double ss = 0.0;
    for (auto [t, y] : pts) {
        const double r = y - (fit.intercept + fit.slope * t);
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / n);
    if (fit.slope >= 0.0) {
        fit.infinite = true;
        fit.lifetime = std::numeric_limits<double>::infinity();
    } else {
        fit.lifetime = -1.0 / fit.slope;
    }
    return fit;
}

Ensemble address_site(const Ensemble& ensemble, std::size_t site_id, std::optional<double> heating_energy) {
    if (!ensemble.field) throw InvalidInput("ensemble has no trap field");
    const TrapField& field = *ensemble.field;
    if (site_id >= field.size()) throw UnknownSiteError("unknown site id " + std::to_string(site_id));
    const double energy = heating_energy ? *heating_energy : 10.0 * std::abs(numeric_frequencies(field, site_id).potential);
    if (energy < 0.0) throw InvalidInput("heating energy must be non-negative");

    Ensemble out = ensemble;
    if (energy == 0.0) return out;
    const double kick = std::sqrt(2.0 * energy / field.species().mass);
    for (auto& atom : out.atoms) {
        if (!atom.alive || atom.site_id != site_id) continue;
        CounterRng rng(stream_key(out.seed, atom.rng_stream), atom.rng_counter);
        atom.velocity += kick * isotropic_direction(rng);
        atom.rng_counter = rng.counter();
    }
    return out;
}

TofResult time_of_flight(const Ensemble& ensemble, std::span<const double> expansion_times, const TofOptions& options) {
    if (expansion_times.size() < 3) throw InvalidInput("time of flight needs at least three expansion times");
    if (ensemble.alive_count() < 100) throw InvalidInput("time of flight needs at least 100 alive atoms");
    const double t_min = *std::min_element(expansion_times.begin(), expansion_times.end());
    const double t_max = *std::max_element(expansion_times.begin(), expansion_times.end());
    if (t_min == t_max) throw FitError("degenerate time-of-flight fit: all expansion times are equal");
    if (t_min < 0.0) throw InvalidInput("expansion times must be non-negative");

    const double mass = ensemble.field ? ensemble.field->species().mass : 0.0;
    if (!(mass > 0.0)) throw InvalidInput("ensemble has no species mass");

    Vec3 global_mean = Vec3::Zero();
    std::size_t alive = 0;
    for (const auto& a : ensemble.atoms)
        if (a.alive) {
            global_mean += a.position;
            ++alive;
        }
    global_mean /= static_cast<double>(alive);

    const Vec3 g_acc = options.gravity ? Vec3(standard_gravity * options.gravity_direction.normalized()) : Vec3::Zero();

    TofResult result;
    for (double t : expansion_times) {
        Vec3 sum = Vec3::Zero();
        Vec3 sum2 = Vec3::Zero();
        for (const auto& a : ensemble.atoms) {
            if (!a.alive) continue;
            const Vec3 origin = a.site_id ? ensemble.field->site(*a.site_id).center : global_mean;
            const Vec3 r = a.position - origin + a.velocity * t + 0.5 * g_acc * t * t;
            sum += r;
            sum2 += r.cwiseProduct(r);
        }
        const double n = static_cast<double>(alive);
        const Vec3 mean = sum / n;
        const Vec3 var = sum2 / n - mean.cwiseProduct(mean);
        result.times.push_back(t);
        result.sigma_squared.push_back(var.mean());
    }

    const double n = static_cast<double>(result.times.size());
    double mu = 0.0, ms = 0.0;
    for (std::size_t i = 0; i < result.times.size(); ++i) {
        mu += result.times[i] * result.times[i];
        ms += result.sigma_squared[i];
    }
    mu /= n;
    ms /= n;
    double suu = 0.0, sus = 0.0;
    for (std::size_t i = 0; i < result.times.size(); ++i) {
        const double u = result.times[i] * result.times[i] - mu;
        suu += u * u;
        sus += u * (result.sigma_squared[i] - ms);
    }
    if (!(suu > 0.0)) throw FitError("degenerate time-of-flight fit");
    const double slope = sus / suu;
    result.sigma0_squared = ms - slope * mu;
    double ssr = 0.0;
    for (std::size_t i = 0; i < result.times.size(); ++i) {
        const double r = result.sigma_squared[i] - (result.sigma0_squared + slope * result.times[i] * result.times[i]);
        ssr += r * r;
    }
    const double slope_se = result.times.size() > 2 ? std::sqrt(ssr / (n - 2.0) / suu) : 0.0;
    result.temperature = mass * slope / boltzmann;
    result.uncertainty = mass * slope_se / boltzmann;
    return result;
}

StorageRun run_storage(const Ensemble& initial, double duration, int samples, double dt, double residual_rate,
                       const EvolveOptions& options) {
    if (samples < 1) throw InvalidInput("storage run needs at least one sample interval");
    StorageRun run;
    Ensemble state = initial;
    const double t0 = initial.time;
    run.series.push_back({0.0, state.alive_fraction()});
    const double interval = duration / samples;
    for (int k = 1; k <= samples; ++k) {
        state = evolve(state, interval, dt, residual_rate, options);
        run.series.push_back({state.time - t0, state.alive_fraction()});
        if (state.alive_count() == 0) break;
    }
    const auto positive = std::count_if(run.series.begin(), run.series.end(), [](const SurvivalPoint& p) { return p.fraction > 0.0; });
    if (positive >= 2) {
        run.fit = survival_fraction(run.series);
    } else {
        // Everything lost within the first interval: bound the lifetime by that interval.
        const double n = static_cast<double>(std::max<std::size_t>(initial.atoms.size(), 2));
        run.fit.lifetime = interval / std::log(n);
        run.fit.slope = -1.0 / run.fit.lifetime;
    }
    run.final_state = std::move(state);
    return run;
}

CalibrationResult calibrate_residual_rate(std::shared_ptr<const TrapField> field, const CalibrationSettings& settings) {
    if (!(settings.target_lifetime > 0.0)) throw InvalidInput("target lifetime must be positive");
    const Ensemble loaded = sample_loading(field, settings.atoms_per_site, settings.temperature, settings.seed);
    const double dt = settings.dt > 0.0 ? settings.dt : default_dt(*field, settings.dt_fraction);
    const double window = settings.window_factor * settings.target_lifetime;

    CalibrationResult result;
    auto lifetime_at = [&](double rate) {
        const StorageRun run = run_storage(loaded, window, settings.samples, dt, rate, settings.evolve);
        const double tau = run.fit.infinite ? std::numeric_limits<double>::infinity() : run.fit.lifetime;
        result.history.push_back({rate, tau});
        return tau;
    };
    auto converged = [&](double tau) { return std::abs(tau / settings.target_lifetime - 1.0) <= settings.tolerance; };
    // log(tau / target); decreasing in rate.
    auto residual = [&](double tau) {
        return std::isinf(tau) ? 50.0 : std::log(tau / settings.target_lifetime);
    };

    // Heating estimate: depth / (2 E_rec) scattering events needed to boil an atom out.
    double depth = 0.0;
    for (std::size_t i = 0; i < field->size(); ++i) depth += std::abs(numeric_frequencies(*field, i).potential);
    depth /= static_cast<double>(field->size());
    const double recoil_lambda =
        settings.evolve.recoil_wavelength > 0.0 ? settings.evolve.recoil_wavelength : field->species().d2_wavelength;
    const double e_rec = recoil_energy(field->species(), recoil_lambda);
    double rate = depth / (2.0 * e_rec * settings.target_lifetime);

    double tau = lifetime_at(rate);
    if (converged(tau)) return {rate, tau, true, result.history};

    double lo = rate, lo_res = residual(tau);  // residual > 0 side (too long lived)
    double hi = rate, hi_res = lo_res;         // residual < 0 side
    const double factor = lo_res > 0.0 ? 2.0 : 0.5;
    for (int i = 0; i < settings.max_evaluations; ++i) {
        const double next = (factor > 1.0 ? hi : lo) * factor;
        const double t = lifetime_at(next);
        if (converged(t)) return {next, t, true, result.history};
        const double r = residual(t);
        if (factor > 1.0) {
            hi = next;
            hi_res = r;
            if (r < 0.0) break;
            lo = next;
            lo_res = r;
        } else {
            lo = next;
            lo_res = r;
            if (r > 0.0) break;
            hi = next;
            hi_res = r;
        }
    }
    if (!(lo_res > 0.0 && hi_res < 0.0)) {
        warn("lifetime calibration could not bracket the target");
        const auto best = std::min_element(result.history.begin(), result.history.end(), [&](auto& a, auto& b) {
            return std::abs(residual(a.lifetime)) < std::abs(residual(b.lifetime));
        });
        return {best->rate, best->lifetime, false, result.history};
    }

    // Illinois false position in log(rate).
    double a = std::log(lo), fa = lo_res;
    double b = std::log(hi), fb = hi_res;
    int side = 0;
    while (static_cast<int>(result.history.size()) < settings.max_evaluations) {
        double c = (a * fb - b * fa) / (fb - fa);
        if (!(c > std::min(a, b) && c < std::max(a, b))) c = 0.5 * (a + b);
        const double t = lifetime_at(std::exp(c));
        if (converged(t)) return {std::exp(c), t, true, result.history};
        const double fc = residual(t);
        if (fc > 0.0) {
            a = c;
            fa = fc;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = c;
            fb = fc;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        if (std::abs(b - a) < 1e-6) break;
    }
    const auto best = std::min_element(result.history.begin(), result.history.end(), [&](auto& x, auto& y) {
        return std::abs(residual(x.lifetime)) < std::abs(residual(y.lifetime));
    });
    return {best->rate, best->lifetime, converged(best->lifetime), result.history};
}

void write_survival_csv(std::ostream& out, std::span<const SurvivalPoint> series) {
    out << "time_s,alive_fraction\n";
    for (const auto& p : series) out << fmt_num(p.time) << ',' << fmt_num(p.fraction) << '\n';
}

void write_trajectory_csv(std::ostream& out, const Ensemble& ensemble) {
    out << "atom,site_id,alive,state,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps,time_s\n";
    for (std::size_t i = 0; i < ensemble.atoms.size(); ++i) {
        const auto& a = ensemble.atoms[i];
        out << i << ',' << (a.site_id ? std::to_string(*a.site_id) : std::string("-")) << ',' << (a.alive ? 1 : 0) << ','
            << (a.internal_state == HyperfineState::F2 ? "F2" : "F3") << ',' << fmt_num(a.position.x()) << ','
            << fmt_num(a.position.y()) << ',' << fmt_num(a.position.z()) << ',' << fmt_num(a.velocity.x()) << ','
            << fmt_num(a.velocity.y()) << ',' << fmt_num(a.velocity.z()) << ',' << fmt_num(ensemble.time) << '\n';
    }
}

}  // namespace microtrap
