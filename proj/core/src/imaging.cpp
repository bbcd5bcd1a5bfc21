#include "microtrap/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "microtrap/diagnostics.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/io.hpp"
#include "microtrap/rng.hpp"

namespace microtrap {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

struct RobustStats {
    double median = 0.0;
    double mad = 0.0;
};

// Median and MAD of the background: pixels far above the running estimate are
// clipped so that densely packed spots do not lift it.
RobustStats background_stats(const std::vector<double>& values) {
    std::vector<double> kept = values;
    RobustStats st;
    for (int iter = 0; iter < 20 && !kept.empty(); ++iter) {
        st.median = median_of(kept);
        std::vector<double> dev(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) dev[i] = std::abs(kept[i] - st.median);
        st.mad = median_of(dev);
        const double cut = st.median + 3.0 * st.mad;
        std::vector<double> next;
        next.reserve(kept.size());
        for (double v : kept)
            if (v <= cut) next.push_back(v);
        if (next.size() == kept.size()) break;
        kept = std::move(next);
    }
    return st;
}

std::vector<double> gaussian_kernel(double sigma_px) {
    const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
    std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        const double w = std::exp(-0.5 * (i / sigma_px) * (i / sigma_px));
        k[static_cast<std::size_t>(i + half)] = w;
        sum += w;
    }
    for (auto& w : k) w /= sum;
    return k;
}

std::vector<double> smooth(const FluorescenceImage& img, double sigma_x_px, double sigma_y_px) {
    const int w = img.frame.width, h = img.frame.height;
    const auto kx = gaussian_kernel(sigma_x_px);
    const auto ky = gaussian_kernel(sigma_y_px);
    const int hx = static_cast<int>(kx.size() / 2), hy = static_cast<int>(ky.size() / 2);
    std::vector<double> tmp(img.values.size(), 0.0), out(img.values.size(), 0.0);
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            double s = 0.0;
            for (int d = -hx; d <= hx; ++d) {
                const int ii = i + d;
                if (ii >= 0 && ii < w) s += kx[static_cast<std::size_t>(d + hx)] * img.at(ii, j);
            }
            tmp[static_cast<std::size_t>(j) * w + i] = s;
        }
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            double s = 0.0;
            for (int d = -hy; d <= hy; ++d) {
                const int jj = j + d;
                if (jj >= 0 && jj < h) s += ky[static_cast<std::size_t>(d + hy)] * tmp[static_cast<std::size_t>(jj) * w + i];
            }
            out[static_cast<std::size_t>(j) * w + i] = s;
        }
    return out;
}

}  // namespace

ImageFrame frame_around(std::span<const SpotSource> spots, double pixel_pitch, double margin) {
    if (!(pixel_pitch > 0.0)) throw InvalidInput("pixel pitch must be positive");
    ImageFrame f;
    f.pixel_pitch = pixel_pitch;
    if (spots.empty()) {
        f.width = f.height = 1;
        return f;
    }
    double x0 = spots[0].x, x1 = spots[0].x, y0 = spots[0].y, y1 = spots[0].y;
    for (const auto& s : spots) {
        x0 = std::min(x0, s.x);
        x1 = std::max(x1, s.x);
        y0 = std::min(y0, s.y);
        y1 = std::max(y1, s.y);
    }
    f.origin_x = x0 - margin;
    f.origin_y = y0 - margin;
    f.width = std::max(1, static_cast<int>(std::ceil((x1 - x0 + 2.0 * margin) / pixel_pitch)));
    f.height = std::max(1, static_cast<int>(std::ceil((y1 - y0 + 2.0 * margin) / pixel_pitch)));
    return f;
}

double FluorescenceImage::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double FluorescenceImage::max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }

FluorescenceImage render(std::span<const SpotSource> spots, const ImageFrame& frame, const RenderSettings& settings) {
    if (!(settings.psf_sigma > 0.0)) throw InvalidInput("psf sigma must be positive");
    if (!(settings.tilt_elongation >= 1.0)) throw InvalidInput("tilt elongation must be >= 1");
    if (!(frame.pixel_pitch > 0.0) || frame.width < 1 || frame.height < 1) throw InvalidInput("invalid image frame");

    FluorescenceImage img;
    img.frame = frame;
    img.seed = settings.seed;
    img.exposure = settings.exposure;
    img.values.assign(static_cast<std::size_t>(frame.width) * frame.height, 0.0);

    const double sx = settings.tilt_elongation * settings.psf_sigma / frame.pixel_pitch;
    const double sy = settings.psf_sigma / frame.pixel_pitch;
    std::vector<double> wx, wy;
    for (const auto& spot : spots) {
        if (spot.signal < 0.0) throw InvalidInput("spot signals must be non-negative");
        if (spot.signal == 0.0) continue;
        const double u = (spot.x - frame.origin_x) / frame.pixel_pitch;
        const double v = (spot.y - frame.origin_y) / frame.pixel_pitch;
        if (u - 3.0 * sx < 0.0 || u + 3.0 * sx > frame.width || v - 3.0 * sy < 0.0 || v + 3.0 * sy > frame.height)
            warn("spot at (" + fmt_num(spot.x) + ", " + fmt_num(spot.y) + ") m extends beyond the frame, rendered partially");
        const int i0 = std::max(0, static_cast<int>(std::floor(u - 8.0 * sx)));
        const int i1 = std::min(frame.width - 1, static_cast<int>(std::ceil(u + 8.0 * sx)));
        const int j0 = std::max(0, static_cast<int>(std::floor(v - 8.0 * sy)));
        const int j1 = std::min(frame.height - 1, static_cast<int>(std::ceil(v + 8.0 * sy)));
        if (i0 > i1 || j0 > j1) continue;
        wx.assign(static_cast<std::size_t>(i1 - i0 + 1), 0.0);
        wy.assign(static_cast<std::size_t>(j1 - j0 + 1), 0.0);
        for (int i = i0; i <= i1; ++i) wx[static_cast<std::size_t>(i - i0)] = normal_cdf((i + 1 - u) / sx) - normal_cdf((i - u) / sx);
        for (int j = j0; j <= j1; ++j) wy[static_cast<std::size_t>(j - j0)] = normal_cdf((j + 1 - v) / sy) - normal_cdf((j - v) / sy);
        const double weight = spot.signal * settings.photons_per_signal;
        for (int j = j0; j <= j1; ++j) {
            double* row = img.values.data() + static_cast<std::size_t>(j) * frame.width;
            const double wyj = weight * wy[static_cast<std::size_t>(j - j0)];
            for (int i = i0; i <= i1; ++i) row[i] += wyj * wx[static_cast<std::size_t>(i - i0)];
        }
    }

    if (settings.shot_noise) {
        for (std::size_t p = 0; p < img.values.size(); ++p) {
            if (img.values[p] <= 0.0) continue;
            CounterRng rng(stream_key(settings.seed, p));
            std::poisson_distribution<long long> poisson(img.values[p]);
            img.values[p] = static_cast<double>(poisson(rng));
        }
    }
    return img;
}

std::vector<Detection> detect_sites(const FluorescenceImage& image, const DetectionSettings& settings,
                                    std::optional<std::span<const GridNode>> expected_grid) {
    const ImageFrame& f = image.frame;
    const double pitch = f.pixel_pitch;
    const double sx = settings.tilt_elongation * settings.psf_sigma / pitch;
    const double sy = settings.psf_sigma / pitch;
    const double photons_per_atom = settings.detection_efficiency * settings.per_atom_rate * settings.exposure;

    std::vector<Detection> found;
    if (!image.values.empty() && image.max() > 0.0) {
        const double background = background_stats(image.values).median;
        const std::vector<double> filtered = smooth(image, sx, sy);
        const auto [fmed, mad] = background_stats(filtered);
        const double fmax = *std::max_element(filtered.begin(), filtered.end());
        const double threshold = std::max(fmed + settings.threshold_k * mad, fmed + settings.relative_floor * (fmax - fmed));

        struct Candidate {
            int i, j;
            double value;
        };
        std::vector<Candidate> candidates;
        const int w = f.width, h = f.height;
        auto fv = [&](int i, int j) { return filtered[static_cast<std::size_t>(j) * w + i]; };
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) {
                const double c = fv(i, j);
                if (!(c > threshold)) continue;
                bool peak = true;
                for (int dj = -1; dj <= 1 && peak; ++dj)
                    for (int di = -1; di <= 1; ++di) {
                        if (di == 0 && dj == 0) continue;
                        const int ii = i + di, jj = j + dj;
                        if (ii < 0 || jj < 0 || ii >= w || jj >= h) continue;
                        const double n = fv(ii, jj);
                        // Plateaus: earlier pixels in scan order must be strictly lower.
                        const bool earlier = dj < 0 || (dj == 0 && di < 0);
                        if (earlier ? n >= c : n > c) {
                            peak = false;
                            break;
                        }
                    }
                if (peak) candidates.push_back({i, j, c});
            }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.value > b.value; });

        std::vector<Candidate> accepted;
        for (const auto& c : candidates) {
            bool close = false;
            for (const auto& a : accepted) {
                const double dx = (c.i - a.i) / sx, dy = (c.j - a.j) / sy;
                if (dx * dx + dy * dy < 4.0) {
                    close = true;
                    break;
                }
            }
            if (!close) accepted.push_back(c);
        }

        const int hx = static_cast<int>(std::ceil(3.0 * sx));
        const int hy = static_cast<int>(std::ceil(3.0 * sy));
        struct Spot {
            double u, v, amplitude;
            int ci, cj;
            bool edge, valid;
        };
        std::vector<Spot> spots;
        for (const auto& c : accepted) spots.push_back({c.i + 0.5, c.j + 0.5, 0.0, c.i, c.j, false, false});

        // Neighbouring spots overlap the 3 sigma window when the tilt elongates the
        // PSF, so each pass measures a spot on the image minus the current model of
        // all the others.
        std::vector<double> model(image.values.size(), 0.0);
        auto add_model = [&](const Spot& sp, double sign) {
            if (!sp.valid || sp.amplitude == 0.0) return;
            const int i0 = std::max(0, static_cast<int>(std::floor(sp.u - 8.0 * sx)));
            const int i1 = std::min(w - 1, static_cast<int>(std::ceil(sp.u + 8.0 * sx)));
            const int j0 = std::max(0, static_cast<int>(std::floor(sp.v - 8.0 * sy)));
            const int j1 = std::min(h - 1, static_cast<int>(std::ceil(sp.v + 8.0 * sy)));
            std::vector<double> wx(static_cast<std::size_t>(i1 - i0 + 1));
            for (int i = i0; i <= i1; ++i) wx[static_cast<std::size_t>(i - i0)] = normal_cdf((i + 1 - sp.u) / sx) - normal_cdf((i - sp.u) / sx);
            for (int j = j0; j <= j1; ++j) {
                const double wy = sign * sp.amplitude * (normal_cdf((j + 1 - sp.v) / sy) - normal_cdf((j - sp.v) / sy));
                double* row = model.data() + static_cast<std::size_t>(j) * w;
                for (int i = i0; i <= i1; ++i) row[i] += wy * wx[static_cast<std::size_t>(i - i0)];
            }
        };
        auto measure = [&](Spot& sp, bool recentre) {
            double mass = 0.0;
            for (int iter = 0; iter < 3; ++iter) {
                double su = 0.0, sv = 0.0;
                mass = 0.0;
                sp.edge = false;
                for (int j = sp.cj - hy; j <= sp.cj + hy; ++j) {
                    if (j < 0 || j >= h) {
                        sp.edge = true;
                        continue;
                    }
                    for (int i = sp.ci - hx; i <= sp.ci + hx; ++i) {
                        if (i < 0 || i >= w) {
                            sp.edge = true;
                            continue;
                        }
                        const std::size_t k = static_cast<std::size_t>(j) * w + i;
                        const double val = image.values[k] - background - model[k];
                        mass += val;
                        su += val * (i + 0.5);
                        sv += val * (j + 0.5);
                    }
                }
                if (!(mass > 0.0)) break;
                sp.u = su / mass;
                sp.v = sv / mass;
                const int ni = static_cast<int>(std::floor(sp.u)), nj = static_cast<int>(std::floor(sp.v));
                if (!recentre || (ni == sp.ci && nj == sp.cj)) break;
                sp.ci = ni;
                sp.cj = nj;
            }
            sp.valid = mass > 0.0;
            if (!sp.valid) return;
            const double lo_u = std::max(0, sp.ci - hx), hi_u = std::min(w, sp.ci + hx + 1);
            const double lo_v = std::max(0, sp.cj - hy), hi_v = std::min(h, sp.cj + hy + 1);
            const double enclosed = (normal_cdf((hi_u - sp.u) / sx) - normal_cdf((lo_u - sp.u) / sx)) *
                                    (normal_cdf((hi_v - sp.v) / sy) - normal_cdf((lo_v - sp.v) / sy));
            sp.amplitude = enclosed > 0.0 ? mass / enclosed : mass;
        };
        // The first pass keeps every window on its candidate peak: until the
        // neighbours are modelled, their tails would drag a faint spot's window away.
        for (int pass = 0; pass < 12; ++pass) {
            for (auto& sp : spots) {
                add_model(sp, -1.0);
                measure(sp, pass > 0);
                add_model(sp, 1.0);
            }
        }
        for (const auto& sp : spots) {
            if (!sp.valid) continue;
            Detection d;
            d.x = f.origin_x + sp.u * pitch;
            d.y = f.origin_y + sp.v * pitch;
            d.integrated_signal = sp.amplitude;
            d.count_estimate = photons_per_atom > 0.0 ? d.integrated_signal / photons_per_atom : 0.0;
            d.flags = sp.edge ? kEdge : 0u;
            found.push_back(d);
        }
    }

    if (!expected_grid) {
        // Reading order: rows are clusters of centroids closer than one PSF sigma in y.
        std::sort(found.begin(), found.end(), [](const Detection& a, const Detection& b) { return a.y < b.y; });
        const double row_gap = settings.psf_sigma;
        for (std::size_t a = 0; a < found.size();) {
            std::size_t b = a + 1;
            while (b < found.size() && found[b].y - found[b - 1].y < row_gap) ++b;
            std::sort(found.begin() + static_cast<std::ptrdiff_t>(a), found.begin() + static_cast<std::ptrdiff_t>(b),
                      [](const Detection& p, const Detection& q) { return p.x < q.x; });
            a = b;
        }
        return found;
    }

    const auto nodes = *expected_grid;
    double radius = settings.assign_radius;
    if (!(radius > 0.0)) {
        double spacing = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < nodes.size(); ++a)
            for (std::size_t b = a + 1; b < nodes.size(); ++b)
                spacing = std::min(spacing, std::hypot(nodes[a].x - nodes[b].x, nodes[a].y - nodes[b].y));
        radius = std::isfinite(spacing) && spacing > 0.0 ? 0.5 * spacing : 3.0 * settings.tilt_elongation * settings.psf_sigma;
    }

    std::vector<long> owner(nodes.size(), -1);
    std::vector<char> used(found.size(), 0);
    std::vector<std::size_t> order(found.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return found[a].integrated_signal > found[b].integrated_signal;
    });
    for (std::size_t k : order) {
        long best = -1;
        double best_d = radius;
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            const double dist = std::hypot(found[k].x - nodes[n].x, found[k].y - nodes[n].y);
            if (dist <= best_d && owner[n] < 0) {
                best_d = dist;
                best = static_cast<long>(n);
            }
        }
        if (best >= 0) {
            owner[static_cast<std::size_t>(best)] = static_cast<long>(k);
            used[k] = 1;
        }
    }

    std::vector<Detection> out;
    out.reserve(nodes.size() + found.size());
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        Detection d;
        if (owner[n] >= 0) {
            d = found[static_cast<std::size_t>(owner[n])];
            d.flags |= kAssigned;
        } else {
            d.x = nodes[n].x;
            d.y = nodes[n].y;
            d.flags = kEmpty;
        }
        d.site_id = nodes[n].site_id;
        d.row = nodes[n].row;
        d.col = nodes[n].col;
        out.push_back(d);
    }
    for (std::size_t k = 0; k < found.size(); ++k)
        if (!used[k]) {
            Detection d = found[k];
            d.flags |= kUnassigned;
            out.push_back(d);
        }
    return out;
}

double write_pgm(std::ostream& out, const FluorescenceImage& image) {
    const double peak = image.max();
    const double scale = peak > 0.0 ? peak / 65535.0 : 1.0;
    out << "P5\n# microtrap fluorescence image, pixel_pitch_m=" << fmt_num(image.frame.pixel_pitch)
        << " value_per_level=" << fmt_num(scale) << "\n"
        << image.frame.width << ' ' << image.frame.height << "\n65535\n";
    for (double v : image.values) {
        const auto level = static_cast<unsigned>(std::lround(std::clamp(v / scale, 0.0, 65535.0)));
        out.put(static_cast<char>((level >> 8) & 0xff));
        out.put(static_cast<char>(level & 0xff));
    }
    return scale;
}

FluorescenceImage read_pgm(std::istream& in, double scale) {
    auto next_token = [&in]() {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw InvalidInput("truncated PGM header");
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P2") throw InvalidInput("not a PGM file (magic '" + magic + "')");
    FluorescenceImage img;
    img.frame.width = std::stoi(next_token());
    img.frame.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (img.frame.width < 1 || img.frame.height < 1 || maxval < 1 || maxval > 65535) throw InvalidInput("bad PGM header");
    const std::size_t n = static_cast<std::size_t>(img.frame.width) * img.frame.height;
    img.values.resize(n);
    if (magic == "P2") {
        for (auto& v : img.values) v = std::stod(next_token()) * scale;
        return img;
    }
    in.get();  // single whitespace after maxval
    for (auto& v : img.values) {
        unsigned level = 0;
        if (maxval > 255) {
            const int hi = in.get(), lo = in.get();
            if (lo == EOF) throw InvalidInput("truncated PGM data");
            level = (static_cast<unsigned>(hi) << 8) | static_cast<unsigned>(lo);
        } else {
            const int b = in.get();
            if (b == EOF) throw InvalidInput("truncated PGM data");
            level = static_cast<unsigned>(b);
        }
        v = level * scale;
    }
    return img;
}

std::string image_sidecar(const FluorescenceImage& image, double scale, const RenderSettings& settings) {
    std::ostringstream ss;
    ss << "format = pgm-p5-16bit\n"
       << "width = " << image.frame.width << '\n'
       << "height = " << image.frame.height << '\n'
       << "pixel_pitch = " << fmt_num(image.frame.pixel_pitch) << '\n'
       << "origin_x = " << fmt_num(image.frame.origin_x) << '\n'
       << "origin_y = " << fmt_num(image.frame.origin_y) << '\n'
       << "value_per_level = " << fmt_num(scale) << '\n'
       << "psf_sigma = " << fmt_num(settings.psf_sigma) << '\n'
       << "tilt_elongation = " << fmt_num(settings.tilt_elongation) << '\n'
       << "shot_noise = " << (settings.shot_noise ? "true" : "false") << '\n'
       << "seed = " << image.seed << '\n'
       << "exposure = " << fmt_num(image.exposure) << '\n'
       << "total_signal = " << fmt_num(image.sum()) << '\n';
    return ss.str();
}

void write_detections_csv(std::ostream& out, std::span<const Detection> detections) {
    out << "site_id,row,col,x_m,y_m,integrated_signal,count_estimate,flags\n";
    for (const auto& d : detections) {
        std::string flags;
        auto add = [&flags](const char* s) {
            if (!flags.empty()) flags += '|';
            flags += s;
        };
        if (d.flags & kAssigned) add("assigned");
        if (d.flags & kEmpty) add("empty");
        if (d.flags & kEdge) add("edge");
        if (d.flags & kUnassigned) add("unassigned");
        out << (d.site_id ? std::to_string(*d.site_id) : std::string("-")) << ',' << d.row << ',' << d.col << ','
            << fmt_num(d.x) << ',' << fmt_num(d.y) << ',' << fmt_num(d.integrated_signal) << ','
            << fmt_num(d.count_estimate) << ',' << (flags.empty() ? "-" : flags) << '\n';
    }
}

}  // namespace microtrap
