#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "microtrap/diagnostics.hpp"
#include "microtrap/errors.hpp"
#include "microtrap/imaging.hpp"
#include "support.hpp"

using namespace microtrap;
using namespace microtrap::test;

namespace {

constexpr double kPitch = 125e-6;
constexpr double kPixel = 4e-6;

struct Scene {
    std::vector<SpotSource> spots;
    std::vector<GridNode> nodes;
};

Scene grid_scene(int rows, int cols, double signal) {
    Scene s;
    std::size_t id = 0;
    for (int r = 1; r <= rows; ++r)
        for (int c = 1; c <= cols; ++c) {
            const double x = (c - (cols + 1) / 2.0) * kPitch, y = (r - (rows + 1) / 2.0) * kPitch;
            s.spots.push_back({x, y, signal});
            s.nodes.push_back({id++, r, c, x, y});
        }
    return s;
}

RenderSettings noiseless(double elongation = 1.6) {
    RenderSettings rs;
    rs.psf_sigma = 17e-6;
    rs.tilt_elongation = elongation;
    rs.photons_per_signal = 100.0;
    return rs;
}

DetectionSettings detection(double elongation = 1.6) {
    DetectionSettings ds;
    ds.psf_sigma = 17e-6;
    ds.tilt_elongation = elongation;
    ds.per_atom_rate = 1e5;
    ds.exposure = 1e-3;
    return ds;
}

std::size_t count_flag(const std::vector<Detection>& d, unsigned flag) {
    return static_cast<std::size_t>(std::count_if(d.begin(), d.end(), [flag](const Detection& x) { return (x.flags & flag) != 0u; }));
}

}  // namespace

TEST(Render, ZeroSignalsGiveBlankImage) {
    const Scene s = grid_scene(2, 3, 0.0);
    const auto img = render(s.spots, frame_around(s.spots, kPixel, 120e-6), noiseless());
    EXPECT_EQ(img.max(), 0.0);
    EXPECT_TRUE(detect_sites(img, detection()).empty());
}

TEST(Render, SingleSpotNormalization) {
    const SpotSource spot{1.3e-6, -2.1e-6, 250.0};
    const auto img = render({&spot, 1}, frame_around({&spot, 1}, kPixel, 150e-6), noiseless());
    EXPECT_LT(rel_err(img.sum(), 250.0 * 100.0), 5e-3);
    for (double v : img.values) EXPECT_GE(v, 0.0);
}

TEST(Render, PartialSpotWarns) {
    int warnings = 0;
    auto previous = set_warning_sink([&](std::string_view) { ++warnings; });
    const SpotSource spot{0.0, 0.0, 1.0};
    ImageFrame f;
    f.width = 10;
    f.height = 10;
    f.pixel_pitch = kPixel;
    (void)render({&spot, 1}, f, noiseless());
    set_warning_sink(previous);
    EXPECT_EQ(warnings, 1);
}

TEST(Render, NeighbourContrastRoundSpots) {
    const Scene s = grid_scene(4, 20, 500.0);
    const auto frame = frame_around(s.spots, kPixel, 82e-6);
    const auto img = render(s.spots, frame, noiseless(1.0));
    auto pixel = [&](double x, double y) {
        return img.at(static_cast<int>((x - frame.origin_x) / kPixel), static_cast<int>((y - frame.origin_y) / kPixel));
    };
    const SpotSource a = s.spots[40], b = s.spots[41];
    const double peak = pixel(a.x, a.y);
    const double mid = pixel(0.5 * (a.x + b.x), a.y);
    EXPECT_LT(mid / peak, 0.1);
    const double vertical_mid = pixel(a.x, 0.5 * (s.spots[20].y + s.spots[40].y));
    EXPECT_LT(vertical_mid / peak, 0.1);
}

TEST(Detect, BlockRoundTrip) {
    Scene s = grid_scene(4, 20, 500.0);
    const std::size_t hole = 2 * 20 + 5;
    s.spots[hole].signal = 0.0;
    const auto frame = frame_around(s.spots, kPixel, 120e-6);
    const auto img = render(s.spots, frame, noiseless());
    const auto found = detect_sites(img, detection(), std::span<const GridNode>(s.nodes));
    ASSERT_EQ(found.size(), 80u);
    EXPECT_EQ(count_flag(found, kAssigned), 79u);
    EXPECT_EQ(count_flag(found, kUnassigned), 0u);
    EXPECT_EQ(found[hole].flags & kEmpty, kEmpty);
    EXPECT_EQ(found[hole].row, 3);
    EXPECT_EQ(found[hole].col, 6);
    for (std::size_t i = 0; i < found.size(); ++i) {
        if (i == hole) continue;
        EXPECT_LT(std::abs(found[i].x - s.spots[i].x) / kPixel, 0.1);
        EXPECT_LT(std::abs(found[i].y - s.spots[i].y) / kPixel, 0.1);
        EXPECT_LT(rel_err(found[i].integrated_signal, 500.0 * 100.0), 0.01);
        EXPECT_LT(rel_err(found[i].count_estimate, 500.0), 0.01);
    }
}

TEST(Detect, CountFidelityRandomSignals) {
    Gen g(51);
    for (int trial = 0; trial < 10; ++trial) {
        Scene s = grid_scene(2, 6, 0.0);
        for (auto& spot : s.spots) spot.signal = g.uniform(100.0, 1000.0);
        const auto img = render(s.spots, frame_around(s.spots, kPixel, 90e-6), noiseless());
        const auto found = detect_sites(img, detection(), std::span<const GridNode>(s.nodes));
        ASSERT_EQ(count_flag(found, kAssigned), s.spots.size());
        for (std::size_t i = 0; i < s.spots.size(); ++i)
            EXPECT_LT(rel_err(found[i].integrated_signal, 100.0 * s.spots[i].signal), 0.01);
    }
}

TEST(Detect, TranslationEquivariance) {
    const Scene s = grid_scene(2, 4, 400.0);
    const auto frame = frame_around(s.spots, kPixel, 120e-6);
    const auto base = detect_sites(render(s.spots, frame, noiseless()), detection());
    Gen g(52);
    for (int trial = 0; trial < 5; ++trial) {
        const int di = g.integer(-5, 5), dj = g.integer(-5, 5);
        std::vector<SpotSource> moved = s.spots;
        for (auto& m : moved) {
            m.x += di * kPixel;
            m.y += dj * kPixel;
        }
        const auto shifted = detect_sites(render(moved, frame, noiseless()), detection());
        ASSERT_EQ(shifted.size(), base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
            EXPECT_NEAR((shifted[i].x - base[i].x) / kPixel, di, 1e-6);
            EXPECT_NEAR((shifted[i].y - base[i].y) / kPixel, dj, 1e-6);
            EXPECT_NEAR(shifted[i].integrated_signal, base[i].integrated_signal, 1e-6 * base[i].integrated_signal);
        }
    }
}

TEST(Detect, NoisyHundredAtomSitesAlwaysFound) {
    const Scene s = grid_scene(1, 8, 100.0);
    const auto frame = frame_around(s.spots, kPixel, 120e-6);
    RenderSettings rs = noiseless();
    rs.shot_noise = true;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        rs.seed = seed;
        const auto found = detect_sites(render(s.spots, frame, rs), detection(), std::span<const GridNode>(s.nodes));
        EXPECT_EQ(count_flag(found, kAssigned), 8u) << "seed " << seed;
        EXPECT_EQ(count_flag(found, kUnassigned), 0u) << "seed " << seed;
    }
}

TEST(Detect, ShotNoiseIsSeeded) {
    const Scene s = grid_scene(1, 3, 50.0);
    const auto frame = frame_around(s.spots, kPixel, 120e-6);
    RenderSettings rs = noiseless();
    rs.shot_noise = true;
    rs.seed = 5;
    const auto a = render(s.spots, frame, rs);
    const auto b = render(s.spots, frame, rs);
    rs.seed = 6;
    const auto c = render(s.spots, frame, rs);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
    for (double v : a.values) EXPECT_EQ(v, std::floor(v));
}

TEST(Detect, OffGridSpotIsUnassigned) {
    Scene s = grid_scene(1, 3, 300.0);
    s.spots.push_back({0.0, 1.0 * kPitch, 300.0});
    const auto img = render(s.spots, frame_around(s.spots, kPixel, 120e-6), noiseless());
    const auto found = detect_sites(img, detection(), std::span<const GridNode>(s.nodes));
    EXPECT_EQ(count_flag(found, kAssigned), 3u);
    EXPECT_EQ(count_flag(found, kUnassigned), 1u);
    EXPECT_FALSE(found.back().site_id.has_value());
}

TEST(Pgm, RoundTripWithinOneLevel) {
    const Scene s = grid_scene(2, 2, 300.0);
    const auto img = render(s.spots, frame_around(s.spots, kPixel, 60e-6), noiseless());
    std::stringstream ss;
    const double scale = write_pgm(ss, img);
    const std::string bytes = ss.str();
    EXPECT_EQ(bytes.substr(0, 2), "P5");
    const auto back = read_pgm(ss, scale);
    ASSERT_EQ(back.frame.width, img.frame.width);
    ASSERT_EQ(back.frame.height, img.frame.height);
    for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_NEAR(back.values[i], img.values[i], 0.5 * scale + 1e-12);
    const std::string sidecar = image_sidecar(img, scale, noiseless());
    EXPECT_NE(sidecar.find("value_per_level"), std::string::npos);

    std::stringstream ascii("P2\n2 1\n10\n3 7\n");
    const auto small = read_pgm(ascii, 2.0);
    EXPECT_EQ(small.values, (std::vector<double>{6.0, 14.0}));
    std::stringstream junk("P9\n");
    EXPECT_THROW(read_pgm(junk), InvalidInput);
}

TEST(DetectionsCsv, Columns) {
    const Scene s = grid_scene(1, 2, 300.0);
    const auto img = render(s.spots, frame_around(s.spots, kPixel, 120e-6), noiseless());
    const auto found = detect_sites(img, detection(), std::span<const GridNode>(s.nodes));
    std::ostringstream ss;
    write_detections_csv(ss, found);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "site_id,row,col,x_m,y_m,integrated_signal,count_estimate,flags");
}
