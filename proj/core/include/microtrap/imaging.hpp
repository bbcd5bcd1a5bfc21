#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace microtrap {

/// Object-plane pixel grid. Pixel (i, j) covers
/// [origin_x + i*pitch, origin_x + (i+1)*pitch) x [origin_y + j*pitch, ...).
/// Image rows run along +y, so lens-array row 1 is at the top.
struct ImageFrame {
    double origin_x = 0.0;
    double origin_y = 0.0;
    int width = 0;
    int height = 0;
    double pixel_pitch = 4e-6;
};

struct SpotSource {
    double x = 0.0;
    double y = 0.0;
    double signal = 0.0;
};

/// Smallest frame holding every position plus `margin` on each side.
ImageFrame frame_around(std::span<const SpotSource> spots, double pixel_pitch, double margin);

struct FluorescenceImage {
    ImageFrame frame;
    std::vector<double> values;  // row-major, height x width, all >= 0
    std::uint64_t seed = 0;
    double exposure = 0.0;       // exposure proxy, s

    [[nodiscard]] double at(int i, int j) const { return values[static_cast<std::size_t>(j) * frame.width + i]; }
    [[nodiscard]] double sum() const;
    [[nodiscard]] double max() const;
};

struct RenderSettings {
    double psf_sigma = 17e-6;         // rms spot size (vertical)
    double tilt_elongation = 1.6;     // horizontal sigma = elongation * psf_sigma
    bool shot_noise = false;
    std::uint64_t seed = 0;
    double photons_per_signal = 1.0;  // integrated spot weight per unit signal
    double exposure = 1e-3;
};

/// Each spot is an anisotropic Gaussian integrated exactly over every pixel, so
/// the pixel sum of a fully contained spot is signal * photons_per_signal.
/// Optional Poisson noise uses one counter-based stream per pixel.
FluorescenceImage render(std::span<const SpotSource> spots, const ImageFrame& frame, const RenderSettings& settings);

struct GridNode {
    std::size_t site_id = 0;
    int row = 0;
    int col = 0;
    double x = 0.0;
    double y = 0.0;
};

struct DetectionSettings {
    double psf_sigma = 17e-6;
    double tilt_elongation = 1.6;
    double threshold_k = 5.0;          // threshold = median + k * MAD of the matched-filtered image
    double relative_floor = 0.01;      // and at least this fraction of its maximum
    double detection_efficiency = 1.0;
    double per_atom_rate = 1.0;        // photons per second per atom reaching the detector before efficiency
    double exposure = 1.0;
    double assign_radius = 0.0;        // 0 -> half the smallest grid spacing
};

enum DetectionFlag : unsigned {
    kAssigned = 1u,
    kEmpty = 2u,       // expected grid node without a detection
    kEdge = 4u,        // integration window clipped by the frame
    kUnassigned = 8u,  // maximum not matched to any grid node
};

struct Detection {
    std::optional<std::size_t> site_id;
    int row = 0;
    int col = 0;
    double x = 0.0;
    double y = 0.0;
    double integrated_signal = 0.0;
    double count_estimate = 0.0;
    unsigned flags = 0;
};

std::vector<Detection> detect_sites(const FluorescenceImage& image, const DetectionSettings& settings,
                                    std::optional<std::span<const GridNode>> expected_grid = std::nullopt);

/// Binary 16-bit PGM (P5, maxval 65535, big endian). Returns the physical value
/// of one grey level so the sidecar can record it.
double write_pgm(std::ostream& out, const FluorescenceImage& image);
/// Reads a P5 or P2 graymap; values are multiplied by `scale`.
FluorescenceImage read_pgm(std::istream& in, double scale = 1.0);
std::string image_sidecar(const FluorescenceImage& image, double scale, const RenderSettings& settings);

void write_detections_csv(std::ostream& out, std::span<const Detection> detections);

}  // namespace microtrap
