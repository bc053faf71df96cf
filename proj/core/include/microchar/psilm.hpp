#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <microchar/image.hpp>
#include <microchar/image_ops.hpp>

namespace microchar {

/// Point-sampled intercept configuration. Chords are measured along the four
/// fixed directions 0, 90, 45 and -45 degrees.
struct PsilmConfig {
    int grid_step = 8;              ///< px between sample points
    double microns_per_pixel = 1.0; ///< calibration; 1.0 keeps pixel units
    double colormap_min = 0.0;      ///< radius mapped to dark blue
    double colormap_max = 30.0;     ///< radius mapped to dark red
    bool exclude_pores = true;      ///< mixed mode: mask dark blobs out
    int pore_open_radius = 2;
    int pore_min_area = 25;
};

struct InterceptSample {
    int x = 0, y = 0;
    std::array<double, 4> lengths{};  ///< px chord per direction (0,90,45,-45)
    double local_radius = 0.0;        ///< (mean chord)/2 * microns_per_pixel
    bool border_truncated = false;    ///< some chord ended at the image border
};

struct Histogram {
    std::vector<double> bin_edges;          ///< B+1 uniform edges
    std::vector<std::uint64_t> frequencies; ///< B counts; sum == sample count
};

struct RadiusSummary {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
    std::string formatted; ///< "4.22 ± 3.57" style
};

/// Sobel magnitude -> Otsu on the magnitude -> morphological thinning.
BinaryMask gb_edge_mask(const GrayImage& img);

/// Dark-blob detector for pores inside grain images: Otsu (dark polarity),
/// opening, then a minimum-area component filter.
BinaryMask detect_pores(const GrayImage& img, int open_radius = 2, int min_area = 25);

/// Grid sample points (multiples of grid_step) skipping stop-mask pixels.
/// For each point, rays march both ways per direction until a stop pixel or
/// the image border; diagonal steps count sqrt(2) px. Border-truncated chords
/// are flagged but kept.
std::vector<InterceptSample> sample_intercepts(const BinaryMask& stop_mask,
                                               const PsilmConfig& cfg);

struct RgbSegmentation {
    RgbImage rgb;
    std::vector<InterceptSample> samples;
};

/// Full PSILM map: edge mask (plus pores when enabled) rendered black, every
/// other pixel colored by the radius of the nearest sample within its own
/// grain region, through the jet colormap scaled to
/// [colormap_min, colormap_max].
RgbSegmentation rgb_segmentation(const GrayImage& img, const PsilmConfig& cfg);

/// Uniform-bin histogram over [lo, hi]; out-of-range radii clamp to the end
/// bins. Throws NoSamples when samples is empty.
Histogram grain_histogram(const std::vector<InterceptSample>& samples, int bins, double lo,
                          double hi);

/// Range defaults to [0, max sample radius].
Histogram grain_histogram(const std::vector<InterceptSample>& samples, int bins);

RadiusSummary summarize_radii(const std::vector<InterceptSample>& samples);

/// Piecewise-linear jet: anchors (t, r, g, b) at 0 -> (0,0,139),
/// 0.25 -> (0,0,255), 0.375 -> (0,255,255), 0.625 -> (0,255,0),
/// 0.75 -> (255,255,0), 0.875 -> (255,0,0), 1 -> (139,0,0).
std::array<std::uint8_t, 3> jet_color(double value, double vmin, double vmax);

/// The 16 quantization anchors: jet_color(i/15, 0, 1) for i = 0..15.
const std::array<std::array<std::uint8_t, 3>, 16>& jet_anchor_colors();

void write_histogram_csv(const std::string& path, const Histogram& hist);
Histogram read_histogram_csv(const std::string& path);

} // namespace microchar
