#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <microchar/image.hpp>

namespace microchar {

/// Foreground polarity of defects in a grayscale image.
enum class Polarity { Dark, Bright };

enum class MorphOp { Open, Close };

enum class Connectivity : int { Four = 4, Eight = 8 };

// ---------------------------------------------------------------------------
// Distance transform
// ---------------------------------------------------------------------------

/// Exact L1 distance to the nearest background pixel, via the two-pass
/// chamfer scan with unit weights. Foreground pixels of an all-foreground
/// mask saturate at width+height.
DistanceMap cityblock_distance_transform(const BinaryMask& mask);

/// Negated copy of a distance map, usable as watershed elevation.
std::vector<std::int32_t> negate(const DistanceMap& dm);

// ---------------------------------------------------------------------------
// Markers and watershed
// ---------------------------------------------------------------------------

/// Marker pixels whose dist value is >= every value in the
/// (2*min_separation+1)^2 window around them (window clipped at borders).
/// Equal-valued 8-connected candidate plateaus collapse to the pixel with the
/// lowest row-major index. Markers are labeled 1..K in row-major order.
LabelMap local_maxima(const DistanceMap& dm, int min_separation);

/// Marker-based priority flood. Flooding is ordered by elevation ascending
/// with FIFO tie-break, so the output is deterministic. Every mask foreground
/// pixel reachable from a marker gets that marker's label; regions are
/// 4-connected. Throws NoMarkers if markers are empty while the mask has
/// foreground.
LabelMap watershed(const std::vector<std::int32_t>& elevation, const LabelMap& markers,
                   const BinaryMask& mask);

// ---------------------------------------------------------------------------
// Edges and thresholding
// ---------------------------------------------------------------------------

struct SobelResult {
    GrayImage magnitude;    ///< per-pixel sqrt(Gx^2+Gy^2), clamped to [0,255]
    std::vector<float> raw; ///< unclamped magnitudes, row-major
};

/// 3x3 Sobel gradient magnitude with replicate padding at the borders.
/// Throws TooSmall for images under 3x3.
SobelResult sobel_magnitude(const GrayImage& img);

struct OtsuResult {
    int threshold = 0;
    BinaryMask mask;
};

/// Otsu threshold over the 256-bin histogram (ties broken toward the lower
/// threshold). With Polarity::Dark the mask foreground is pixels strictly
/// below the threshold; Polarity::Bright runs the same scan on the inverted
/// image, so foreground is pixels strictly above 255-threshold_inverted.
/// A constant image yields threshold = that value and an empty mask.
OtsuResult threshold_otsu(const GrayImage& img, Polarity polarity = Polarity::Dark);

// ---------------------------------------------------------------------------
// Components and morphology
// ---------------------------------------------------------------------------

/// Connected-component labeling. Labels are assigned in row-major first-visit
/// order; returns the label map and the component count.
std::pair<LabelMap, int> connected_components(const BinaryMask& mask,
                                              Connectivity connectivity);

/// Erosion with an L1 ball of the given radius (structuring element clipped
/// at the image border, i.e. outside pixels count as foreground).
BinaryMask erode(const BinaryMask& mask, int radius);

/// Dilation with an L1 ball of the given radius.
BinaryMask dilate(const BinaryMask& mask, int radius);

/// Opening (erode then dilate) or closing (dilate then erode), radius >= 1.
BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius);

/// Zhang-Suen thinning: reduces foreground regions to 1-px-wide skeletons.
BinaryMask thin(const BinaryMask& mask);

} // namespace microchar
