#pragma once

#include <string>
#include <vector>

#include <microchar/image.hpp>
#include <microchar/image_ops.hpp>
#include <microchar/synth.hpp>

namespace microchar {

/// Axis-aligned detection box; cx/cy is the box center in pixels.
struct BoundingBox {
    double cx = 0.0, cy = 0.0;
    int w = 0, h = 0;
    int label = 0;
    double equivalent_diameter = 0.0;
};

struct ParamError {
    double mean = 0.0;
    double stddev = 0.0; // population standard deviation
};

struct BoxMatch {
    int truth_idx = -1;
    int pred_idx = -1;
    double center_dist = 0.0;
};

/// Box-parameter percent errors over greedy nearest-center matches.
/// Conventions (also emitted in report JSON): center errors are normalized
/// by the image side (width for x, height for y), width/height errors by the
/// truth dimension; unmatched boxes count toward recall only.
struct BoxErrorReport {
    int n_truth = 0;
    int n_pred = 0;
    int n_matched = 0;
    double recall = 1.0;
    ParamError err_cx, err_cy, err_w, err_h;
    std::vector<BoxMatch> matches;
};

/// Otsu threshold at the given polarity followed by a radius-1 opening.
BinaryMask wcbd_segment(const GrayImage& img, Polarity polarity);

/// Distance transform -> local maxima markers -> watershed on the negated
/// distance restricted to the mask. Splits touching defects, one region per
/// marker; components the window scan starves still receive one fallback
/// marker so every foreground pixel ends up labeled.
LabelMap split_overlaps(const BinaryMask& mask, int min_separation = 5);

/// Tight boxes per label, sorted by label. equivalent_diameter =
/// 2*sqrt(area/pi).
std::vector<BoundingBox> extract_boxes(const LabelMap& labels);

/// Boxes implied by truth disks (extents of the rasterized disk,
/// equivalent_diameter = 2r).
std::vector<BoundingBox> truth_boxes(const std::vector<Disk>& disks);

BoxErrorReport box_error_report(const std::vector<BoundingBox>& pred,
                                const std::vector<BoundingBox>& truth, int image_width,
                                int image_height);

void write_boxes_csv(const std::string& path, const std::vector<BoundingBox>& boxes);

} // namespace microchar
