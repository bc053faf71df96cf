#include <microchar/wcbd.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <tuple>

namespace microchar {

BinaryMask wcbd_segment(const GrayImage& img, Polarity polarity) {
    const OtsuResult otsu = threshold_otsu(img, polarity);
    if (otsu.mask.count_foreground() == 0) return otsu.mask;
    return morph(otsu.mask, MorphOp::Open, 1);
}

LabelMap split_overlaps(const BinaryMask& mask, int min_separation) {
    if (mask.count_foreground() == 0) return LabelMap(mask.width, mask.height);
    const DistanceMap dm = cityblock_distance_transform(mask);
    LabelMap markers = local_maxima(dm, min_separation);

    // A component whose peak sits inside a taller neighbor's window gets no
    // window-maximum; it still needs a marker or the flood never reaches it.
    // Add one at its first (row-major) maximal-distance pixel.
    const auto [components, component_count] = connected_components(mask, Connectivity::Four);
    std::vector<char> has_marker(static_cast<std::size_t>(component_count) + 1, 0);
    for (std::size_t i = 0; i < markers.labels.size(); ++i) {
        if (markers.labels[i] != 0) {
            has_marker[static_cast<std::size_t>(components.labels[i])] = 1;
        }
    }
    std::vector<std::int32_t> best(static_cast<std::size_t>(component_count) + 1, -1);
    std::vector<std::size_t> best_idx(static_cast<std::size_t>(component_count) + 1, 0);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        const std::int32_t comp = components.labels[i];
        if (comp == 0 || has_marker[static_cast<std::size_t>(comp)]) continue;
        if (dm.dist[i] > best[static_cast<std::size_t>(comp)]) {
            best[static_cast<std::size_t>(comp)] = dm.dist[i];
            best_idx[static_cast<std::size_t>(comp)] = i;
        }
    }
    std::int32_t next_label = markers.max_label();
    for (std::int32_t comp = 1; comp <= component_count; ++comp) {
        if (!has_marker[static_cast<std::size_t>(comp)] &&
            best[static_cast<std::size_t>(comp)] >= 0) {
            markers.labels[best_idx[static_cast<std::size_t>(comp)]] = ++next_label;
        }
    }
    return watershed(negate(dm), markers, mask);
}

std::vector<BoundingBox> extract_boxes(const LabelMap& labels) {
    const std::int32_t k = labels.max_label();
    if (k == 0) return {};

    struct Extent {
        int xmin, xmax, ymin, ymax;
        std::int64_t area;
    };
    std::vector<Extent> ext(static_cast<std::size_t>(k),
                            {std::numeric_limits<int>::max(), -1,
                             std::numeric_limits<int>::max(), -1, 0});
    for (int y = 0; y < labels.height; ++y) {
        for (int x = 0; x < labels.width; ++x) {
            const std::int32_t lab = labels.at(x, y);
            if (lab <= 0) continue;
            Extent& e = ext[static_cast<std::size_t>(lab) - 1];
            e.xmin = std::min(e.xmin, x);
            e.xmax = std::max(e.xmax, x);
            e.ymin = std::min(e.ymin, y);
            e.ymax = std::max(e.ymax, y);
            ++e.area;
        }
    }

    std::vector<BoundingBox> boxes;
    boxes.reserve(static_cast<std::size_t>(k));
    for (std::int32_t lab = 1; lab <= k; ++lab) {
        const Extent& e = ext[static_cast<std::size_t>(lab) - 1];
        if (e.area == 0) continue;
        BoundingBox box;
        box.label = lab;
        box.cx = (e.xmin + e.xmax) / 2.0;
        box.cy = (e.ymin + e.ymax) / 2.0;
        box.w = e.xmax - e.xmin + 1;
        box.h = e.ymax - e.ymin + 1;
        box.equivalent_diameter =
            2.0 * std::sqrt(static_cast<double>(e.area) / std::numbers::pi);
        boxes.push_back(box);
    }
    return boxes;
}

std::vector<BoundingBox> truth_boxes(const std::vector<Disk>& disks) {
    std::vector<BoundingBox> boxes;
    boxes.reserve(disks.size());
    int label = 0;
    for (const Disk& d : disks) {
        const int xmin = static_cast<int>(std::ceil(d.cx - d.r));
        const int xmax = static_cast<int>(std::floor(d.cx + d.r));
        const int ymin = static_cast<int>(std::ceil(d.cy - d.r));
        const int ymax = static_cast<int>(std::floor(d.cy + d.r));
        BoundingBox box;
        box.label = ++label;
        box.cx = (xmin + xmax) / 2.0;
        box.cy = (ymin + ymax) / 2.0;
        box.w = xmax - xmin + 1;
        box.h = ymax - ymin + 1;
        box.equivalent_diameter = 2.0 * d.r;
        boxes.push_back(box);
    }
    return boxes;
}

namespace {

ParamError summarize(const std::vector<double>& values) {
    ParamError pe;
    if (values.empty()) return pe;
    double sum = 0.0;
    for (double v : values) sum += v;
    pe.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - pe.mean) * (v - pe.mean);
    pe.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return pe;
}

} // namespace

BoxErrorReport box_error_report(const std::vector<BoundingBox>& pred,
                                const std::vector<BoundingBox>& truth, int image_width,
                                int image_height) {
    BoxErrorReport report;
    report.n_truth = static_cast<int>(truth.size());
    report.n_pred = static_cast<int>(pred.size());

    // Greedy nearest-center matching: all pairs sorted by distance (ties by
    // truth then pred index), each box matched at most once.
    std::vector<std::tuple<double, int, int>> pairs;
    pairs.reserve(truth.size() * pred.size());
    for (int t = 0; t < report.n_truth; ++t) {
        for (int p = 0; p < report.n_pred; ++p) {
            const double dx = truth[t].cx - pred[p].cx;
            const double dy = truth[t].cy - pred[p].cy;
            pairs.emplace_back(std::sqrt(dx * dx + dy * dy), t, p);
        }
    }
    std::sort(pairs.begin(), pairs.end());

    std::vector<char> truth_used(truth.size(), 0), pred_used(pred.size(), 0);
    std::vector<double> e_cx, e_cy, e_w, e_h;
    for (const auto& [dist, t, p] : pairs) {
        if (truth_used[t] || pred_used[p]) continue;
        truth_used[t] = pred_used[p] = 1;
        report.matches.push_back({t, p, dist});
        e_cx.push_back(std::abs(pred[p].cx - truth[t].cx) / image_width * 100.0);
        e_cy.push_back(std::abs(pred[p].cy - truth[t].cy) / image_height * 100.0);
        if (truth[t].w > 0) e_w.push_back(std::abs(pred[p].w - truth[t].w) /
                                          static_cast<double>(truth[t].w) * 100.0);
        if (truth[t].h > 0) e_h.push_back(std::abs(pred[p].h - truth[t].h) /
                                          static_cast<double>(truth[t].h) * 100.0);
    }
    report.n_matched = static_cast<int>(report.matches.size());
    report.recall = report.n_truth == 0
                        ? 1.0
                        : static_cast<double>(report.n_matched) / report.n_truth;
    report.err_cx = summarize(e_cx);
    report.err_cy = summarize(e_cy);
    report.err_w = summarize(e_w);
    report.err_h = summarize(e_h);
    return report;
}

void write_boxes_csv(const std::string& path, const std::vector<BoundingBox>& boxes) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "label,cx,cy,w,h,eq_diam\n";
    for (const BoundingBox& b : boxes) {
        out << b.label << "," << b.cx << "," << b.cy << "," << b.w << "," << b.h << ","
            << b.equivalent_diameter << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

} // namespace microchar
