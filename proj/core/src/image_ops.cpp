#include <microchar/image_ops.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace microchar {

namespace {

constexpr int kDx4[4] = {1, -1, 0, 0};
constexpr int kDy4[4] = {0, 0, 1, -1};
constexpr int kDx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};

} // namespace

// ---------------------------------------------------------------------------
// Distance transform
// ---------------------------------------------------------------------------

DistanceMap cityblock_distance_transform(const BinaryMask& mask) {
    const int w = mask.width;
    const int h = mask.height;
    DistanceMap dm(w, h);
    const std::int32_t sat = w + h;

    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        dm.dist[i] = mask.data[i] ? sat : 0;
    }

    // Forward raster scan (top-left neighbors).
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::int32_t d = dm.at(x, y);
            if (d == 0) continue;
            if (y > 0) d = std::min(d, dm.at(x, y - 1) + 1);
            if (x > 0) d = std::min(d, dm.at(x - 1, y) + 1);
            dm.at(x, y) = std::min(d, sat);
        }
    }
    // Backward raster scan (bottom-right neighbors).
    for (int y = h - 1; y >= 0; --y) {
        for (int x = w - 1; x >= 0; --x) {
            std::int32_t d = dm.at(x, y);
            if (d == 0) continue;
            if (y < h - 1) d = std::min(d, dm.at(x, y + 1) + 1);
            if (x < w - 1) d = std::min(d, dm.at(x + 1, y) + 1);
            dm.at(x, y) = std::min(d, sat);
        }
    }
    return dm;
}

std::vector<std::int32_t> negate(const DistanceMap& dm) {
    std::vector<std::int32_t> out(dm.dist.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -dm.dist[i];
    return out;
}

// ---------------------------------------------------------------------------
// Local maxima
// ---------------------------------------------------------------------------

LabelMap local_maxima(const DistanceMap& dm, int min_separation) {
    if (min_separation < 1) throw InvalidArgument("local_maxima: min_separation must be >= 1");
    const int w = dm.width;
    const int h = dm.height;
    const int s = min_separation;

    std::vector<std::uint8_t> candidate(dm.dist.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int32_t v = dm.at(x, y);
            if (v <= 0) continue;
            bool is_max = true;
            const int y0 = std::max(0, y - s), y1 = std::min(h - 1, y + s);
            const int x0 = std::max(0, x - s), x1 = std::min(w - 1, x + s);
            for (int yy = y0; yy <= y1 && is_max; ++yy) {
                for (int xx = x0; xx <= x1; ++xx) {
                    if (dm.at(xx, yy) > v) { is_max = false; break; }
                }
            }
            if (is_max) candidate[static_cast<std::size_t>(y) * w + x] = 1;
        }
    }

    // Collapse equal-valued 8-connected candidate plateaus to the pixel with
    // the lowest row-major index.
    std::vector<std::int32_t> comp(dm.dist.size(), 0);
    std::vector<std::size_t> retained;
    std::int32_t next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!candidate[idx] || comp[idx] != 0) continue;
            ++next;
            retained.push_back(idx); // first visit is the lowest row-major index
            std::vector<std::size_t> stack{idx};
            comp[idx] = next;
            const std::int32_t v = dm.dist[idx];
            while (!stack.empty()) {
                const std::size_t cur = stack.back();
                stack.pop_back();
                const int cx = static_cast<int>(cur % w);
                const int cy = static_cast<int>(cur / w);
                for (int k = 0; k < 8; ++k) {
                    const int nx = cx + kDx8[k], ny = cy + kDy8[k];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                    if (candidate[nidx] && comp[nidx] == 0 && dm.dist[nidx] == v) {
                        comp[nidx] = next;
                        stack.push_back(nidx);
                    }
                }
            }
        }
    }

    LabelMap markers(w, h);
    std::int32_t label = 0;
    for (std::size_t idx : retained) markers.labels[idx] = ++label;
    return markers;
}

// ---------------------------------------------------------------------------
// Watershed
// ---------------------------------------------------------------------------

LabelMap watershed(const std::vector<std::int32_t>& elevation, const LabelMap& markers,
                   const BinaryMask& mask) {
    const int w = mask.width;
    const int h = mask.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (elevation.size() != n || markers.labels.size() != n) {
        throw InvalidArgument("watershed: elevation/markers size must match mask");
    }

    bool any_marker = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (markers.labels[i] != 0) {
            if (!mask.data[i]) {
                throw InvalidArgument("watershed: marker outside mask foreground");
            }
            any_marker = true;
        }
    }
    if (!any_marker) {
        if (mask.count_foreground() > 0) throw NoMarkers("watershed: no markers");
        return LabelMap(w, h);
    }

    LabelMap out(w, h);
    // (elevation, insertion sequence, pixel index); min-heap with FIFO ties.
    using Node = std::tuple<std::int32_t, std::uint64_t, std::uint32_t>;
    std::priority_queue<Node, std::vector<Node>, std::greater<Node>> queue;
    std::uint64_t seq = 0;

    for (std::size_t i = 0; i < n; ++i) {
        if (markers.labels[i] != 0) {
            out.labels[i] = markers.labels[i];
            queue.emplace(elevation[i], seq++, static_cast<std::uint32_t>(i));
        }
    }

    while (!queue.empty()) {
        const auto [elev, s, idx] = queue.top();
        queue.pop();
        (void)elev;
        (void)s;
        const int x = static_cast<int>(idx % w);
        const int y = static_cast<int>(idx / w);
        const std::int32_t label = out.labels[idx];
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx4[k], ny = y + kDy4[k];
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (!mask.data[nidx] || out.labels[nidx] != 0) continue;
            out.labels[nidx] = label;
            queue.emplace(elevation[nidx], seq++, static_cast<std::uint32_t>(nidx));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sobel
// ---------------------------------------------------------------------------

SobelResult sobel_magnitude(const GrayImage& img) {
    if (img.width < 3 || img.height < 3) throw TooSmall("sobel_magnitude: image must be >= 3x3");
    const int w = img.width;
    const int h = img.height;

    SobelResult res;
    res.magnitude = GrayImage(w, h);
    res.raw.resize(static_cast<std::size_t>(w) * h);

    auto sample = [&](int x, int y) -> int {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return img.at(x, y);
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int p00 = sample(x - 1, y - 1), p10 = sample(x, y - 1), p20 = sample(x + 1, y - 1);
            const int p01 = sample(x - 1, y),                              p21 = sample(x + 1, y);
            const int p02 = sample(x - 1, y + 1), p12 = sample(x, y + 1), p22 = sample(x + 1, y + 1);
            const int gx = (p20 + 2 * p21 + p22) - (p00 + 2 * p01 + p02);
            const int gy = (p02 + 2 * p12 + p22) - (p00 + 2 * p10 + p20);
            const float mag = std::sqrt(static_cast<float>(gx) * gx + static_cast<float>(gy) * gy);
            res.raw[static_cast<std::size_t>(y) * w + x] = mag;
            res.magnitude.at(x, y) =
                static_cast<std::uint8_t>(std::min(255.0f, std::round(mag)));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Otsu
// ---------------------------------------------------------------------------

namespace {

// Threshold t splits classes {v < t} and {v >= t}; returns the t in [0,255]
// maximizing between-class variance, ties toward the lower t.
int otsu_scan(const std::array<std::uint64_t, 256>& hist, std::uint64_t total) {
    double sum_all = 0.0;
    for (int v = 0; v < 256; ++v) sum_all += static_cast<double>(hist[v]) * v;

    double best_var = -1.0;
    int best_t = 0;
    double w0 = 0.0;
    double sum0 = 0.0;
    for (int t = 0; t <= 255; ++t) {
        if (t > 0) {
            w0 += static_cast<double>(hist[t - 1]);
            sum0 += static_cast<double>(hist[t - 1]) * (t - 1);
        }
        const double w1 = static_cast<double>(total) - w0;
        if (w0 == 0.0 || w1 == 0.0) {
            if (best_var < 0.0) { best_var = 0.0; best_t = t; }
            continue;
        }
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

} // namespace

OtsuResult threshold_otsu(const GrayImage& img, Polarity polarity) {
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t v : img.data) {
        ++hist[polarity == Polarity::Dark ? v : 255 - v];
    }

    OtsuResult res;
    res.mask = BinaryMask(img.width, img.height);

    int nonzero_bins = 0;
    int only_bin = 0;
    for (int v = 0; v < 256; ++v) {
        if (hist[v] != 0) { ++nonzero_bins; only_bin = v; }
    }
    if (nonzero_bins <= 1) {
        // Constant image: threshold is that value, mask stays empty.
        res.threshold = polarity == Polarity::Dark ? only_bin : 255 - only_bin;
        return res;
    }

    const int t = otsu_scan(hist, img.data.size());
    res.threshold = polarity == Polarity::Dark ? t : 255 - t;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const int v = polarity == Polarity::Dark ? img.data[i] : 255 - img.data[i];
        res.mask.data[i] = v < t ? 1 : 0;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Connected components
// ---------------------------------------------------------------------------

std::pair<LabelMap, int> connected_components(const BinaryMask& mask,
                                              Connectivity connectivity) {
    const int w = mask.width;
    const int h = mask.height;
    const int ndirs = connectivity == Connectivity::Four ? 4 : 8;
    const int* dx = connectivity == Connectivity::Four ? kDx4 : kDx8;
    const int* dy = connectivity == Connectivity::Four ? kDy4 : kDy8;

    LabelMap out(w, h);
    int count = 0;
    std::vector<std::size_t> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!mask.data[idx] || out.labels[idx] != 0) continue;
            ++count;
            out.labels[idx] = count;
            stack.assign(1, idx);
            while (!stack.empty()) {
                const std::size_t cur = stack.back();
                stack.pop_back();
                const int cx = static_cast<int>(cur % w);
                const int cy = static_cast<int>(cur / w);
                for (int k = 0; k < ndirs; ++k) {
                    const int nx = cx + dx[k], ny = cy + dy[k];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                    if (mask.data[nidx] && out.labels[nidx] == 0) {
                        out.labels[nidx] = count;
                        stack.push_back(nidx);
                    }
                }
            }
        }
    }
    return {std::move(out), count};
}

// ---------------------------------------------------------------------------
// Morphology
// ---------------------------------------------------------------------------

BinaryMask erode(const BinaryMask& mask, int radius) {
    if (radius < 0) throw InvalidArgument("erode: radius must be >= 0");
    if (radius == 0) return mask;
    const DistanceMap dm = cityblock_distance_transform(mask);
    BinaryMask out(mask.width, mask.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = dm.dist[i] > radius ? 1 : 0;
    }
    return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
    if (radius < 0) throw InvalidArgument("dilate: radius must be >= 0");
    if (radius == 0) return mask;
    BinaryMask inv(mask.width, mask.height);
    for (std::size_t i = 0; i < inv.data.size(); ++i) inv.data[i] = mask.data[i] ? 0 : 1;
    const DistanceMap dm = cityblock_distance_transform(inv);
    BinaryMask out(mask.width, mask.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = dm.dist[i] <= radius ? 1 : 0;
    }
    return out;
}

BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius) {
    if (radius < 1) throw InvalidArgument("morph: radius must be >= 1");
    if (op == MorphOp::Open) return dilate(erode(mask, radius), radius);
    return erode(dilate(mask, radius), radius);
}

// ---------------------------------------------------------------------------
// Thinning (Zhang-Suen)
// ---------------------------------------------------------------------------

BinaryMask thin(const BinaryMask& mask) {
    const int w = mask.width;
    const int h = mask.height;
    BinaryMask img = mask;

    auto px = [&](int x, int y) -> int {
        if (x < 0 || x >= w || y < 0 || y >= h) return 0;
        return img.data[static_cast<std::size_t>(y) * w + x];
    };

    bool changed = true;
    std::vector<std::size_t> to_clear;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            to_clear.clear();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!px(x, y)) continue;
                    // Neighbors clockwise from north: p2..p9.
                    const int p2 = px(x, y - 1), p3 = px(x + 1, y - 1), p4 = px(x + 1, y);
                    const int p5 = px(x + 1, y + 1), p6 = px(x, y + 1), p7 = px(x - 1, y + 1);
                    const int p8 = px(x - 1, y), p9 = px(x - 1, y - 1);
                    const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    if (b < 2 || b > 6) continue;
                    const int a = (p2 == 0 && p3 == 1) + (p3 == 0 && p4 == 1) +
                                  (p4 == 0 && p5 == 1) + (p5 == 0 && p6 == 1) +
                                  (p6 == 0 && p7 == 1) + (p7 == 0 && p8 == 1) +
                                  (p8 == 0 && p9 == 1) + (p9 == 0 && p2 == 1);
                    if (a != 1) continue;
                    if (pass == 0) {
                        if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
                    } else {
                        if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
                    }
                    to_clear.push_back(static_cast<std::size_t>(y) * w + x);
                }
            }
            if (!to_clear.empty()) changed = true;
            for (std::size_t idx : to_clear) img.data[idx] = 0;
        }
    }
    return img;
}

} // namespace microchar
