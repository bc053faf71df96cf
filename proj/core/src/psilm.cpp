#include <microchar/psilm.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace microchar {

BinaryMask gb_edge_mask(const GrayImage& img) {
    const SobelResult sobel = sobel_magnitude(img);
    const OtsuResult otsu = threshold_otsu(sobel.magnitude, Polarity::Bright);
    return thin(otsu.mask);
}

BinaryMask detect_pores(const GrayImage& img, int open_radius, int min_area) {
    const OtsuResult otsu = threshold_otsu(img, Polarity::Dark);
    BinaryMask opened = otsu.mask.count_foreground() == 0
                            ? otsu.mask
                            : morph(otsu.mask, MorphOp::Open, open_radius);
    auto [labels, count] = connected_components(opened, Connectivity::Four);
    if (count == 0) return opened;
    std::vector<std::int64_t> area(static_cast<std::size_t>(count) + 1, 0);
    for (std::int32_t lab : labels.labels) {
        if (lab > 0) ++area[static_cast<std::size_t>(lab)];
    }
    BinaryMask out(img.width, img.height);
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const std::int32_t lab = labels.labels[i];
        out.data[i] = (lab > 0 && area[static_cast<std::size_t>(lab)] >= min_area) ? 1 : 0;
    }
    return out;
}

namespace {

// Chord directions: 0, 90, 45, -45 degrees (y grows downward).
constexpr int kDirX[4] = {1, 0, 1, 1};
constexpr int kDirY[4] = {0, 1, -1, 1};

struct Ray {
    int steps = 0;
    bool hit_border = false;
};

Ray march(const BinaryMask& stop, int x, int y, int dx, int dy) {
    Ray ray;
    while (true) {
        const int nx = x + dx, ny = y + dy;
        if (!stop.in_bounds(nx, ny)) {
            ray.hit_border = true;
            return ray;
        }
        if (stop.at(nx, ny)) return ray;
        x = nx;
        y = ny;
        ++ray.steps;
    }
}

} // namespace

std::vector<InterceptSample> sample_intercepts(const BinaryMask& stop_mask,
                                               const PsilmConfig& cfg) {
    if (cfg.grid_step < 1) throw InvalidArgument("sample_intercepts: grid_step must be >= 1");
    std::vector<InterceptSample> samples;
    for (int y = 0; y < stop_mask.height; y += cfg.grid_step) {
        for (int x = 0; x < stop_mask.width; x += cfg.grid_step) {
            if (stop_mask.at(x, y)) continue; // points must sit inside grains
            InterceptSample s;
            s.x = x;
            s.y = y;
            double total = 0.0;
            for (int d = 0; d < 4; ++d) {
                const Ray pos = march(stop_mask, x, y, kDirX[d], kDirY[d]);
                const Ray neg = march(stop_mask, x, y, -kDirX[d], -kDirY[d]);
                const double step_len = d < 2 ? 1.0 : std::numbers::sqrt2;
                s.lengths[d] = (pos.steps + neg.steps + 1) * step_len;
                s.border_truncated = s.border_truncated || pos.hit_border || neg.hit_border;
                total += s.lengths[d];
            }
            s.local_radius = total / 4.0 / 2.0 * cfg.microns_per_pixel;
            samples.push_back(s);
        }
    }
    return samples;
}

RgbSegmentation rgb_segmentation(const GrayImage& img, const PsilmConfig& cfg) {
    BinaryMask stop = gb_edge_mask(img);
    if (cfg.exclude_pores) {
        const BinaryMask pores = detect_pores(img, cfg.pore_open_radius, cfg.pore_min_area);
        for (std::size_t i = 0; i < stop.data.size(); ++i) {
            if (pores.data[i]) stop.data[i] = 1;
        }
    }

    RgbSegmentation seg;
    seg.samples = sample_intercepts(stop, cfg);
    seg.rgb = RgbImage(img.width, img.height);

    if (seg.samples.empty()) return seg; // everything stays black

    // Grain regions are 4-connected components of the non-stop pixels;
    // interpolation never crosses a region boundary.
    BinaryMask interior(img.width, img.height);
    for (std::size_t i = 0; i < stop.data.size(); ++i) interior.data[i] = stop.data[i] ? 0 : 1;
    auto [regions, region_count] = connected_components(interior, Connectivity::Four);

    std::vector<std::vector<int>> region_samples(static_cast<std::size_t>(region_count) + 1);
    for (int i = 0; i < static_cast<int>(seg.samples.size()); ++i) {
        const auto& s = seg.samples[static_cast<std::size_t>(i)];
        const std::int32_t reg = regions.at(s.x, s.y);
        if (reg > 0) region_samples[static_cast<std::size_t>(reg)].push_back(i);
    }

    double mean_radius = 0.0;
    for (const auto& s : seg.samples) mean_radius += s.local_radius;
    mean_radius /= static_cast<double>(seg.samples.size());

    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::int32_t reg = regions.at(x, y);
            if (reg <= 0) continue; // stop pixels render black
            const auto& in_region = region_samples[static_cast<std::size_t>(reg)];
            double radius = mean_radius; // sampleless slivers fall back to the global mean
            if (!in_region.empty()) {
                double best = std::numeric_limits<double>::max();
                for (int si : in_region) {
                    const auto& s = seg.samples[static_cast<std::size_t>(si)];
                    const double dx = s.x - x, dy = s.y - y;
                    const double d2 = dx * dx + dy * dy;
                    if (d2 < best) {
                        best = d2;
                        radius = s.local_radius;
                    }
                }
            }
            const auto rgb = jet_color(radius, cfg.colormap_min, cfg.colormap_max);
            seg.rgb.set(x, y, rgb[0], rgb[1], rgb[2]);
        }
    }
    return seg;
}

Histogram grain_histogram(const std::vector<InterceptSample>& samples, int bins, double lo,
                          double hi) {
    if (samples.empty()) throw NoSamples("grain_histogram: no samples");
    if (bins < 1) throw InvalidArgument("grain_histogram: bins must be >= 1");
    if (!(hi > lo)) throw InvalidArgument("grain_histogram: range must be increasing");

    Histogram hist;
    hist.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) {
        hist.bin_edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    }
    hist.frequencies.assign(static_cast<std::size_t>(bins), 0);
    for (const auto& s : samples) {
        int idx = static_cast<int>(std::floor((s.local_radius - lo) / (hi - lo) * bins));
        idx = std::clamp(idx, 0, bins - 1); // out-of-range clamps to the end bins
        ++hist.frequencies[static_cast<std::size_t>(idx)];
    }
    return hist;
}

Histogram grain_histogram(const std::vector<InterceptSample>& samples, int bins) {
    if (samples.empty()) throw NoSamples("grain_histogram: no samples");
    double hi = 0.0;
    for (const auto& s : samples) hi = std::max(hi, s.local_radius);
    if (hi <= 0.0) hi = 1.0;
    return grain_histogram(samples, bins, 0.0, hi);
}

RadiusSummary summarize_radii(const std::vector<InterceptSample>& samples) {
    RadiusSummary sum;
    sum.n = samples.size();
    if (samples.empty()) {
        sum.formatted = "n/a";
        return sum;
    }
    for (const auto& s : samples) sum.mean += s.local_radius;
    sum.mean /= static_cast<double>(samples.size());
    for (const auto& s : samples) {
        sum.stddev += (s.local_radius - sum.mean) * (s.local_radius - sum.mean);
    }
    sum.stddev = std::sqrt(sum.stddev / static_cast<double>(samples.size()));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", sum.mean, sum.stddev);
    sum.formatted = buf;
    return sum;
}

// ---------------------------------------------------------------------------
// Jet colormap
// ---------------------------------------------------------------------------

namespace {

struct JetStop {
    double t;
    double r, g, b;
};

constexpr JetStop kJetStops[] = {
    {0.0, 0, 0, 139},   {0.25, 0, 0, 255},  {0.375, 0, 255, 255}, {0.625, 0, 255, 0},
    {0.75, 255, 255, 0}, {0.875, 255, 0, 0}, {1.0, 139, 0, 0},
};

} // namespace

std::array<std::uint8_t, 3> jet_color(double value, double vmin, double vmax) {
    if (!(vmin < vmax)) throw InvalidArgument("jet_color: vmin must be < vmax");
    const double t = std::clamp((value - vmin) / (vmax - vmin), 0.0, 1.0);
    const int n_stops = static_cast<int>(std::size(kJetStops));
    for (int i = 1; i < n_stops; ++i) {
        if (t <= kJetStops[i].t) {
            const JetStop& a = kJetStops[i - 1];
            const JetStop& b = kJetStops[i];
            const double f = (t - a.t) / (b.t - a.t);
            return {static_cast<std::uint8_t>(std::lround(a.r + (b.r - a.r) * f)),
                    static_cast<std::uint8_t>(std::lround(a.g + (b.g - a.g) * f)),
                    static_cast<std::uint8_t>(std::lround(a.b + (b.b - a.b) * f))};
        }
    }
    return {139, 0, 0};
}

const std::array<std::array<std::uint8_t, 3>, 16>& jet_anchor_colors() {
    static const auto anchors = [] {
        std::array<std::array<std::uint8_t, 3>, 16> a{};
        for (int i = 0; i < 16; ++i) a[static_cast<std::size_t>(i)] = jet_color(i / 15.0, 0.0, 1.0);
        return a;
    }();
    return anchors;
}

// ---------------------------------------------------------------------------
// Histogram CSV
// ---------------------------------------------------------------------------

void write_histogram_csv(const std::string& path, const Histogram& hist) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "bin_lo,bin_hi,freq\n";
    for (std::size_t i = 0; i < hist.frequencies.size(); ++i) {
        out << hist.bin_edges[i] << "," << hist.bin_edges[i + 1] << "," << hist.frequencies[i]
            << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

Histogram read_histogram_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::string line;
    std::getline(in, line); // header
    Histogram hist;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string lo, hi, freq;
        std::getline(row, lo, ',');
        std::getline(row, hi, ',');
        std::getline(row, freq, ',');
        if (first) {
            hist.bin_edges.push_back(std::stod(lo));
            first = false;
        }
        hist.bin_edges.push_back(std::stod(hi));
        hist.frequencies.push_back(static_cast<std::uint64_t>(std::stoull(freq)));
    }
    return hist;
}

} // namespace microchar
