#pragma once

#include <cstdint>
#include <vector>

#include <microchar/errors.hpp>

namespace microchar {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// 24-bit RGB raster, row-major (r,g,b) triples.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data; // 3 bytes per pixel

    RgbImage() = default;
    RgbImage(int w, int h);

    std::uint8_t* px(int x, int y) { return data.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    const std::uint8_t* px(int x, int y) const {
        return data.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = px(x, y);
        p[0] = r; p[1] = g; p[2] = b;
    }
};

/// Binary raster; true (1) marks defect / foreground pixels.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data; // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false);

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count_foreground() const;
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Integer label raster; 0 is background, labels 1..K are regions.
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> labels;

    LabelMap() = default;
    LabelMap(int w, int h);

    std::int32_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t max_label() const;
};

/// City-block (L1) distance raster: dist(p) = 0 iff p is background.
struct DistanceMap {
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> dist;

    DistanceMap() = default;
    DistanceMap(int w, int h);

    std::int32_t& at(int x, int y) { return dist[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t at(int x, int y) const { return dist[static_cast<std::size_t>(y) * width + x]; }
};

} // namespace microchar
