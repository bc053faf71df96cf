#include <microchar/image.hpp>

#include <algorithm>

namespace microchar {

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw InvalidArgument("GrayImage: width and height must be >= 1");
}

RgbImage::RgbImage(int w, int h)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {
    if (w < 1 || h < 1) throw InvalidArgument("RgbImage: width and height must be >= 1");
}

BinaryMask::BinaryMask(int w, int h, bool fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {
    if (w < 1 || h < 1) throw InvalidArgument("BinaryMask: width and height must be >= 1");
}

std::size_t BinaryMask::count_foreground() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

LabelMap::LabelMap(int w, int h)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {
    if (w < 1 || h < 1) throw InvalidArgument("LabelMap: width and height must be >= 1");
}

std::int32_t LabelMap::max_label() const {
    std::int32_t m = 0;
    for (std::int32_t v : labels) m = std::max(m, v);
    return m;
}

DistanceMap::DistanceMap(int w, int h)
    : width(w), height(h), dist(static_cast<std::size_t>(w) * h, 0) {
    if (w < 1 || h < 1) throw InvalidArgument("DistanceMap: width and height must be >= 1");
}

} // namespace microchar
