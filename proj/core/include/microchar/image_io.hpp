#pragma once

#include <string>

#include <microchar/image.hpp>

namespace microchar {

// Grayscale and RGB rasters are stored as PNG or NetPBM (PGM P5 / PPM P6),
// chosen by file extension (.png, .pgm, .ppm). Binary masks serialize as PGM
// with 0 = defect and 255 = background (the inverted rendering convention).

GrayImage read_gray(const std::string& path);
RgbImage read_rgb(const std::string& path);

void write_gray(const std::string& path, const GrayImage& img);
void write_rgb(const std::string& path, const RgbImage& img);

BinaryMask read_mask(const std::string& path);
void write_mask(const std::string& path, const BinaryMask& mask);

/// Render a mask to gray using the inverted convention (defect=0, background=255).
GrayImage mask_to_gray(const BinaryMask& mask);
BinaryMask gray_to_mask(const GrayImage& img);

} // namespace microchar
