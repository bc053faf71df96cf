#include <microchar/image_io.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <png.h>

namespace microchar {

namespace {

std::string extension(const std::string& path) {
    const auto pos = path.find_last_of('.');
    if (pos == std::string::npos) return "";
    std::string ext = path.substr(pos + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

// --- NetPBM -----------------------------------------------------------------

void skip_pnm_whitespace(std::istream& in) {
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
}

struct PnmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& path) {
    PnmHeader hdr;
    in >> hdr.magic;
    skip_pnm_whitespace(in);
    in >> hdr.width;
    skip_pnm_whitespace(in);
    in >> hdr.height;
    skip_pnm_whitespace(in);
    in >> hdr.maxval;
    if (!in || hdr.width < 1 || hdr.height < 1 || hdr.maxval != 255) {
        throw UnreadableImage("bad NetPBM header: " + path);
    }
    in.get(); // single whitespace before raster
    return hdr;
}

GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableImage("cannot open " + path);
    const PnmHeader hdr = read_pnm_header(in, path);
    if (hdr.magic != "P5") throw UnreadableImage("not a P5 PGM: " + path);
    GrayImage img(hdr.width, hdr.height);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!in) throw UnreadableImage("truncated PGM: " + path);
    return img;
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableImage("cannot open " + path);
    const PnmHeader hdr = read_pnm_header(in, path);
    if (hdr.magic != "P6") throw UnreadableImage("not a P6 PPM: " + path);
    RgbImage img(hdr.width, hdr.height);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!in) throw UnreadableImage("truncated PPM: " + path);
    return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw IoError("write failed: " + path);
}

void write_ppm(const std::string& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw IoError("write failed: " + path);
}

// --- PNG --------------------------------------------------------------------

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads any PNG and normalizes to 8-bit gray (want_rgb=false) or RGB.
std::vector<std::uint8_t> read_png_pixels(const std::string& path, bool want_rgb,
                                          int& width, int& height) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw UnreadableImage("cannot open " + path);

    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw UnreadableImage("not a PNG: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnreadableImage("libpng init failed: " + path);
    }
    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnreadableImage("corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if ((color_type & PNG_COLOR_MASK_COLOR) == 0 && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (want_rgb) {
        if ((color_type & PNG_COLOR_MASK_COLOR) == 0) png_set_gray_to_rgb(png);
    } else {
        if (color_type & PNG_COLOR_MASK_COLOR) {
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        }
    }
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int channels = want_rgb ? 3 : 1;
    pixels.resize(static_cast<std::size_t>(width) * height * channels);
    rows.resize(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return pixels;
}

void write_png_pixels(const std::string& path, const std::uint8_t* pixels, int width,
                      int height, bool rgb) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed: " + path);
    }
    std::vector<png_bytep> rows(height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 rgb ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    const int channels = rgb ? 3 : 1;
    for (int y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * width * channels);
    }
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

// ---------------------------------------------------------------------------

GrayImage read_gray(const std::string& path) {
    const std::string ext = extension(path);
    if (ext == "pgm") return read_pgm(path);
    if (ext == "png") {
        int w = 0, h = 0;
        auto pixels = read_png_pixels(path, false, w, h);
        GrayImage img(w, h);
        img.data = std::move(pixels);
        return img;
    }
    if (ext == "ppm") {
        // Luma conversion (integer BT.601).
        const RgbImage rgb = read_ppm(path);
        GrayImage img(rgb.width, rgb.height);
        for (int y = 0; y < rgb.height; ++y) {
            for (int x = 0; x < rgb.width; ++x) {
                const auto* p = rgb.px(x, y);
                img.at(x, y) = static_cast<std::uint8_t>((299 * p[0] + 587 * p[1] + 114 * p[2]) / 1000);
            }
        }
        return img;
    }
    throw UnreadableImage("unsupported image extension: " + path);
}

RgbImage read_rgb(const std::string& path) {
    const std::string ext = extension(path);
    if (ext == "ppm") return read_ppm(path);
    if (ext == "png") {
        int w = 0, h = 0;
        auto pixels = read_png_pixels(path, true, w, h);
        RgbImage img(w, h);
        img.data = std::move(pixels);
        return img;
    }
    if (ext == "pgm") {
        const GrayImage g = read_pgm(path);
        RgbImage img(g.width, g.height);
        for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
                const std::uint8_t v = g.at(x, y);
                img.set(x, y, v, v, v);
            }
        }
        return img;
    }
    throw UnreadableImage("unsupported image extension: " + path);
}

void write_gray(const std::string& path, const GrayImage& img) {
    const std::string ext = extension(path);
    if (ext == "pgm") return write_pgm(path, img);
    if (ext == "png") return write_png_pixels(path, img.data.data(), img.width, img.height, false);
    throw IoError("unsupported gray image extension: " + path);
}

void write_rgb(const std::string& path, const RgbImage& img) {
    const std::string ext = extension(path);
    if (ext == "ppm") return write_ppm(path, img);
    if (ext == "png") return write_png_pixels(path, img.data.data(), img.width, img.height, true);
    throw IoError("unsupported rgb image extension: " + path);
}

GrayImage mask_to_gray(const BinaryMask& mask) {
    GrayImage img(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        img.data[i] = mask.data[i] ? 0 : 255;
    }
    return img;
}

BinaryMask gray_to_mask(const GrayImage& img) {
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        mask.data[i] = img.data[i] < 128 ? 1 : 0;
    }
    return mask;
}

BinaryMask read_mask(const std::string& path) { return gray_to_mask(read_gray(path)); }

void write_mask(const std::string& path, const BinaryMask& mask) {
    write_gray(path, mask_to_gray(mask));
}

} // namespace microchar
