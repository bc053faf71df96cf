#include <doctest.h>

#include <filesystem>

#include <microchar/image_io.hpp>

#include "oracles.hpp"

using namespace microchar;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "microchar_io_tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

} // namespace

TEST_SUITE("image_io") {
    TEST_CASE("PGM round trip") {
        const GrayImage img = oracles::random_gray(13, 7, 42);
        const std::string path = tmp_path("roundtrip.pgm");
        write_gray(path, img);
        const GrayImage back = read_gray(path);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.data == img.data);
    }

    TEST_CASE("PNG gray round trip") {
        const GrayImage img = oracles::random_gray(21, 17, 43);
        const std::string path = tmp_path("roundtrip.png");
        write_gray(path, img);
        const GrayImage back = read_gray(path);
        CHECK(back.data == img.data);
    }

    TEST_CASE("PPM and PNG rgb round trip") {
        RgbImage img(9, 5);
        Rng rng(7);
        for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.next_below(256));
        for (const char* name : {"roundtrip_rgb.ppm", "roundtrip_rgb.png"}) {
            const std::string path = tmp_path(name);
            write_rgb(path, img);
            const RgbImage back = read_rgb(path);
            CHECK(back.data == img.data);
        }
    }

    TEST_CASE("mask serialization uses the inverted convention") {
        BinaryMask mask(4, 3);
        mask.set(1, 1, true);
        mask.set(3, 2, true);
        const std::string path = tmp_path("mask.pgm");
        write_mask(path, mask);
        const GrayImage raw = read_gray(path);
        CHECK(raw.at(1, 1) == 0);   // defect pixels are black
        CHECK(raw.at(0, 0) == 255); // background is white
        const BinaryMask back = read_mask(path);
        CHECK(back.data == mask.data);
    }

    TEST_CASE("unreadable input throws") {
        CHECK_THROWS_AS(read_gray(tmp_path("missing_file.pgm")), UnreadableImage);
        CHECK_THROWS_AS(read_gray(tmp_path("bad.xyz")), UnreadableImage);
    }
}
