// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "great/error.hpp"
#include "great/image_io.hpp"
#include "testing_util.hpp"

using namespace great;
using namespace great::io;
namespace fs = std::filesystem;

namespace {

uint32_t be32(const std::vector<uint8_t>& d, size_t off) {
    return (uint32_t(d[off]) << 24) | (uint32_t(d[off + 1]) << 16) | (uint32_t(d[off + 2]) << 8) |
           uint32_t(d[off + 3]);
}

// independent CRC-32 (reflected, poly 0xedb88320), bit by bit
uint32_t crc32_ref(const uint8_t* p, size_t n) {
    uint32_t crc = 0xffffffffu;
    for (size_t i = 0; i < n; ++i) {
        crc ^= p[i];
        for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
    }
    return crc ^ 0xffffffffu;
}

// inflate for stored (type 0) deflate blocks only
std::vector<uint8_t> inflate_stored(const std::vector<uint8_t>& z) {
    REQUIRE(z.size() > 6);
    std::vector<uint8_t> out;
    size_t pos = 2;  // skip zlib header
    while (true) {
        REQUIRE(pos + 5 <= z.size());
        const uint8_t header = z[pos];
        REQUIRE((header >> 1) == 0);  // stored, possibly final
        const size_t len = z[pos + 1] | (size_t(z[pos + 2]) << 8);
        const size_t nlen = z[pos + 3] | (size_t(z[pos + 4]) << 8);
        REQUIRE(((len ^ nlen) & 0xffff) == 0xffff);
        pos += 5;
        out.insert(out.end(), z.begin() + static_cast<std::ptrdiff_t>(pos),
                   z.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        if (header & 1) break;
    }
    // adler32 over the decompressed stream
    uint32_t a = 1, b = 0;
    for (uint8_t byte : out) {
        a = (a + byte) % 65521;
        b = (b + a) % 65521;
    }
    REQUIRE(pos + 4 <= z.size());
    const uint32_t stored = (uint32_t(z[pos]) << 24) | (uint32_t(z[pos + 1]) << 16) |
                            (uint32_t(z[pos + 2]) << 8) | uint32_t(z[pos + 3]);
    CHECK(stored == ((b << 16) | a));
    return out;
}

Raster gradient_raster(int w, int h) {
    Raster img;
    img.width = w;
    img.height = h;
    img.rgb.resize(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = static_cast<uint8_t>((x * 255) / std::max(1, w - 1));
            img.at(y, x, 1) = static_cast<uint8_t>((y * 255) / std::max(1, h - 1));
            img.at(y, x, 2) = static_cast<uint8_t>((x + y) % 256);
        }
    }
    return img;
}

}  // namespace

TEST_CASE("ppm round trip preserves every byte") {
    const fs::path dir = testing::temp_dir("ppm");
    const Raster img = gradient_raster(37, 23);
    write_ppm(img, dir / "g.ppm");
    const Raster back = read_ppm(dir / "g.ppm");
    CHECK(back.width == 37);
    CHECK(back.height == 23);
    CHECK(back.rgb == img.rgb);
}

TEST_CASE("ascii P3 images read like binary ones") {
    const fs::path dir = testing::temp_dir("ppm_ascii");
    {
        std::ofstream f(dir / "a.ppm");
        f << "P3\n# comment line\n2 2\n255\n";
        f << "255 0 0  0 255 0\n0 0 255  10 20 30\n";
    }
    const Raster img = read_ppm(dir / "a.ppm");
    CHECK(img.width == 2);
    CHECK(img.at(0, 0, 0) == 255);
    CHECK(img.at(0, 1, 1) == 255);
    CHECK(img.at(1, 1, 2) == 30);
}

TEST_CASE("malformed ppm files are rejected") {
    const fs::path dir = testing::temp_dir("ppm_bad");
    std::ofstream(dir / "bad1.ppm") << "P5\n2 2\n255\n";
    CHECK_THROWS_AS(static_cast<void>(read_ppm(dir / "bad1.ppm")), Error);
    std::ofstream(dir / "bad2.ppm") << "P6\n4 4\n255\nxx";  // truncated pixels
    CHECK_THROWS_AS(static_cast<void>(read_ppm(dir / "bad2.ppm")), Error);
    CHECK_THROWS_AS(static_cast<void>(read_ppm(dir / "absent.ppm")), Error);
}

TEST_CASE("interaction image loading validates size and normalizes range") {
    const fs::path dir = testing::temp_dir("imload");
    write_ppm(gradient_raster(48, 48), dir / "img.ppm");
    const InteractionImage img =
        load_interaction_image(dir / "img.ppm", "img", "mug", "grasp", 64);
    CHECK(img.height == 64);
    CHECK(img.width == 64);
    for (const auto& ch : img.pixels) {
        for (double v : ch) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    write_ppm(gradient_raster(16, 16), dir / "tiny.ppm");
    CHECK_THROWS_AS(
        static_cast<void>(load_interaction_image(dir / "tiny.ppm", "t", "mug", "grasp", 64)), Error);
}

TEST_CASE("bilinear resize maps constants to constants and interpolates linearly") {
    InteractionImage src;
    src.height = src.width = 8;
    for (auto& ch : src.pixels) ch.assign(64, 0.37);
    const InteractionImage big = io::resize_bilinear(src, 32, 32);
    for (const auto& ch : big.pixels) {
        for (double v : ch) CHECK(v == doctest::Approx(0.37));
    }

    // horizontal ramp stays monotone after upscale
    InteractionImage ramp;
    ramp.height = ramp.width = 8;
    for (auto& ch : ramp.pixels) {
        ch.resize(64);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) ch[static_cast<size_t>(y * 8 + x)] = x / 7.0;
    }
    const InteractionImage up = io::resize_bilinear(ramp, 16, 16);
    for (int x = 1; x < 16; ++x) {
        CHECK(up.pixels[0][static_cast<size_t>(x)] >= up.pixels[0][static_cast<size_t>(x - 1)] - 1e-12);
    }
}

TEST_CASE("png encoder emits a structurally valid image") {
    const Raster img = gradient_raster(21, 13);
    const std::vector<uint8_t> png = encode_png(img);

    const uint8_t magic[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    REQUIRE(png.size() > 8);
    CHECK(std::equal(magic, magic + 8, png.begin()));

    // walk the chunks, verifying CRCs with an independent bitwise CRC-32
    size_t pos = 8;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 12 <= png.size()) {
        const uint32_t len = be32(png, pos);
        const std::string type(png.begin() + static_cast<std::ptrdiff_t>(pos) + 4,
                               png.begin() + static_cast<std::ptrdiff_t>(pos) + 8);
        const uint32_t crc = be32(png, pos + 8 + len);
        CHECK(crc == crc32_ref(png.data() + pos + 4, len + 4));
        if (type == "IHDR") {
            saw_ihdr = true;
            CHECK(be32(png, pos + 8) == 21);       // width
            CHECK(be32(png, pos + 12) == 13);      // height
            CHECK(png[pos + 16] == 8);             // bit depth
            CHECK(png[pos + 17] == 2);             // truecolor
        } else if (type == "IDAT") {
            idat.insert(idat.end(), png.begin() + static_cast<std::ptrdiff_t>(pos) + 8,
                        png.begin() + static_cast<std::ptrdiff_t>(pos) + 8 + len);
        } else if (type == "IEND") {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    CHECK(saw_ihdr);
    CHECK(saw_iend);
    CHECK(pos == png.size());

    // decompress and compare scanlines to the source pixels
    const std::vector<uint8_t> raw = inflate_stored(idat);
    REQUIRE(raw.size() == static_cast<size_t>(13) * (1 + 21 * 3));
    for (int y = 0; y < 13; ++y) {
        const size_t row = static_cast<size_t>(y) * (1 + 21 * 3);
        CHECK(raw[row] == 0);  // filter byte
        for (int x = 0; x < 21; ++x) {
            for (int c = 0; c < 3; ++c) {
                CHECK(raw[row + 1 + static_cast<size_t>(x * 3 + c)] == img.at(y, x, c));
            }
        }
    }
}

TEST_CASE("base64 known vectors") {
    auto enc = [](const std::string& s) {
        return base64_encode(std::vector<uint8_t>(s.begin(), s.end()));
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foobar") == "Zm9vYmFy");
    CHECK(enc("Man") == "TWFu");
}
