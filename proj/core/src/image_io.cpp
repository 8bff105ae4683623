// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "great/error.hpp"

namespace great::io {

namespace {

// skips whitespace and '#' comments between PPM header tokens
std::string next_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

int parse_dim(const std::string& tok, const char* what) {
    try {
        const int v = std::stoi(tok);
        if (v <= 0) throw Error(ErrorKind::format, std::string("ppm: nonpositive ") + what);
        return v;
    } catch (const Error&) {
        throw;
    } catch (...) {
        throw Error(ErrorKind::parse, std::string("ppm: bad ") + what + " token '" + tok + "'");
    }
}

}  // namespace

Raster read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open image file: " + path.string());
    const std::string magic = next_token(in);
    if (magic != "P6" && magic != "P3") {
        throw Error(ErrorKind::format, "unsupported image format (expected PPM P6/P3): " + path.string());
    }
    Raster img;
    img.width = parse_dim(next_token(in), "width");
    img.height = parse_dim(next_token(in), "height");
    const int maxval = parse_dim(next_token(in), "maxval");
    if (maxval != 255) throw Error(ErrorKind::format, "ppm: only maxval 255 supported: " + path.string());
    const size_t n = static_cast<size_t>(img.width) * img.height * 3;
    img.rgb.resize(n);
    if (magic == "P6") {
        in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in.gcount()) != n) {
            throw Error(ErrorKind::format, "ppm: truncated pixel data: " + path.string());
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            const std::string tok = next_token(in);
            if (tok.empty()) throw Error(ErrorKind::format, "ppm: truncated pixel data: " + path.string());
            int v = 0;
            try {
                v = std::stoi(tok);
            } catch (...) {
                throw Error(ErrorKind::parse, "ppm: bad pixel token '" + tok + "': " + path.string());
            }
            if (v < 0 || v > 255) {
                throw Error(ErrorKind::range, "ppm: pixel value out of range: " + path.string());
            }
            img.rgb[i] = static_cast<uint8_t>(v);
        }
    }
    return img;
}

void write_ppm(const Raster& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write image file: " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw Error(ErrorKind::io, "short write: " + path.string());
}

InteractionImage resize_bilinear(const InteractionImage& src, int out_h, int out_w) {
    InteractionImage dst;
    dst.id = src.id;
    dst.object_category = src.object_category;
    dst.affordance_category = src.affordance_category;
    dst.height = out_h;
    dst.width = out_w;
    for (auto& ch : dst.pixels) ch.assign(static_cast<size_t>(out_h) * out_w, 0.0);
    const double sy = static_cast<double>(src.height) / out_h;
    const double sx = static_cast<double>(src.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const auto& s = src.pixels[static_cast<size_t>(c)];
                const double top = (1.0 - wx) * s[static_cast<size_t>(y0 * src.width + x0)] +
                                   wx * s[static_cast<size_t>(y0 * src.width + x1)];
                const double bot = (1.0 - wx) * s[static_cast<size_t>(y1 * src.width + x0)] +
                                   wx * s[static_cast<size_t>(y1 * src.width + x1)];
                dst.pixels[static_cast<size_t>(c)][static_cast<size_t>(y * out_w + x)] =
                    (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return dst;
}

InteractionImage load_interaction_image(const std::filesystem::path& path, const std::string& id,
                                        const std::string& object_category,
                                        const std::string& affordance_category, int target_size) {
    const Raster raw = read_ppm(path);
    if (raw.width < 32 || raw.height < 32) {
        throw Error(ErrorKind::validation,
                    "image smaller than 32x32: " + path.string() + " (" + std::to_string(raw.width) +
                        "x" + std::to_string(raw.height) + ")");
    }
    InteractionImage img;
    img.id = id;
    img.object_category = object_category;
    img.affordance_category = affordance_category;
    img.height = raw.height;
    img.width = raw.width;
    for (int c = 0; c < 3; ++c) {
        auto& ch = img.pixels[static_cast<size_t>(c)];
        ch.resize(static_cast<size_t>(raw.width) * raw.height);
        for (int y = 0; y < raw.height; ++y) {
            for (int x = 0; x < raw.width; ++x) {
                ch[static_cast<size_t>(y * raw.width + x)] = raw.at(y, x, c) / 255.0;
            }
        }
    }
    if (img.height != target_size || img.width != target_size) {
        img = resize_bilinear(img, target_size, target_size);
    }
    return img;
}

// ---- PNG encoding (stored deflate; no external compressor) ----

namespace {

uint32_t crc32_table_entry(uint32_t n) {
    for (int k = 0; k < 8; ++k) n = (n & 1) ? 0xedb88320u ^ (n >> 1) : n >> 1;
    return n;
}

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0xffffffffu) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) table[i] = crc32_table_entry(i);
        init = true;
    }
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, crc32(body.data(), body.size()) ^ 0xffffffffu);
}

}  // namespace

std::vector<uint8_t> encode_png(const Raster& img) {
    // raw scanlines, filter byte 0 per row
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const uint8_t* row = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.width) * 3);
    }

    // zlib stream with stored (uncompressed) deflate blocks
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t pos = 0;
    while (pos < raw.size()) {
        const size_t block = std::min<size_t>(65535, raw.size() - pos);
        const bool final = pos + block == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<uint8_t>(block & 0xff));
        z.push_back(static_cast<uint8_t>(block >> 8));
        z.push_back(static_cast<uint8_t>(~block & 0xff));
        z.push_back(static_cast<uint8_t>((~block >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                 raw.begin() + static_cast<std::ptrdiff_t>(pos + block));
        pos += block;
    }
    uint32_t a = 1, b = 0;
    for (uint8_t byte : raw) {
        a = (a + byte) % 65521;
        b = (b + a) % 65521;
    }
    put_u32(z, (b << 16) | a);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", z);
    put_chunk(out, "IEND", {});
    return out;
}

std::string base64_encode(const std::vector<uint8_t>& data) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        const uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
    }
    if (i + 1 == data.size()) {
        const uint32_t v = data[i] << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == data.size()) {
        const uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

}  // namespace great::io
