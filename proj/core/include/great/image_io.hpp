// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "great/types.hpp"

namespace great::io {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;

    uint8_t& at(int y, int x, int c) { return rgb[static_cast<size_t>((y * width + x) * 3 + c)]; }
    uint8_t at(int y, int x, int c) const { return rgb[static_cast<size_t>((y * width + x) * 3 + c)]; }
};

// PPM (P6 binary, P3 ascii accepted on read; P6 written).
Raster read_ppm(const std::filesystem::path& path);
void write_ppm(const Raster& img, const std::filesystem::path& path);

// Decodes, converts to [0,1] doubles and resizes to target_size x target_size
// with bilinear resampling. Source must be at least 32x32.
InteractionImage load_interaction_image(const std::filesystem::path& path, const std::string& id,
                                        const std::string& object_category,
                                        const std::string& affordance_category, int target_size);

// 3-channel bilinear resize on the double representation.
InteractionImage resize_bilinear(const InteractionImage& src, int out_h, int out_w);

// Minimal PNG encoder (8-bit RGB, stored deflate blocks). Valid but
// uncompressed; used only to attach images to HTTP chat requests.
std::vector<uint8_t> encode_png(const Raster& img);

std::string base64_encode(const std::vector<uint8_t>& data);

}  // namespace great::io
