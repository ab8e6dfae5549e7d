// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "cxrgaze/grid.hpp"

namespace cxrgaze::png {

struct GrayImage {
  Grid<std::uint16_t> pixels;
  int bit_depth = 16;  // 8 or 16
};

// Reads an 8- or 16-bit grayscale PNG. Throws IoError / ValidationError.
GrayImage read_gray(const std::filesystem::path& path);

void write_gray16(const std::filesystem::path& path, const Grid<std::uint16_t>& pixels);

}  // namespace cxrgaze::png
