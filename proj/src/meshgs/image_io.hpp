// Copyright 2026 The MeshGS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "meshgs/types.hpp"

namespace meshgs {

/// Linear RGB image, row-major, three doubles per pixel in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(3 * static_cast<std::size_t>(w) * h, 0.0) {}
};

/// Reads 8/16-bit gray, RGB or RGBA PNG; alpha is composited over `background`.
Image read_png(const std::filesystem::path& path, const Vec3& background = Vec3::Zero());
/// 8-bit RGB. `compression` is the zlib level (0-9).
std::vector<std::uint8_t> encode_png(int width, int height, std::span<const double> rgb,
                                     int compression = 6);
void write_png(const std::filesystem::path& path, int width, int height,
               std::span<const double> rgb);

/// Binary P6, 8-bit.
void write_ppm(const std::filesystem::path& path, int width, int height,
               std::span<const double> rgb);
Image read_ppm(const std::filesystem::path& path);

std::uint8_t to_byte(double v);

}  // namespace meshgs
