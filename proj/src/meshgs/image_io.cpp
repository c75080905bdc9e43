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

#include "meshgs/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "meshgs/error.hpp"

namespace meshgs {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image read_png(const std::filesystem::path& path, const Vec3& background) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    const bool missing = !std::filesystem::exists(path);
    throw Error(missing ? ErrorCode::kIo : ErrorCode::kParse,
                "cannot read PNG " + path.string() + ": " + msg);
  }
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorCode::kParse, "cannot decode PNG " + path.string() + ": " + msg);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pixels[4 * i + 3] / 255.0;
    for (int c = 0; c < 3; ++c) {
      out.rgb[3 * i + c] = a * (pixels[4 * i + c] / 255.0) + (1.0 - a) * background[c];
    }
  }
  return out;
}

namespace {

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

// Kept free of objects with destructors: libpng reports errors by longjmp.
bool encode_rows(std::vector<std::uint8_t>* out, const std::uint8_t* bytes, int width, int height,
                 int compression) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, write_to_vector, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, compression);
  if (compression <= 2) png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<std::uint8_t*>(bytes + 3 * static_cast<std::size_t>(y) * width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(int width, int height, std::span<const double> rgb,
                                     int compression) {
  std::vector<std::uint8_t> bytes(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) bytes[i] = to_byte(rgb[i]);
  std::vector<std::uint8_t> out;
  if (!encode_rows(&out, bytes.data(), width, height, compression)) {
    throw Error(ErrorCode::kInternal, "PNG encoding failed");
  }
  return out;
}

void write_png(const std::filesystem::path& path, int width, int height,
               std::span<const double> rgb) {
  const std::vector<std::uint8_t> bytes = encode_png(width, height, rgb);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write PNG " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing PNG " + path.string());
}

void write_ppm(const std::filesystem::path& path, int width, int height,
               std::span<const double> rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write PPM " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  std::vector<char> bytes(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) bytes[i] = static_cast<char>(to_byte(rgb[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing PPM " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open PPM " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::kParse, "unsupported PPM header in " + path.string());
  }
  in.get();
  Image out(w, h);
  std::vector<unsigned char> bytes(out.rgb.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw Error(ErrorCode::kParse, "truncated PPM " + path.string());
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) out.rgb[i] = bytes[i] / 255.0;
  return out;
}

}  // namespace meshgs
