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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "meshgs/camera.hpp"
#include "meshgs/gaussian_model.hpp"

namespace meshgs {

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  /// Contributions outside the ellipse (p - mu')^T Sigma'^-1 (p - mu') <=
  /// cutoff_sigma^2 are dropped.
  double cutoff_sigma = 3.0;
  double near_plane = 0.01;
  /// Added to the projected covariance (pixels^2) before inversion.
  double dilation = 0.3;
  double min_transmittance = 1.0 / 255.0;
  double max_condition = 1e12;
  /// Only the first sh_coeff_count(active_sh_degree) bands are evaluated;
  /// negative means the cloud's full degree.
  int active_sh_degree = -1;
};

inline constexpr int kTileSize = 16;

/// A Gaussian in world space, ready for projection. Both the rest pose and a
/// deformed pose produce these; `sh_rotation` re-orients the SH lookup
/// (colour is evaluated at sh_rotation^T * d).
struct Splat {
  Vec3 mean;
  Mat3 cov;
  double opacity = 0.0;
  std::span<const Vec3> sh;
  Mat3 sh_rotation = Mat3::Identity();
};

/// Splats of the undeformed cloud. Throws Error(kNumeric) naming the first
/// Gaussian with a non-finite parameter.
std::vector<Splat> rest_splats(const GaussianCloud& cloud, const TriangleMesh& mesh);

struct ProjectedGaussian {
  std::uint32_t index = 0;  // into the splat list
  Vec2 mean2d;
  Mat2 cov2d;  // J W Sigma W^T J^T, before dilation
  Mat2 conic;  // inverse of the dilated cov2d
  double depth = 0.0;
  Vec3 color;
  double opacity = 0.0;
  /// Pixel AABB of the cutoff ellipse, inclusive, clipped to the image.
  std::array<int, 4> rect{};  // x0, y0, x1, y1
  // Kept for the backward pass.
  Vec3 cam_point;
  Vec3 sh_dir;  // unit direction the SH was evaluated at (after re-orientation)
  std::array<bool, 3> color_clamped{};
};

/// Screen-space projection of one splat; nullopt when culled (behind the
/// near plane, ill-conditioned footprint, or entirely off-screen).
std::optional<ProjectedGaussian> project(const Splat& splat, int sh_degree, const Camera& camera,
                                         const RenderOptions& options = {});
std::optional<ProjectedGaussian> project(const BoundGaussian& g, int sh_degree,
                                         const TriangleMesh& mesh, const Camera& camera,
                                         const RenderOptions& options = {});

std::vector<ProjectedGaussian> project_all(std::span<const Splat> splats, int sh_degree,
                                           const Camera& camera, const RenderOptions& options);

struct TileBins {
  int tiles_x = 0;
  int tiles_y = 0;
  /// Indices into the projected list, per tile (row-major), depth ascending.
  std::vector<std::vector<std::uint32_t>> lists;

  const std::vector<std::uint32_t>& at(int tx, int ty) const { return lists[ty * tiles_x + tx]; }
};

/// Assigns every projected Gaussian to each 16x16 tile its rect overlaps.
/// Ties in depth are broken by splat index so the order is total.
TileBins tile_bin(std::span<const ProjectedGaussian> projected, int width, int height);

struct Framebuffer {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;    // row-major, 3 per pixel, in [0, 1]
  std::vector<double> alpha;  // 1 - final transmittance

  Framebuffer() = default;
  Framebuffer(int w, int h) : width(w), height(h), rgb(3 * w * h, 0.0), alpha(w * h, 0.0) {}
  Vec3 pixel(int x, int y) const {
    const std::size_t i = 3 * (static_cast<std::size_t>(y) * width + x);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

/// Per-pixel bookkeeping the backward pass needs.
struct RasterRecord {
  std::vector<ProjectedGaussian> projected;
  TileBins bins;
  /// Number of tile-list entries visited per pixel (including the one that
  /// pushed transmittance below the cutoff).
  std::vector<std::uint32_t> visited;
};

/// Front-to-back compositing over the tile lists:
///   C = sum_i c_i a_i prod_{j<i} (1 - a_j) + T_final * background,
///   a_i = sigma_i exp(-1/2 (p - mu'_i)^T Sigma'^-1_i (p - mu'_i)).
/// Pixel (x, y) is sampled at integer coordinates.
Framebuffer rasterize(std::span<const ProjectedGaussian> projected, const TileBins& bins,
                      int width, int height, const RenderOptions& options,
                      std::vector<std::uint32_t>* visited = nullptr);

Framebuffer render(std::span<const Splat> splats, int sh_degree, const Camera& camera,
                   const RenderOptions& options = {}, RasterRecord* record = nullptr);
Framebuffer render(const GaussianCloud& cloud, const TriangleMesh& mesh, const Camera& camera,
                   const RenderOptions& options = {});

/// Gradient with respect to one projected Gaussian's screen-space quantities.
struct ProjectedGrad {
  Vec2 mean2d = Vec2::Zero();
  Mat2 conic = Mat2::Zero();  // full symmetric matrix gradient
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
};

/// Reverse-mode pass of rasterize(). `d_rgb` is dL/d(framebuffer rgb).
/// Returns one entry per projected Gaussian (same order as record.projected).
std::vector<ProjectedGrad> rasterize_backward(const RasterRecord& record, int width, int height,
                                              std::span<const double> d_rgb,
                                              const RenderOptions& options);

/// Gradient with respect to one world-space splat.
struct SplatGrad {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();
  double opacity = 0.0;
  std::vector<Vec3> sh;
};

/// Chains a ProjectedGrad through SH evaluation and the EWA projection.
SplatGrad project_backward(const Splat& splat, const ProjectedGaussian& p,
                           const ProjectedGrad& grad, int sh_degree, const Camera& camera,
                           const RenderOptions& options);

}  // namespace meshgs
