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

#include "meshgs/renderer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "meshgs/error.hpp"

namespace meshgs {
namespace {

int effective_degree(int sh_degree, const RenderOptions& options) {
  return options.active_sh_degree < 0 ? sh_degree : std::min(sh_degree, options.active_sh_degree);
}

Mat23 projection_jacobian(const Camera& cam, const Vec3& t) {
  const double inv_z = 1.0 / t.z();
  const double inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z2,  //
      0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z2;
  return j;
}

// Flat copy of what the compositing loop touches, for locality.
struct RasterItem {
  double mx, my;
  double ca, cb, cc;
  double opacity;
  double r, g, b;
};

std::vector<RasterItem> raster_items(std::span<const ProjectedGaussian> projected) {
  std::vector<RasterItem> items(projected.size());
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const ProjectedGaussian& p = projected[i];
    items[i] = {p.mean2d.x(), p.mean2d.y(), p.conic(0, 0), p.conic(0, 1), p.conic(1, 1),
                p.opacity,    p.color.x(),  p.color.y(),   p.color.z()};
  }
  return items;
}

inline double gaussian_power(const RasterItem& it, double dx, double dy) {
  return -0.5 * (it.ca * dx * dx + it.cc * dy * dy) - it.cb * dx * dy;
}

}  // namespace

std::vector<Splat> rest_splats(const GaussianCloud& cloud, const TriangleMesh& mesh) {
  validate_cloud(cloud, mesh);
  std::vector<Splat> splats;
  splats.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    bool finite = g.bary_logits.allFinite() && std::isfinite(g.tau_logit) &&
                  g.log_scale.allFinite() && g.rotation.allFinite() && g.rotation.norm() > 0.0 &&
                  std::isfinite(g.opacity_logit);
    for (const Vec3& c : g.sh) finite = finite && c.allFinite();
    if (!finite) {
      throw Error(ErrorCode::kNumeric, "gaussian " + std::to_string(i) + " has a non-finite parameter");
    }
    Splat s;
    s.mean = world_position(g, mesh);
    s.cov = covariance(g);
    s.opacity = opacity(g);
    s.sh = g.sh;
    splats.push_back(s);
  }
  return splats;
}

std::optional<ProjectedGaussian> project(const Splat& splat, int sh_degree, const Camera& camera,
                                         const RenderOptions& options) {
  const Vec3 t = camera.to_camera(splat.mean);
  if (!(t.z() > options.near_plane)) return std::nullopt;

  const Mat23 j = projection_jacobian(camera, t);
  const Mat3 cam_cov = camera.rotation * splat.cov * camera.rotation.transpose();
  Mat2 cov2d = j * cam_cov * j.transpose();
  cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
  const Mat2 dilated = cov2d + options.dilation * Mat2::Identity();
  const double det = dilated.determinant();
  if (!(det > 0.0)) return std::nullopt;
  const double mid = 0.5 * dilated.trace();
  const double disc = std::sqrt(std::max(mid * mid - det, 0.0));
  const double lambda_max = mid + disc;
  const double lambda_min = det / lambda_max;
  if (!(lambda_min > 0.0) || lambda_max / lambda_min > options.max_condition) return std::nullopt;

  ProjectedGaussian p;
  p.mean2d = {camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy};
  p.cov2d = cov2d;
  p.conic << dilated(1, 1) / det, -dilated(0, 1) / det, -dilated(1, 0) / det, dilated(0, 0) / det;
  p.depth = t.z();
  p.opacity = splat.opacity;
  p.cam_point = t;

  // One extra pixel on each side keeps the box conservative under rounding.
  const double rx = options.cutoff_sigma * std::sqrt(dilated(0, 0));
  const double ry = options.cutoff_sigma * std::sqrt(dilated(1, 1));
  const double fx0 = std::floor(p.mean2d.x() - rx) - 1.0;
  const double fy0 = std::floor(p.mean2d.y() - ry) - 1.0;
  const double fx1 = std::ceil(p.mean2d.x() + rx) + 1.0;
  const double fy1 = std::ceil(p.mean2d.y() + ry) + 1.0;
  if (fx1 < 0.0 || fy1 < 0.0 || fx0 > camera.width - 1 || fy0 > camera.height - 1) {
    return std::nullopt;
  }
  p.rect = {static_cast<int>(std::max(fx0, 0.0)), static_cast<int>(std::max(fy0, 0.0)),
            static_cast<int>(std::min(fx1, camera.width - 1.0)),
            static_cast<int>(std::min(fy1, camera.height - 1.0))};

  const Vec3 dir = (splat.mean - camera.center()).normalized();
  p.sh_dir = splat.sh_rotation.transpose() * dir;
  const Vec3 raw = eval_sh_raw(sh_degree, splat.sh, p.sh_dir);
  for (int c = 0; c < 3; ++c) {
    const double v = raw[c] + 0.5;
    p.color_clamped[c] = v < 0.0 || v > 1.0;
    p.color[c] = std::clamp(v, 0.0, 1.0);
  }
  return p;
}

std::optional<ProjectedGaussian> project(const BoundGaussian& g, int sh_degree,
                                         const TriangleMesh& mesh, const Camera& camera,
                                         const RenderOptions& options) {
  Splat s;
  s.mean = world_position(g, mesh);
  s.cov = covariance(g);
  s.opacity = opacity(g);
  s.sh = g.sh;
  return project(s, effective_degree(sh_degree, options), camera, options);
}

std::vector<ProjectedGaussian> project_all(std::span<const Splat> splats, int sh_degree,
                                           const Camera& camera, const RenderOptions& options) {
  const int degree = effective_degree(sh_degree, options);
  std::vector<ProjectedGaussian> out;
  out.reserve(splats.size());
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Splat& s = splats[i];
    bool finite = s.mean.allFinite() && s.cov.allFinite() && std::isfinite(s.opacity) &&
                  s.sh_rotation.allFinite();
    for (const Vec3& c : s.sh) finite = finite && c.allFinite();
    if (!finite) {
      throw Error(ErrorCode::kNumeric, "gaussian " + std::to_string(i) + " has a non-finite parameter");
    }
    if (auto p = project(s, degree, camera, options)) {
      p->index = static_cast<std::uint32_t>(i);
      out.push_back(*p);
    }
  }
  return out;
}

TileBins tile_bin(std::span<const ProjectedGaussian> projected, int width, int height) {
  TileBins bins;
  bins.tiles_x = (width + kTileSize - 1) / kTileSize;
  bins.tiles_y = (height + kTileSize - 1) / kTileSize;
  bins.lists.assign(static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y, {});

  std::vector<std::uint32_t> order(projected.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (projected[a].depth != projected[b].depth) return projected[a].depth < projected[b].depth;
    return projected[a].index < projected[b].index;
  });
  for (std::uint32_t k : order) {
    const auto& r = projected[k].rect;
    const int tx0 = std::max(r[0], 0) / kTileSize;
    const int ty0 = std::max(r[1], 0) / kTileSize;
    const int tx1 = std::min(r[2] / kTileSize, bins.tiles_x - 1);
    const int ty1 = std::min(r[3] / kTileSize, bins.tiles_y - 1);
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) bins.lists[ty * bins.tiles_x + tx].push_back(k);
    }
  }
  return bins;
}

Framebuffer rasterize(std::span<const ProjectedGaussian> projected, const TileBins& bins,
                      int width, int height, const RenderOptions& options,
                      std::vector<std::uint32_t>* visited) {
  Framebuffer fb(width, height);
  if (visited) visited->assign(static_cast<std::size_t>(width) * height, 0u);
  const std::vector<RasterItem> items = raster_items(projected);
  const double power_floor = -0.5 * options.cutoff_sigma * options.cutoff_sigma;
  const int tile_count = bins.tiles_x * bins.tiles_y;

  // Squared Mahalanobis radius of the cutoff, padded so the row and span
  // bounds below never drop a pixel that passes the exact test.
  const double reach = -2.0 * power_floor * (1.0 + 1e-9) + 1e-12;

  // Tiles write disjoint pixels.
#pragma omp parallel for schedule(dynamic)
  for (int tile = 0; tile < tile_count; ++tile) {
    const int tx = tile % bins.tiles_x;
    const int ty = tile / bins.tiles_x;
    const auto& list = bins.lists[tile];
    const int x0 = tx * kTileSize, y0 = ty * kTileSize;
    const int x_end = std::min(x0 + kTileSize, width);
    const int y_end = std::min(y0 + kTileSize, height);
    const int tw = x_end - x0;

    std::array<double, kTileSize * kTileSize> t, cr, cg, cb;
    std::array<std::uint32_t, kTileSize * kTileSize> n;
    t.fill(1.0);
    cr.fill(0.0);
    cg.fill(0.0);
    cb.fill(0.0);
    n.fill(static_cast<std::uint32_t>(list.size()));
    std::array<bool, kTileSize * kTileSize> done{};
    int live = (x_end - x0) * (y_end - y0);

    // Splats in depth order; each one only touches the pixels inside its
    // cutoff ellipse, so per-pixel compositing order is unchanged.
    for (std::uint32_t j = 0; j < list.size() && live > 0; ++j) {
      const RasterItem& it = items[list[j]];
      const double det = it.ca * it.cc - it.cb * it.cb;
      int row_lo = y0, row_hi = y_end - 1;
      const bool bounded = it.ca > 0.0 && det > 0.0;
      if (bounded) {
        const double ry = std::sqrt(reach * it.ca / det);
        row_lo = std::max(row_lo, static_cast<int>(std::ceil(it.my - ry)));
        row_hi = std::min(row_hi, static_cast<int>(std::floor(it.my + ry)));
      }
      for (int py = row_lo; py <= row_hi; ++py) {
        const double dy = py - it.my;
        int col_lo = x0, col_hi = x_end - 1;
        if (bounded) {
          const double disc = it.cb * it.cb * dy * dy - it.ca * (it.cc * dy * dy - reach);
          if (disc < 0.0) continue;
          const double root = std::sqrt(disc);
          col_lo = std::max(col_lo, static_cast<int>(std::ceil(it.mx + (-it.cb * dy - root) / it.ca)));
          col_hi = std::min(col_hi, static_cast<int>(std::floor(it.mx + (-it.cb * dy + root) / it.ca)));
        }
        for (int px = col_lo; px <= col_hi; ++px) {
          const int local = (py - y0) * tw + (px - x0);
          if (done[local]) continue;
          const double power = gaussian_power(it, px - it.mx, dy);
          if (power < power_floor) continue;
          const double alpha = it.opacity * std::exp(power);
          const double w = alpha * t[local];
          cr[local] += it.r * w;
          cg[local] += it.g * w;
          cb[local] += it.b * w;
          t[local] *= 1.0 - alpha;
          if (t[local] < options.min_transmittance) {
            done[local] = true;
            n[local] = j + 1;
            --live;
          }
        }
      }
    }

    for (int py = y0; py < y_end; ++py) {
      for (int px = x0; px < x_end; ++px) {
        const int local = (py - y0) * tw + (px - x0);
        const std::size_t pix = static_cast<std::size_t>(py) * width + px;
        fb.rgb[3 * pix + 0] = cr[local] + t[local] * options.background.x();
        fb.rgb[3 * pix + 1] = cg[local] + t[local] * options.background.y();
        fb.rgb[3 * pix + 2] = cb[local] + t[local] * options.background.z();
        fb.alpha[pix] = 1.0 - t[local];
        if (visited) (*visited)[pix] = n[local];
      }
    }
  }
  return fb;
}

Framebuffer render(std::span<const Splat> splats, int sh_degree, const Camera& camera,
                   const RenderOptions& options, RasterRecord* record) {
  camera.validate();
  std::vector<ProjectedGaussian> projected = project_all(splats, sh_degree, camera, options);
  TileBins bins = tile_bin(projected, camera.width, camera.height);
  std::vector<std::uint32_t> visited;
  Framebuffer fb = rasterize(projected, bins, camera.width, camera.height, options,
                             record ? &visited : nullptr);
  if (record) {
    record->projected = std::move(projected);
    record->bins = std::move(bins);
    record->visited = std::move(visited);
  }
  return fb;
}

Framebuffer render(const GaussianCloud& cloud, const TriangleMesh& mesh, const Camera& camera,
                   const RenderOptions& options) {
  const std::vector<Splat> splats = rest_splats(cloud, mesh);
  return render(splats, cloud.sh_degree, camera, options);
}

std::vector<ProjectedGrad> rasterize_backward(const RasterRecord& record, int width, int height,
                                              std::span<const double> d_rgb,
                                              const RenderOptions& options) {
  const auto& projected = record.projected;
  std::vector<ProjectedGrad> grads(projected.size());
  const std::vector<RasterItem> items = raster_items(projected);
  const double power_floor = -0.5 * options.cutoff_sigma * options.cutoff_sigma;
  const TileBins& bins = record.bins;

  struct Contribution {
    std::uint32_t k;
    double alpha;
    double t_before;
    double falloff;  // exp(power)
    double dx, dy;
  };
  std::vector<Contribution> contribs;

  // Serial over tiles: gradients of one Gaussian accumulate across tiles.
  for (int ty = 0; ty < bins.tiles_y; ++ty) {
    for (int tx = 0; tx < bins.tiles_x; ++tx) {
      const auto& list = bins.at(tx, ty);
      if (list.empty()) continue;
      const int x_end = std::min((tx + 1) * kTileSize, width);
      const int y_end = std::min((ty + 1) * kTileSize, height);
      for (int py = ty * kTileSize; py < y_end; ++py) {
        for (int px = tx * kTileSize; px < x_end; ++px) {
          const std::size_t pix = static_cast<std::size_t>(py) * width + px;
          const Vec3 g(d_rgb[3 * pix], d_rgb[3 * pix + 1], d_rgb[3 * pix + 2]);
          if (g.isZero(0.0)) continue;
          contribs.clear();
          double t = 1.0;
          const std::uint32_t n = record.visited[pix];
          for (std::uint32_t e = 0; e < n; ++e) {
            const std::uint32_t k = list[e];
            const RasterItem& it = items[k];
            const double dx = px - it.mx, dy = py - it.my;
            const double power = gaussian_power(it, dx, dy);
            if (power < power_floor) continue;
            const double falloff = std::exp(power);
            const double alpha = it.opacity * falloff;
            contribs.push_back({k, alpha, t, falloff, dx, dy});
            t *= 1.0 - alpha;
          }
          // acc = colour seen behind the current Gaussian, weighted as if it
          // started with full transmittance.
          Vec3 acc = options.background;
          for (auto c = contribs.rbegin(); c != contribs.rend(); ++c) {
            const RasterItem& it = items[c->k];
            const Vec3 color(it.r, it.g, it.b);
            ProjectedGrad& pg = grads[c->k];
            pg.color += (c->alpha * c->t_before) * g;
            const double d_alpha = c->t_before * g.dot(color - acc);
            acc = c->alpha * color + (1.0 - c->alpha) * acc;

            pg.opacity += d_alpha * c->falloff;
            const double d_power = d_alpha * c->alpha;
            // power = -1/2 d^T K d with d = p - mu'
            const Vec2 kd(it.ca * c->dx + it.cb * c->dy, it.cb * c->dx + it.cc * c->dy);
            pg.mean2d += d_power * kd;
            pg.conic(0, 0) += -0.5 * d_power * c->dx * c->dx;
            pg.conic(0, 1) += -0.5 * d_power * c->dx * c->dy;
            pg.conic(1, 0) += -0.5 * d_power * c->dx * c->dy;
            pg.conic(1, 1) += -0.5 * d_power * c->dy * c->dy;
          }
        }
      }
    }
  }
  return grads;
}

SplatGrad project_backward(const Splat& splat, const ProjectedGaussian& p,
                           const ProjectedGrad& grad, int sh_degree, const Camera& camera,
                           const RenderOptions& options) {
  const int degree = effective_degree(sh_degree, options);
  SplatGrad out;
  out.opacity = grad.opacity;
  out.sh.assign(splat.sh.size(), Vec3::Zero());

  // Colour through the SH basis and the view direction.
  Vec3 g_color = grad.color;
  for (int c = 0; c < 3; ++c) {
    if (p.color_clamped[c]) g_color[c] = 0.0;
  }
  const int count = sh_coeff_count(degree);
  double basis[sh_coeff_count(kMaxShDegree)];
  Vec3 basis_grad[sh_coeff_count(kMaxShDegree)];
  sh_basis(degree, p.sh_dir, basis);
  sh_basis_gradient(degree, p.sh_dir, basis_grad);
  Vec3 d_local = Vec3::Zero();
  for (int k = 0; k < count; ++k) {
    out.sh[k] = basis[k] * g_color;
    d_local += basis_grad[k] * splat.sh[k].dot(g_color);
  }
  const Vec3 dir = splat.mean - camera.center();
  const double dir_len = dir.norm();
  const Vec3 unit = dir / dir_len;
  const Vec3 d_unit = splat.sh_rotation * d_local;
  out.mean += (d_unit - unit * unit.dot(d_unit)) / dir_len;

  const Vec3& t = p.cam_point;
  const double inv_z = 1.0 / t.z();
  const double inv_z2 = inv_z * inv_z;
  const double inv_z3 = inv_z2 * inv_z;
  Vec3 d_t(grad.mean2d.x() * camera.fx * inv_z, grad.mean2d.y() * camera.fy * inv_z,
           -grad.mean2d.x() * camera.fx * t.x() * inv_z2 -
               grad.mean2d.y() * camera.fy * t.y() * inv_z2);

  // conic = (cov2d + dilation I)^-1
  const Mat2 g_conic = 0.5 * (grad.conic + grad.conic.transpose());
  const Mat2 d_cov2d = -p.conic * g_conic * p.conic;

  const Mat23 j = projection_jacobian(camera, t);
  const Mat3& w = camera.rotation;
  const Mat3 cam_cov = w * splat.cov * w.transpose();
  const Mat3 d_cam_cov = j.transpose() * d_cov2d * j;
  const Mat23 d_j = 2.0 * d_cov2d * j * cam_cov;
  d_t.x() += d_j(0, 2) * (-camera.fx * inv_z2);
  d_t.y() += d_j(1, 2) * (-camera.fy * inv_z2);
  d_t.z() += d_j(0, 0) * (-camera.fx * inv_z2) + d_j(0, 2) * (2.0 * camera.fx * t.x() * inv_z3) +
             d_j(1, 1) * (-camera.fy * inv_z2) + d_j(1, 2) * (2.0 * camera.fy * t.y() * inv_z3);

  out.cov = w.transpose() * d_cam_cov * w;
  out.mean += w.transpose() * d_t;
  return out;
}

}  // namespace meshgs
