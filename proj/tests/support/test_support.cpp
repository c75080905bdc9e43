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

#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "json.hpp"
#include "meshgs/image_io.hpp"
#include "meshgs/primitives.hpp"
#include "meshgs/sh.hpp"

namespace meshgs::testing {

namespace {

struct RefSplat {
  std::size_t index;
  double depth;
  Vec2 center;
  Mat2 inv_cov;
  double opacity;
  Vec3 color;
};

}  // namespace

Framebuffer reference_render(std::span<const Splat> splats, int sh_degree, const Camera& camera,
                             const RenderOptions& options) {
  const int degree =
      options.active_sh_degree < 0 ? sh_degree : std::min(sh_degree, options.active_sh_degree);
  std::vector<RefSplat> visible;
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Splat& s = splats[i];
    const Vec3 p = camera.rotation * s.mean + camera.translation;
    if (p.z() <= options.near_plane) continue;
    // d(pixel)/d(camera point) for a pinhole.
    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx / p.z(), 0.0, -camera.fx * p.x() / (p.z() * p.z()), 0.0, camera.fy / p.z(),
        -camera.fy * p.y() / (p.z() * p.z());
    Mat2 cov = jac * (camera.rotation * s.cov * camera.rotation.transpose()) * jac.transpose();
    cov = 0.5 * (cov + cov.transpose());
    cov += options.dilation * Mat2::Identity();
    Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
    const double lo = eig.eigenvalues()[0], hi = eig.eigenvalues()[1];
    if (!(lo > 0.0) || hi / lo > options.max_condition) continue;
    RefSplat r;
    r.index = i;
    r.depth = p.z();
    r.center = Vec2(camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy);
    r.inv_cov = cov.inverse();
    r.opacity = s.opacity;
    const Vec3 view = (s.mean - camera.center()).normalized();
    r.color = eval_sh(degree, s.sh, s.sh_rotation.transpose() * view);
    visible.push_back(r);
  }
  std::stable_sort(visible.begin(), visible.end(),
                   [](const RefSplat& a, const RefSplat& b) { return a.depth < b.depth; });

  Framebuffer fb(camera.width, camera.height);
  const double limit = options.cutoff_sigma * options.cutoff_sigma;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      double transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      for (const RefSplat& r : visible) {
        const Vec2 d = Vec2(x, y) - r.center;
        const double m = d.dot(r.inv_cov * d);
        if (m > limit) continue;
        const double a = r.opacity * std::exp(-0.5 * m);
        color += transmittance * a * r.color;
        transmittance *= 1.0 - a;
        if (transmittance < options.min_transmittance) break;
      }
      color += transmittance * options.background;
      const std::size_t pix = static_cast<std::size_t>(y) * camera.width + x;
      for (int c = 0; c < 3; ++c) fb.rgb[3 * pix + c] = color[c];
      fb.alpha[pix] = 1.0 - transmittance;
    }
  }
  return fb;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

TriangleMesh make_strip(int n) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < n; ++i) verts.emplace_back(i + 0.5 * j, j * std::sqrt(3.0) / 2.0, 0.0);
  }
  const auto u = [](int x) { return static_cast<VertexId>(x); };
  for (int i = 0; i + 1 < n; ++i) {
    faces.push_back({u(i), u(i + 1), u(n + i)});
    faces.push_back({u(i + 1), u(n + i + 1), u(n + i)});
  }
  return TriangleMesh(std::move(verts), std::move(faces));
}

StripBend strip_bend(const TriangleMesh& strip, int n, double degrees, const Vec3& axis) {
  StripBend out;
  const auto& v = strip.vertices();
  const Mat3 q = Eigen::AngleAxisd(degrees * M_PI / 180.0, axis.normalized()).toRotationMatrix();
  const Vec3 pivot = v[n - 1];
  for (VertexId i : {0u, static_cast<VertexId>(n)}) out.handles.constrained[i] = v[i];
  for (VertexId i : {static_cast<VertexId>(n - 1), static_cast<VertexId>(2 * n - 1)}) {
    out.handles.constrained[i] = q * (v[i] - pivot) + pivot;
  }
  for (const auto& [i, t] : out.handles.constrained) out.fixed.emplace_back(i, t);
  return out;
}

void randomize(BoundGaussian& g, std::mt19937_64& rng, double sh_amplitude) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 3; ++k) g.bary_logits[k] = u(rng);
  g.tau_logit = 0.5 * u(rng);
  for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(0.06) + 0.5 * u(rng);
  g.rotation = Vec4(n(rng), n(rng), n(rng), n(rng));
  g.rotation /= g.rotation.norm();
  g.opacity_logit = 1.5 * u(rng);
  for (Vec3& c : g.sh) c = sh_amplitude * Vec3(u(rng), u(rng), u(rng));
  if (!g.sh.empty()) g.sh[0] = 0.6 * Vec3(u(rng), u(rng), u(rng));
}

Scene random_scene(std::mt19937_64& rng, int gaussians, int size, int sh_degree) {
  Scene scene;
  const TriangleMesh grid = make_grid(3, 3, 0.5);
  const Mat3 tilt = Eigen::AngleAxisd(0.35, Vec3::UnitX()).toRotationMatrix() *
                    Eigen::AngleAxisd(-0.25, Vec3::UnitY()).toRotationMatrix();
  std::vector<Vec3> verts;
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (const Vec3& v : grid.vertices()) {
    verts.push_back(tilt * (v - Vec3(0.5, 0.5, 0.0)) + Vec3(jitter(rng), jitter(rng), jitter(rng)));
  }
  scene.mesh = TriangleMesh(std::move(verts), grid.faces());
  scene.camera = look_at(Vec3(0.0, 0.0, 2.5), Vec3::Zero(), Vec3(0.0, 1.0, 0.0), 2.0 * size,
                         size, size);
  scene.cloud.sh_degree = sh_degree;
  scene.cloud.mesh_hash = scene.mesh.content_hash();
  std::uniform_int_distribution<FaceId> face(0, static_cast<FaceId>(scene.mesh.face_count() - 1));
  for (int i = 0; i < gaussians; ++i) {
    BoundGaussian g;
    g.face = face(rng);
    g.sh.assign(sh_coeff_count(sh_degree), Vec3::Zero());
    randomize(g, rng);
    scene.cloud.gaussians.push_back(std::move(g));
  }
  return scene;
}

double arap_energy(const TriangleMesh& mesh, const EdgeWeights& weights,
                   const std::vector<Vec3>& deformed, const std::vector<Mat3>& rotations) {
  const auto& rest = mesh.vertices();
  double e = 0.0;
  for (VertexId i = 0; i < rest.size(); ++i) {
    for (VertexId j : mesh.neighbors(i)) {
      const Vec3 r = (deformed[i] - deformed[j]) - rotations[i] * (rest[i] - rest[j]);
      e += weights(i, j) * r.squaredNorm();
    }
  }
  return e;
}

ArapOracleResult brute_force_arap(const TriangleMesh& mesh, const EdgeWeights& weights,
                                  const std::vector<std::pair<VertexId, Vec3>>& fixed,
                                  std::vector<Vec3> start, int iterations) {
  const std::size_t n = mesh.vertex_count();
  const auto& rest = mesh.vertices();
  std::vector<bool> pinned(n, false);
  for (const auto& [v, target] : fixed) {
    pinned[v] = true;
    start[v] = target;
  }
  std::vector<Vec3> pos = std::move(start);
  std::vector<Mat3> rot(n, Mat3::Identity());

  auto gradient = [&](std::vector<Vec3>& gp, std::vector<Vec3>& gr) {
    gp.assign(n, Vec3::Zero());
    gr.assign(n, Vec3::Zero());
    for (VertexId i = 0; i < n; ++i) {
      for (VertexId j : mesh.neighbors(i)) {
        const double w = weights(i, j);
        const Vec3 e_def = pos[i] - pos[j];
        const Vec3 e_rot = rot[i] * (rest[i] - rest[j]);
        const Vec3 r = e_def - e_rot;
        gp[i] += 2.0 * w * r;
        gp[j] -= 2.0 * w * r;
        // Left-perturbation derivative of |e' - exp(d) R e|^2 at d = 0.
        gr[i] += -2.0 * w * e_rot.cross(e_def);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (pinned[i]) gp[i].setZero();
    }
  };
  auto energy = [&]() { return arap_energy(mesh, weights, pos, rot); };

  std::vector<Vec3> gp, gr, gp_prev, gr_prev;
  gradient(gp, gr);
  double step = 1e-3;
  double current = energy();
  for (int it = 0; it < iterations; ++it) {
    const std::vector<Vec3> pos0 = pos;
    const std::vector<Mat3> rot0 = rot;
    double trial = step;
    double next = current;
    double g2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) g2 += gp[i].squaredNorm() + gr[i].squaredNorm();
    if (g2 < 1e-30) break;
    for (int attempt = 0; attempt < 60; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        pos[i] = pos0[i] - trial * gp[i];
        const Vec3 d = -trial * gr[i];
        const double angle = d.norm();
        rot[i] = angle > 0.0 ? Mat3(Eigen::AngleAxisd(angle, d / angle)) * rot0[i] : rot0[i];
      }
      next = energy();
      if (next <= current - 1e-4 * trial * g2) break;
      trial *= 0.5;
    }
    if (next > current) {
      pos = pos0;
      rot = rot0;
      break;
    }
    current = next;
    gp_prev = gp;
    gr_prev = gr;
    gradient(gp, gr);
    // Barzilai-Borwein step for the next iteration, with s = -trial * g.
    double sy = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sy += -trial * (gp_prev[i].dot(gp[i] - gp_prev[i]) + gr_prev[i].dot(gr[i] - gr_prev[i]));
      ss += trial * trial * (gp_prev[i].squaredNorm() + gr_prev[i].squaredNorm());
    }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-8, 1e3) : trial * 2.0;
  }
  return {pos, current};
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const GaussianCloud& cloud,
                                    const TriangleMesh& mesh, const std::vector<Camera>& cameras,
                                    std::size_t holdout, const Vec3& background) {
  std::filesystem::create_directories(dir / "images");
  RenderOptions options;
  options.background = background;
  nlohmann::json frames = nlohmann::json::array();
  nlohmann::json test_frames = nlohmann::json::array();
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const Camera& cam = cameras[i];
    const Framebuffer fb = render(cloud, mesh, cam, options);
    const std::string name = "images/view_" + std::to_string(i) + ".png";
    write_png(dir / name, fb.width, fb.height, fb.rgb);
    Mat3 c2w = cam.rotation.transpose();
    c2w.col(1) = -c2w.col(1);
    c2w.col(2) = -c2w.col(2);
    const Vec3 center = -cam.rotation.transpose() * cam.translation;
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 4; ++c) {
        if (r == 3) row.push_back(c == 3 ? 1.0 : 0.0);
        else row.push_back(c < 3 ? c2w(r, c) : center[r]);
      }
      m.push_back(row);
    }
    nlohmann::json frame = {{"file_path", name}, {"transform_matrix", m},
                            {"fl_x", cam.fx},    {"fl_y", cam.fy},
                            {"cx", cam.cx},      {"cy", cam.cy},
                            {"w", cam.width},    {"h", cam.height}};
    (i + holdout >= cameras.size() ? test_frames : frames).push_back(frame);
  }
  nlohmann::json manifest = {{"frames", frames},
                             {"background", {background.x(), background.y(), background.z()}}};
  if (!test_frames.empty()) manifest["test_frames"] = test_frames;
  const std::filesystem::path path = dir / "transforms.json";
  std::ofstream(path) << manifest.dump(2);
  return path;
}

std::vector<Camera> orbit_cameras(int count, double radius, double focal, int size) {
  std::vector<Camera> out;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3 dir(r * std::cos(golden * i), r * std::sin(golden * i), z);
    const Vec3 up = std::abs(z) < 0.9 ? Vec3::UnitZ() : Vec3::UnitY();
    out.push_back(look_at(radius * dir, Vec3::Zero(), up, focal, size, size));
  }
  return out;
}

Image random_target(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(size, size);
  for (double& v : img.rgb) v = u(rng);
  return img;
}

namespace {

// Relative error with an absolute floor so that gradients at the FD noise
// level do not dominate.
double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

}  // namespace

GradCheck check_gradients(Scene& scene, const Image& target, const LossWeights& weights,
                          const RenderOptions& options, double tolerance) {
  const BackwardResult br =
      backward(scene.cloud, scene.mesh, scene.camera, target, weights, options);
  const int stride = ParamLayout::size(scene.cloud.sh_degree);
  GradCheck out;
  std::vector<double> params(stride);
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    for (int slot = 0; slot < stride; ++slot) {
      BoundGaussian& g = scene.cloud.gaussians[i];
      const BoundGaussian saved = g;
      auto central = [&](double h) {
        pack_params(saved, params);
        params[slot] += h;
        unpack_params(params, g);
        const double up =
            evaluate_loss(scene.cloud, scene.mesh, scene.camera, target, weights, options);
        params[slot] -= 2.0 * h;
        unpack_params(params, g);
        const double down =
            evaluate_loss(scene.cloud, scene.mesh, scene.camera, target, weights, options);
        return (up - down) / (2.0 * h);
      };
      // Cutoffs in the rasterizer make the loss piecewise smooth. A central
      // difference that changes when the step halves straddles a kink, so
      // the step shrinks until it no longer does.
      double numeric = 0.0;
      for (int k = 4; k <= 6; ++k) {
        const double h = std::pow(10.0, -k);
        numeric = central(h);
        if (rel_error(numeric, central(0.5 * h)) <= 0.1 * tolerance) break;
      }
      g = saved;
      const double analytic = br.grads[i].params[slot];
      const double err = rel_error(analytic, numeric);
      ++out.checked;
      auto& gm = out.group_max[static_cast<int>(ParamLayout::group_of(slot))];
      gm = std::max(gm, std::abs(analytic));
      if (err > tolerance) ++out.failed;
      if (err > out.worst_err) {
        out.worst_err = err;
        out.worst = "gaussian " + std::to_string(i) + " " +
                    param_group_name(ParamLayout::group_of(slot)) + " slot " +
                    std::to_string(slot) + " analytic " + std::to_string(analytic) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace meshgs::testing
