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

#include "meshgs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "meshgs/error.hpp"

namespace meshgs {

const char* param_group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kBary: return "bary_logits";
    case ParamGroup::kTau: return "tau_logit";
    case ParamGroup::kScale: return "log_scale";
    case ParamGroup::kRotation: return "rotation";
    case ParamGroup::kOpacity: return "opacity_logit";
    case ParamGroup::kSh: return "sh";
  }
  return "unknown";
}

ParamGroup ParamLayout::group_of(int slot) {
  if (slot < kTau) return ParamGroup::kBary;
  if (slot < kScale) return ParamGroup::kTau;
  if (slot < kRotation) return ParamGroup::kScale;
  if (slot < kOpacity) return ParamGroup::kRotation;
  if (slot < kSh) return ParamGroup::kOpacity;
  return ParamGroup::kSh;
}

void pack_params(const BoundGaussian& g, std::span<double> out) {
  for (int i = 0; i < 3; ++i) out[ParamLayout::kBary + i] = g.bary_logits[i];
  out[ParamLayout::kTau] = g.tau_logit;
  for (int i = 0; i < 3; ++i) out[ParamLayout::kScale + i] = g.log_scale[i];
  for (int i = 0; i < 4; ++i) out[ParamLayout::kRotation + i] = g.rotation[i];
  out[ParamLayout::kOpacity] = g.opacity_logit;
  for (std::size_t k = 0; k < g.sh.size(); ++k) {
    for (int c = 0; c < 3; ++c) out[ParamLayout::kSh + 3 * k + c] = g.sh[k][c];
  }
}

void unpack_params(std::span<const double> in, BoundGaussian& g) {
  for (int i = 0; i < 3; ++i) g.bary_logits[i] = in[ParamLayout::kBary + i];
  g.tau_logit = in[ParamLayout::kTau];
  for (int i = 0; i < 3; ++i) g.log_scale[i] = in[ParamLayout::kScale + i];
  for (int i = 0; i < 4; ++i) g.rotation[i] = in[ParamLayout::kRotation + i];
  g.opacity_logit = in[ParamLayout::kOpacity];
  for (std::size_t k = 0; k < g.sh.size(); ++k) {
    for (int c = 0; c < 3; ++c) g.sh[k][c] = in[ParamLayout::kSh + 3 * k + c];
  }
}

double TrainConfig::lr(ParamGroup group) const {
  switch (group) {
    case ParamGroup::kBary: return lr_bary;
    case ParamGroup::kTau: return lr_tau;
    case ParamGroup::kScale: return lr_scale;
    case ParamGroup::kRotation: return lr_rotation;
    case ParamGroup::kOpacity: return lr_opacity;
    case ParamGroup::kSh: return lr_sh;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  for (int g = 0; g < kParamGroupCount; ++g) {
    if (!(lr(static_cast<ParamGroup>(g)) > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("learning rate for ") + param_group_name(static_cast<ParamGroup>(g)) +
                      " must be positive");
    }
  }
  if (!(lr_sh_rest > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr_sh_rest must be positive");
  if (!(lr_position_final > 0.0) || lr_position_final > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "lr_position_final must be in (0, 1]");
  }
  if (iterations < 0) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 0");
  if (densify_grad_threshold < 0.0 || prune_opacity < 0.0 || gamma < 0.0 || lambda_r < 0.0 ||
      lambda_dssim < 0.0 || lambda_dssim > 1.0 || prune_scale_ratio < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "thresholds and loss weights must be non-negative");
  }
  if (densify_interval <= 0 || log_interval <= 0 || sh_unlock_interval <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "intervals must be positive");
  }
  if (max_sh_degree < 0 || max_sh_degree > kMaxShDegree) {
    throw Error(ErrorCode::kInvalidArgument, "max_sh_degree must be in [0, 3]");
  }
}

namespace {

struct SplatsWithFrames {
  std::vector<Splat> splats;
  std::vector<FaceFrame> frames;
};

SplatsWithFrames build_splats(const GaussianCloud& cloud, const TriangleMesh& mesh) {
  SplatsWithFrames out;
  out.splats = rest_splats(cloud, mesh);
  out.frames.reserve(cloud.size());
  for (const BoundGaussian& g : cloud.gaussians) out.frames.push_back(mesh.face_frame(g.face));
  return out;
}

// dL/dR (rotation matrix) -> dL/dq for q = raw / |raw|, q = (w, x, y, z).
Vec4 rotation_matrix_backward(const Vec4& raw, const Mat3& g) {
  const double len = raw.norm();
  const Vec4 q = raw / len;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  dq[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  dq[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
  dq[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
  dq[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return (dq - q * q.dot(dq)) / len;
}

void chain_to_params(const BoundGaussian& g, const TriangleMesh& mesh, const FaceFrame& frame,
                     const SplatGrad& sg, std::span<double> out) {
  const Face& face = mesh.faces()[g.face];
  const auto& verts = mesh.vertices();

  // mu = sum_k w_k v_k + tau R n, w = softmax(bary_logits)
  const Vec3 w = barycentric(g);
  Vec3 g_w;
  for (int k = 0; k < 3; ++k) g_w[k] = sg.mean.dot(verts[face[k]]);
  const double mean_gw = w.dot(g_w);
  for (int k = 0; k < 3; ++k) out[ParamLayout::kBary + k] += w[k] * (g_w[k] - mean_gw);
  const double th = std::tanh(g.tau_logit);
  out[ParamLayout::kTau] += frame.circumradius * sg.mean.dot(frame.normal) * 0.5 * (1.0 - th * th);

  // Sigma = M M^T, M = R diag(s)
  const Mat3 rot = quaternion_to_matrix(g.rotation);
  const Vec3 s = scale(g);
  const Mat3 m = rot * s.asDiagonal();
  const Mat3 d_m = (sg.cov + sg.cov.transpose()) * m;
  const Mat3 d_rot = d_m * s.asDiagonal();
  for (int j = 0; j < 3; ++j) out[ParamLayout::kScale + j] += d_m.col(j).dot(rot.col(j)) * s[j];
  const Vec4 d_q = rotation_matrix_backward(g.rotation, d_rot);
  for (int k = 0; k < 4; ++k) out[ParamLayout::kRotation + k] += d_q[k];

  const double sigma = opacity(g);
  out[ParamLayout::kOpacity] += sg.opacity * sigma * (1.0 - sigma);
  for (std::size_t k = 0; k < sg.sh.size(); ++k) {
    for (int c = 0; c < 3; ++c) out[ParamLayout::kSh + 3 * k + c] += sg.sh[k][c];
  }
}

}  // namespace

BackwardResult backward(const GaussianCloud& cloud, const TriangleMesh& mesh,
                        const Camera& camera, const Image& target, const LossWeights& weights,
                        const RenderOptions& options) {
  const SplatsWithFrames input = build_splats(cloud, mesh);
  BackwardResult result;
  RasterRecord record;
  result.image = render(input.splats, cloud.sh_degree, camera, options, &record);
  std::vector<double> d_rgb;
  result.photometric = photometric_loss(result.image, target, weights.lambda_dssim, &d_rgb);
  std::vector<Vec3> d_log_scale;
  if (weights.lambda_r != 0.0) {
    result.regularization = regularization_loss(cloud, mesh, weights.gamma, &d_log_scale);
  }
  result.loss = result.photometric + weights.lambda_r * result.regularization;

  const int stride = ParamLayout::size(cloud.sh_degree);
  result.grads.resize(cloud.size());
  for (GaussianGrad& g : result.grads) g.params.assign(stride, 0.0);

  const std::vector<ProjectedGrad> projected_grads =
      rasterize_backward(record, camera.width, camera.height, d_rgb, options);
  for (std::size_t k = 0; k < record.projected.size(); ++k) {
    const ProjectedGaussian& p = record.projected[k];
    const std::uint32_t i = p.index;
    const SplatGrad sg = project_backward(input.splats[i], p, projected_grads[k], cloud.sh_degree,
                                          camera, options);
    chain_to_params(cloud.gaussians[i], mesh, input.frames[i], sg, result.grads[i].params);
    result.grads[i].mean2d = projected_grads[k].mean2d;
    result.grads[i].visible = true;
  }
  if (!d_log_scale.empty()) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int j = 0; j < 3; ++j) {
        result.grads[i].params[ParamLayout::kScale + j] += weights.lambda_r * d_log_scale[i][j];
      }
    }
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& params = result.grads[i].params;
    for (int slot = 0; slot < stride; ++slot) {
      if (!std::isfinite(params[slot])) {
        throw Error(ErrorCode::kNumeric,
                    "non-finite gradient for gaussian " + std::to_string(i) + " parameter group " +
                        param_group_name(ParamLayout::group_of(slot)));
      }
    }
  }
  return result;
}

double evaluate_loss(const GaussianCloud& cloud, const TriangleMesh& mesh, const Camera& camera,
                     const Image& target, const LossWeights& weights,
                     const RenderOptions& options) {
  const Framebuffer image = render(cloud, mesh, camera, options);
  double loss = photometric_loss(image, target, weights.lambda_dssim);
  if (weights.lambda_r != 0.0) {
    loss += weights.lambda_r * regularization_loss(cloud, mesh, weights.gamma);
  }
  return loss;
}

void GradAccumulator::reset(std::size_t count) {
  norm_sum.assign(count, 0.0);
  views.assign(count, 0);
}

void GradAccumulator::add(const std::vector<GaussianGrad>& grads, int width, int height) {
  // Normalized device units (pixels scaled by half the image size), then
  // rescaled to kDensifyReferenceSize: the per-pixel L1 gradient is a sign,
  // so its noise floor in these units grows as 1 / image size.
  const double resize = std::sqrt(static_cast<double>(width) * height) / kDensifyReferenceSize;
  for (std::size_t i = 0; i < grads.size() && i < norm_sum.size(); ++i) {
    if (!grads[i].visible) continue;
    const Vec2 ndc(grads[i].mean2d.x() * 0.5 * width, grads[i].mean2d.y() * 0.5 * height);
    norm_sum[i] += resize * ndc.norm();
    views[i] += 1;
  }
}

namespace {

// Barycentric weights of a parent-face point re-expressed in the child that
// contains it. Child order follows TriangleMesh::split_face.
std::pair<int, Vec3> locate_in_child(const Vec3& w) {
  if (w[0] >= 0.5) return {0, Vec3(2.0 * w[0] - 1.0, 2.0 * w[1], 2.0 * w[2])};
  if (w[1] >= 0.5) return {1, Vec3(2.0 * w[0], 2.0 * w[1] - 1.0, 2.0 * w[2])};
  if (w[2] >= 0.5) return {2, Vec3(2.0 * w[0], 2.0 * w[1], 2.0 * w[2] - 1.0)};
  return {3, Vec3(w[0] + w[1] - w[2], w[1] + w[2] - w[0], w[2] + w[0] - w[1])};
}

}  // namespace

CloudRemap densify_step(GaussianCloud& cloud, TriangleMesh& mesh, const GradAccumulator& acc,
                        const TrainConfig& config) {
  CloudRemap remap;
  const std::size_t n = cloud.size();
  std::vector<bool> selected(n, false);
  bool any = false;
  for (std::size_t i = 0; i < n && i < acc.norm_sum.size(); ++i) {
    selected[i] = acc.views[i] > 0 && acc.mean(i) > config.densify_grad_threshold;
    any = any || selected[i];
  }
  if (!any) {
    remap.source.resize(n);
    std::iota(remap.source.begin(), remap.source.end(), 0);
    return remap;
  }

  std::unordered_map<FaceId, std::array<FaceId, 4>> children;
  for (std::size_t i = 0; i < n; ++i) {
    const FaceId f = cloud.gaussians[i].face;
    if (selected[i] && !children.count(f)) children.emplace(f, mesh.split_face(f));
  }

  std::vector<BoundGaussian> next;
  next.reserve(n + 3 * children.size());
  for (std::size_t i = 0; i < n; ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    auto it = children.find(g.face);
    if (selected[i]) {
      for (FaceId child : it->second) {
        BoundGaussian c = g;
        c.face = child;
        c.bary_logits.setZero();
        c.log_scale = g.log_scale.array() - std::log(2.0);
        next.push_back(std::move(c));
        remap.source.push_back(CloudRemap::kNew);
      }
    } else {
      BoundGaussian c = g;
      if (it != children.end()) {
        const auto [which, w] = locate_in_child(barycentric(g));
        c.face = it->second[which];
        c.bary_logits = w.cwiseMax(1e-6).array().log();
      }
      next.push_back(std::move(c));
      remap.source.push_back(static_cast<std::int64_t>(i));
    }
  }
  cloud.gaussians = std::move(next);
  cloud.mesh_hash = mesh.content_hash();
  return remap;
}

CloudRemap prune_step(GaussianCloud& cloud, const TriangleMesh& mesh, const TrainConfig& config) {
  CloudRemap remap;
  std::vector<BoundGaussian> kept;
  kept.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    const bool faint = opacity(g) < config.prune_opacity;
    const bool runaway =
        scale(g).maxCoeff() > config.prune_scale_ratio * mesh.face_frame(g.face).circumradius;
    if (faint || runaway) continue;
    kept.push_back(g);
    remap.source.push_back(static_cast<std::int64_t>(i));
  }
  cloud.gaussians = std::move(kept);
  return remap;
}

AdamOptimizer::AdamOptimizer(const TrainConfig& config, int sh_degree)
    : stride_(ParamLayout::size(sh_degree)) {
  rates_.resize(stride_);
  for (int slot = 0; slot < stride_; ++slot) rates_[slot] = config.lr(ParamLayout::group_of(slot));
  for (int slot = ParamLayout::kSh + 3; slot < stride_; ++slot) rates_[slot] = config.lr_sh_rest;
}

void AdamOptimizer::resize(std::size_t count) {
  m_.assign(count * stride_, 0.0);
  v_.assign(count * stride_, 0.0);
  t_.assign(count, 0);
}

void AdamOptimizer::step(GaussianCloud& cloud, const std::vector<GaussianGrad>& grads,
                         double position_scale) {
  std::vector<double> params(stride_);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!grads[i].visible) {
      // Only the regularizer can reach an unseen Gaussian.
      bool zero = true;
      for (double v : grads[i].params) zero = zero && v == 0.0;
      if (zero) continue;
    }
    BoundGaussian& g = cloud.gaussians[i];
    pack_params(g, params);
    const int t = ++t_[i];
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    double* m = &m_[i * stride_];
    double* v = &v_[i * stride_];
    for (int s = 0; s < stride_; ++s) {
      const double grad = grads[i].params[s];
      m[s] = beta1_ * m[s] + (1.0 - beta1_) * grad;
      v[s] = beta2_ * v[s] + (1.0 - beta2_) * grad * grad;
      const double rate = s < ParamLayout::kScale ? rates_[s] * position_scale : rates_[s];
      params[s] -= rate * (m[s] / c1) / (std::sqrt(v[s] / c2) + eps_);
    }
    unpack_params(params, g);
    g.rotation /= g.rotation.norm();
  }
}

void AdamOptimizer::remap(const CloudRemap& remap) {
  std::vector<double> m(remap.source.size() * stride_, 0.0);
  std::vector<double> v(remap.source.size() * stride_, 0.0);
  std::vector<int> t(remap.source.size(), 0);
  for (std::size_t i = 0; i < remap.source.size(); ++i) {
    const std::int64_t src = remap.source[i];
    if (src == CloudRemap::kNew) continue;
    std::copy_n(&m_[src * stride_], stride_, &m[i * stride_]);
    std::copy_n(&v_[src * stride_], stride_, &v[i * stride_]);
    t[i] = t_[src];
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = std::move(t);
}

std::size_t count_oversized(const GaussianCloud& cloud, const TriangleMesh& mesh, double gamma) {
  std::size_t count = 0;
  for (const BoundGaussian& g : cloud.gaussians) {
    if (scale(g).maxCoeff() > gamma * mesh.face_frame(g.face).circumradius) ++count;
  }
  return count;
}

namespace {

void compose_cloud_remap(std::vector<std::int64_t>& composed, const CloudRemap& next) {
  std::vector<std::int64_t> out(next.source.size());
  for (std::size_t i = 0; i < next.source.size(); ++i) {
    out[i] = next.source[i] == CloudRemap::kNew ? CloudRemap::kNew : composed[next.source[i]];
  }
  composed = std::move(out);
}

class ViewSampler {
 public:
  ViewSampler(std::size_t count, std::uint64_t seed) : order_(count), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = order_.size();
  }
  std::size_t next() {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_;
};

}  // namespace

TrainResult train(const Dataset& dataset, TriangleMesh mesh, const TrainConfig& config,
                  const ProgressCallback& progress) {
  config.validate();
  if (dataset.train.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset has no training views");
  for (const View& view : dataset.train) {
    if (view.image.width != view.camera.width || view.image.height != view.camera.height) {
      throw Error(ErrorCode::kInvalidArgument,
                  "image " + view.image_path.string() + " does not match its camera size");
    }
  }

  TrainResult result;
  result.cloud = init_from_mesh(mesh, config.max_sh_degree);
  GaussianCloud& cloud = result.cloud;
  AdamOptimizer adam(config, cloud.sh_degree);
  adam.resize(cloud.size());
  GradAccumulator acc;
  acc.reset(cloud.size());
  ViewSampler sampler(dataset.train.size(), config.seed);
  const LossWeights weights{config.lambda_dssim, config.lambda_r, config.gamma};
  RenderOptions options;
  options.background = dataset.background;

  const std::vector<View>& eval_views = dataset.holdout.empty() ? dataset.train : dataset.holdout;
  double loss_sum = 0.0;
  int loss_count = 0;
  auto log_row = [&](int iteration) {
    MetricsRow row;
    row.iteration = iteration;
    row.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    for (const View& view : eval_views) {
      const Framebuffer fb = render(cloud, mesh, view.camera, options);
      row.psnr += psnr(fb.rgb, view.image.rgb);
      row.ssim += ssim(fb.rgb, view.image.rgb, fb.width, fb.height);
    }
    row.psnr /= static_cast<double>(eval_views.size());
    row.ssim /= static_cast<double>(eval_views.size());
    row.gaussian_count = cloud.size();
    row.face_count = mesh.face_count();
    row.oversized = count_oversized(cloud, mesh, config.gamma);
    result.log.push_back(row);
    if (progress) progress(row);
    loss_sum = 0.0;
    loss_count = 0;
  };

  log_row(0);
  for (int it = 1; it <= config.iterations; ++it) {
    const View& view = dataset.train[sampler.next()];
    options.active_sh_degree = std::min(cloud.sh_degree, (it - 1) / config.sh_unlock_interval);
    const BackwardResult step = backward(cloud, mesh, view.camera, view.image, weights, options);
    loss_sum += step.loss;
    ++loss_count;
    if (it <= config.densify_until) acc.add(step.grads, view.camera.width, view.camera.height);
    const double progress_ratio =
        config.iterations > 1 ? static_cast<double>(it - 1) / (config.iterations - 1) : 0.0;
    adam.step(cloud, step.grads, std::pow(config.lr_position_final, progress_ratio));

    if (it >= config.densify_from && it <= config.densify_until &&
        it % config.densify_interval == 0) {
      std::vector<std::int64_t> composed(cloud.size());
      std::iota(composed.begin(), composed.end(), 0);
      const CloudRemap split = densify_step(cloud, mesh, acc, config);
      compose_cloud_remap(composed, split);
      const CloudRemap pruned = prune_step(cloud, mesh, config);
      compose_cloud_remap(composed, pruned);
      adam.remap(CloudRemap{composed});
      acc.reset(cloud.size());
    }
    if (it % config.log_interval == 0 || it == config.iterations) log_row(it);
  }
  result.mesh = std::move(mesh);
  return result;
}

void write_metrics_csv(const std::vector<MetricsRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write metrics " + path.string());
  out << "iteration,loss,psnr,ssim,gaussian_count,face_count\n";
  out.precision(10);
  for (const MetricsRow& row : log) {
    out << row.iteration << ',' << row.loss << ',' << row.psnr << ',' << row.ssim << ','
        << row.gaussian_count << ',' << row.face_count << '\n';
  }
}

}  // namespace meshgs
