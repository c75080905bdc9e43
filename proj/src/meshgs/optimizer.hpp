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
#include <functional>
#include <string>
#include <vector>

#include "meshgs/camera.hpp"
#include "meshgs/gaussian_model.hpp"
#include "meshgs/image_io.hpp"
#include "meshgs/loss.hpp"
#include "meshgs/renderer.hpp"

namespace meshgs {

/// Parameter groups, in the order they are packed into a flat vector.
enum class ParamGroup { kBary, kTau, kScale, kRotation, kOpacity, kSh };
inline constexpr int kParamGroupCount = 6;
const char* param_group_name(ParamGroup group);

/// Flat layout of one Gaussian's trainable values:
/// bary_logits[3] tau_logit log_scale[3] rotation[4] opacity_logit sh[3k].
struct ParamLayout {
  static constexpr int kBary = 0;
  static constexpr int kTau = 3;
  static constexpr int kScale = 4;
  static constexpr int kRotation = 7;
  static constexpr int kOpacity = 11;
  static constexpr int kSh = 12;
  static int size(int sh_degree) { return kSh + 3 * sh_coeff_count(sh_degree); }
  static ParamGroup group_of(int slot);
};

void pack_params(const BoundGaussian& g, std::span<double> out);
void unpack_params(std::span<const double> in, BoundGaussian& g);

struct TrainConfig {
  int iterations = 5000;
  double lr_bary = 2e-3;
  double lr_tau = 2e-3;
  double lr_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_sh = 2.5e-3;
  /// Rate for the SH bands above degree 0.
  double lr_sh_rest = 1.25e-4;
  /// The bary and tau rates decay exponentially to this fraction of their
  /// initial value by the last iteration.
  double lr_position_final = 0.01;
  double gamma = 1.0;
  double lambda_r = 0.05;
  double lambda_dssim = 0.2;
  int densify_interval = 100;
  int densify_from = 500;
  int densify_until = 2500;
  double densify_grad_threshold = 2e-4;
  double prune_opacity = 0.005;
  /// Gaussians whose max scale exceeds this many face circumradii are pruned.
  double prune_scale_ratio = 10.0;
  int max_sh_degree = 3;
  /// The active SH degree grows by one every this many iterations.
  int sh_unlock_interval = 1000;
  int log_interval = 250;
  std::uint64_t seed = 0;

  double lr(ParamGroup group) const;
  /// Throws Error(kInvalidArgument) for non-positive rates or negative thresholds.
  void validate() const;
};

struct LossWeights {
  double lambda_dssim = 0.2;
  double lambda_r = 0.0;
  double gamma = 1.0;
};

/// Gradient of the total loss for one Gaussian.
struct GaussianGrad {
  std::vector<double> params;   // ParamLayout order
  Vec2 mean2d = Vec2::Zero();   // dL/d(projected mean), pixels
  bool visible = false;
};

struct BackwardResult {
  double loss = 0.0;
  double photometric = 0.0;
  double regularization = 0.0;
  Framebuffer image;
  std::vector<GaussianGrad> grads;
};

/// Forward render of one view plus reverse-mode gradients of
///   photometric_loss + lambda_r * L_r
/// with respect to every parameter of every Gaussian. The face frame (n, R)
/// is held constant. Throws Error(kNumeric) naming the Gaussian and the
/// parameter group of the first non-finite gradient.
BackwardResult backward(const GaussianCloud& cloud, const TriangleMesh& mesh,
                        const Camera& camera, const Image& target, const LossWeights& weights,
                        const RenderOptions& options = {});

/// The scalar backward() differentiates, without gradients.
double evaluate_loss(const GaussianCloud& cloud, const TriangleMesh& mesh, const Camera& camera,
                     const Image& target, const LossWeights& weights,
                     const RenderOptions& options = {});

/// Image size (pixels, geometric mean of width and height) at which the
/// split threshold is interpreted.
inline constexpr double kDensifyReferenceSize = 800.0;

/// Running mean of the screen-space positional gradient norm per Gaussian.
struct GradAccumulator {
  std::vector<double> norm_sum;
  std::vector<int> views;

  void reset(std::size_t count);
  void add(const std::vector<GaussianGrad>& grads, int width, int height);
  double mean(std::size_t i) const { return views[i] > 0 ? norm_sum[i] / views[i] : 0.0; }
};

/// Outcome of a densify or prune step: for each surviving or new Gaussian,
/// the index it came from (kNew for split children).
struct CloudRemap {
  static constexpr std::int64_t kNew = -1;
  std::vector<std::int64_t> source;
};

/// Splits the bound face of every Gaussian whose accumulated mean screen
/// gradient exceeds config.densify_grad_threshold, and replaces that Gaussian
/// by one child per child face (w = 1/3, inherited tau, rotation, SH and
/// opacity, halved scale). Other Gaussians on a split face are rebound to the
/// child containing them.
CloudRemap densify_step(GaussianCloud& cloud, TriangleMesh& mesh, const GradAccumulator& acc,
                        const TrainConfig& config);

/// Removes Gaussians with opacity below config.prune_opacity or with
/// max(scale) above config.prune_scale_ratio times their face circumradius.
CloudRemap prune_step(GaussianCloud& cloud, const TriangleMesh& mesh, const TrainConfig& config);

/// Per-parameter first-order adaptive-moment optimizer over packed Gaussians.
class AdamOptimizer {
 public:
  AdamOptimizer(const TrainConfig& config, int sh_degree);
  void resize(std::size_t count);
  /// `position_scale` multiplies the bary and tau rates.
  void step(GaussianCloud& cloud, const std::vector<GaussianGrad>& grads,
            double position_scale = 1.0);
  /// Carries moments over after densify/prune; new entries start at zero.
  void remap(const CloudRemap& remap);

 private:
  std::vector<double> rates_;  // per slot
  int stride_;
  std::vector<double> m_, v_;
  std::vector<int> t_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-15;
};

struct View {
  Camera camera;
  std::filesystem::path image_path;
  Image image;
};

struct Dataset {
  std::vector<View> train;
  std::vector<View> holdout;
  Vec3 background = Vec3::Zero();
};

/// NeRF-Synthetic style manifest: `frames[]` with `file_path` and
/// camera-to-world `transform_matrix`, intrinsics from `camera_angle_x` or
/// `fl_x`/`fl_y`/`cx`/`cy`. Optional `test_frames[]` are held out; without
/// them the last frame is held out (if there is more than one). Optional
/// `background: [r, g, b]`. Throws Error(kIo) when the manifest is missing.
Dataset load_dataset(const std::filesystem::path& manifest,
                     const Vec3* background_override = nullptr);

struct MetricsRow {
  int iteration = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t gaussian_count = 0;
  std::size_t face_count = 0;
  /// Gaussians with max(s) > gamma * R.
  std::size_t oversized = 0;
};

struct TrainResult {
  GaussianCloud cloud;
  TriangleMesh mesh;
  std::vector<MetricsRow> log;
};

using ProgressCallback = std::function<void(const MetricsRow&)>;

/// Fits a mesh-bound cloud to the dataset. Deterministic for a given seed.
TrainResult train(const Dataset& dataset, TriangleMesh mesh, const TrainConfig& config,
                  const ProgressCallback& progress = {});

/// Columns: iteration,loss,psnr,ssim,gaussian_count,face_count
void write_metrics_csv(const std::vector<MetricsRow>& log, const std::filesystem::path& path);

std::size_t count_oversized(const GaussianCloud& cloud, const TriangleMesh& mesh, double gamma);

}  // namespace meshgs
