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

#include "meshgs/loss.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "meshgs/error.hpp"

namespace meshgs {
namespace {

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kRadius;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable zero-padded "same" filtering of one plane.
class GaussianFilter {
 public:
  GaussianFilter(int width, int height)
      : width_(width), height_(height), window_(gaussian_window()), tmp_(width * height) {}

  void apply(const std::vector<double>& in, std::vector<double>& out) {
    out.assign(in.size(), 0.0);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        double s = 0.0;
        const int k0 = std::max(0, kRadius - x);
        const int k1 = std::min(kWindow, width_ - x + kRadius);
        for (int k = k0; k < k1; ++k) s += window_[k] * in[y * width_ + x + k - kRadius];
        tmp_[y * width_ + x] = s;
      }
    }
    for (int y = 0; y < height_; ++y) {
      const int k0 = std::max(0, kRadius - y);
      const int k1 = std::min(kWindow, height_ - y + kRadius);
      for (int x = 0; x < width_; ++x) {
        double s = 0.0;
        for (int k = k0; k < k1; ++k) s += window_[k] * tmp_[(y + k - kRadius) * width_ + x];
        out[y * width_ + x] = s;
      }
    }
  }

 private:
  int width_, height_;
  std::array<double, kWindow> window_;
  std::vector<double> tmp_;
};

void check_sizes(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument, "image size mismatch: " + std::to_string(a.size()) +
                                                 " vs " + std::to_string(b.size()) + " values");
  }
}

}  // namespace

double l1_loss(std::span<const double> a, std::span<const double> b) {
  check_sizes(a, b);
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double psnr(std::span<const double> a, std::span<const double> b) {
  check_sizes(a, b);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double ssim(std::span<const double> a, std::span<const double> b, int width, int height,
            std::span<double> grad_a) {
  check_sizes(a, b);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (a.size() != 3 * n) throw Error(ErrorCode::kInvalidArgument, "ssim: size does not match image");
  const bool want_grad = !grad_a.empty();
  GaussianFilter filter(width, height);
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  std::vector<double> mu_x, mu_y, e_xx, e_yy, e_xy;
  std::vector<double> p1, p2, p3, f1, f2, f3;
  const double norm = 1.0 / static_cast<double>(3 * n);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a[3 * i + c];
      y[i] = b[3 * i + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    filter.apply(x, mu_x);
    filter.apply(y, mu_y);
    filter.apply(xx, e_xx);
    filter.apply(yy, e_yy);
    filter.apply(xy, e_xy);
    if (want_grad) {
      p1.assign(n, 0.0);
      p2.assign(n, 0.0);
      p3.assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double mx = mu_x[i], my = mu_y[i];
      const double sxx = e_xx[i] - mx * mx;
      const double syy = e_yy[i] - my * my;
      const double sxy = e_xy[i] - mx * my;
      const double a1 = 2.0 * mx * my + kSsimC1;
      const double a2 = 2.0 * sxy + kSsimC2;
      const double b1 = mx * mx + my * my + kSsimC1;
      const double b2 = sxx + syy + kSsimC2;
      total += (a1 * a2) / (b1 * b2);
      if (want_grad) {
        const double d_mx = (2.0 * my * a2) / (b1 * b2) - (a1 * a2 * 2.0 * mx) / (b1 * b1 * b2);
        const double d_sxx = -(a1 * a2) / (b1 * b2 * b2);
        const double d_sxy = (2.0 * a1) / (b1 * b2);
        p1[i] = norm * (d_mx - 2.0 * d_sxx * mx - d_sxy * my);
        p2[i] = norm * d_sxx;
        p3[i] = norm * d_sxy;
      }
    }
    if (want_grad) {
      // The symmetric window makes the adjoint of the filter the filter itself.
      filter.apply(p1, f1);
      filter.apply(p2, f2);
      filter.apply(p3, f3);
      for (std::size_t i = 0; i < n; ++i) {
        grad_a[3 * i + c] = f1[i] + 2.0 * x[i] * f2[i] + y[i] * f3[i];
      }
    }
  }
  return total * norm;
}

double photometric_loss(const Framebuffer& rendered, const Image& target, double lambda_dssim,
                        std::vector<double>* grad) {
  if (rendered.width != target.width || rendered.height != target.height) {
    throw Error(ErrorCode::kInvalidArgument,
                "rendered " + std::to_string(rendered.width) + "x" + std::to_string(rendered.height) +
                    " does not match target " + std::to_string(target.width) + "x" +
                    std::to_string(target.height));
  }
  const double l1 = l1_loss(rendered.rgb, target.rgb);
  double loss = (1.0 - lambda_dssim) * l1;
  std::vector<double> d_ssim;
  double s = 1.0;
  if (lambda_dssim != 0.0) {
    if (grad) d_ssim.assign(rendered.rgb.size(), 0.0);
    s = ssim(rendered.rgb, target.rgb, rendered.width, rendered.height, d_ssim);
    loss += lambda_dssim * (1.0 - s);
  }
  if (grad) {
    const double inv_n = 1.0 / static_cast<double>(rendered.rgb.size());
    grad->assign(rendered.rgb.size(), 0.0);
    for (std::size_t i = 0; i < rendered.rgb.size(); ++i) {
      const double diff = rendered.rgb[i] - target.rgb[i];
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      (*grad)[i] = (1.0 - lambda_dssim) * sign * inv_n;
      if (!d_ssim.empty()) (*grad)[i] -= lambda_dssim * d_ssim[i];
    }
  }
  return loss;
}

double regularization_loss(const GaussianCloud& cloud, const TriangleMesh& mesh, double gamma,
                           std::vector<Vec3>* d_log_scale) {
  if (d_log_scale) d_log_scale->assign(cloud.size(), Vec3::Zero());
  double total = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    const Vec3 s = scale(g);
    Eigen::Index arg = 0;
    const double s_max = s.maxCoeff(&arg);
    const double excess = s_max - gamma * mesh.face_frame(g.face).circumradius;
    if (excess > 0.0) {
      total += excess;
      if (d_log_scale) (*d_log_scale)[i][arg] = s_max;
    }
  }
  return total;
}

}  // namespace meshgs
