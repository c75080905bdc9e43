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

#include "meshgs/sh.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include <Eigen/QR>

namespace meshgs {
namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152492708};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

}  // namespace

void sh_basis(int degree, const Vec3& dir, std::span<double> out) {
  assert(out.size() >= static_cast<std::size_t>(sh_coeff_count(degree)));
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kC0;
  if (degree < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2[0] * x * y;
  out[5] = kC2[1] * y * z;
  out[6] = kC2[2] * (2.0 * zz - xx - yy);
  out[7] = kC2[3] * x * z;
  out[8] = kC2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kC3[0] * y * (3.0 * xx - yy);
  out[10] = kC3[1] * x * y * z;
  out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kC3[5] * z * (xx - yy);
  out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_gradient(int degree, const Vec3& dir, std::span<Vec3> out) {
  assert(out.size() >= static_cast<std::size_t>(sh_coeff_count(degree)));
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0].setZero();
  if (degree < 1) return;
  out[1] = {0.0, -kC1, 0.0};
  out[2] = {0.0, 0.0, kC1};
  out[3] = {-kC1, 0.0, 0.0};
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2[0] * Vec3(y, x, 0.0);
  out[5] = kC2[1] * Vec3(0.0, z, y);
  out[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
  out[7] = kC2[3] * Vec3(z, 0.0, x);
  out[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
  if (degree < 3) return;
  out[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
  out[10] = kC3[1] * Vec3(y * z, x * z, x * y);
  out[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
  out[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
  out[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
  out[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

Vec3 eval_sh_raw(int degree, std::span<const Vec3> coeffs, const Vec3& dir) {
  double basis[sh_coeff_count(kMaxShDegree)];
  sh_basis(degree, dir, basis);
  Vec3 color = Vec3::Zero();
  const int count = sh_coeff_count(degree);
  for (int k = 0; k < count; ++k) color += basis[k] * coeffs[k];
  return color;
}

Vec3 eval_sh(int degree, std::span<const Vec3> coeffs, const Vec3& dir) {
  Vec3 color = eval_sh_raw(degree, coeffs, dir);
  for (int c = 0; c < 3; ++c) color[c] = std::clamp(color[c] + 0.5, 0.0, 1.0);
  return color;
}

std::vector<Vec3> rotate_sh(int degree, std::span<const Vec3> coeffs, const Mat3& r) {
  // Each band is closed under rotation, so a least-squares fit over enough
  // sample directions recovers the band's rotation matrix exactly.
  constexpr int kSamples = 64;
  const int count = sh_coeff_count(degree);
  Eigen::MatrixXd rest(kSamples, count), turned(kSamples, count);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int m = 0; m < kSamples; ++m) {
    const double z = 1.0 - (2.0 * m + 1.0) / kSamples;
    const double rho = std::sqrt(1.0 - z * z);
    const Vec3 d(rho * std::cos(golden * m), rho * std::sin(golden * m), z);
    double b[sh_coeff_count(kMaxShDegree)];
    sh_basis(degree, d, b);
    for (int k = 0; k < count; ++k) rest(m, k) = b[k];
    sh_basis(degree, r.transpose() * d, b);
    for (int k = 0; k < count; ++k) turned(m, k) = b[k];
  }
  std::vector<Vec3> out(coeffs.begin(), coeffs.end());
  for (int l = 1; l <= degree; ++l) {
    const int first = l * l;
    const int width = 2 * l + 1;
    const Eigen::MatrixXd d = rest.middleCols(first, width)
                                  .colPivHouseholderQr()
                                  .solve(turned.middleCols(first, width));
    for (int j = 0; j < width; ++j) {
      Vec3 c = Vec3::Zero();
      for (int k = 0; k < width; ++k) c += d(j, k) * coeffs[first + k];
      out[first + j] = c;
    }
  }
  return out;
}

}  // namespace meshgs
