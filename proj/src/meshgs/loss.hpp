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

#include <span>
#include <vector>

#include "meshgs/gaussian_model.hpp"
#include "meshgs/image_io.hpp"
#include "meshgs/renderer.hpp"

namespace meshgs {

/// Mean absolute difference over all pixels and channels.
double l1_loss(std::span<const double> a, std::span<const double> b);

/// Mean SSIM over pixels and channels of two interleaved RGB images, with an
/// 11x11 Gaussian window (sigma 1.5), zero padding, C1 = 0.01^2, C2 = 0.03^2.
/// When `grad_a` is given it receives dSSIM/da.
double ssim(std::span<const double> a, std::span<const double> b, int width, int height,
            std::span<double> grad_a = {});

/// Peak signal-to-noise ratio for a unit peak; +inf for identical inputs.
double psnr(std::span<const double> a, std::span<const double> b);

/// (1 - lambda) * L1 + lambda * (1 - SSIM). Throws Error(kInvalidArgument)
/// when the sizes differ. `grad` (optional) receives dLoss/d(rendered rgb).
double photometric_loss(const Framebuffer& rendered, const Image& target, double lambda_dssim,
                        std::vector<double>* grad = nullptr);

/// L_r = sum_g max(max(s_g) - gamma * R_g, 0) with R_g the circumradius of
/// g's face. `d_log_scale` (optional, one entry per Gaussian) receives
/// dL_r/d(log_scale).
double regularization_loss(const GaussianCloud& cloud, const TriangleMesh& mesh, double gamma,
                           std::vector<Vec3>* d_log_scale = nullptr);

}  // namespace meshgs
