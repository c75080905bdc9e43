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

#include "meshgs/types.hpp"

namespace meshgs {

inline constexpr int kMaxShDegree = 3;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real SH basis values Y_lm(dir) for bands 0..degree, written to `out`
/// (sh_coeff_count(degree) entries). `dir` need not be normalized; the
/// polynomials are evaluated on the raw components.
void sh_basis(int degree, const Vec3& dir, std::span<double> out);

/// Derivative of every basis polynomial with respect to the raw direction
/// components; `out` receives sh_coeff_count(degree) gradients.
void sh_basis_gradient(int degree, const Vec3& dir, std::span<Vec3> out);

/// sum_lm Y_lm(d) c_lm without offset or clamping.
Vec3 eval_sh_raw(int degree, std::span<const Vec3> coeffs, const Vec3& dir);

/// View-dependent colour: sum_lm Y_lm(d) c_lm + 0.5, clamped to [0, 1].
/// `dir` must be unit length.
Vec3 eval_sh(int degree, std::span<const Vec3> coeffs, const Vec3& dir);

/// Coefficients c' with eval_sh(c', d) == eval_sh(c, r^T d) for every d.
std::vector<Vec3> rotate_sh(int degree, std::span<const Vec3> coeffs, const Mat3& r);

}  // namespace meshgs
