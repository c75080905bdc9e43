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
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/SparseCholesky>

#include "json.hpp"
#include "meshgs/gaussian_model.hpp"
#include "meshgs/mesh.hpp"
#include "meshgs/renderer.hpp"

namespace meshgs {

/// Constrained vertices (fixed anchors and dragged handles) and their targets.
struct HandleSet {
  std::map<VertexId, Vec3> constrained;

  bool empty() const { return constrained.empty(); }
  /// Throws Error(kInvalidArgument) for an index outside the mesh.
  void validate(const TriangleMesh& mesh) const;
};

HandleSet handles_from_json(const nlohmann::json& j);
nlohmann::json handles_to_json(const HandleSet& handles);
HandleSet load_handles(const std::filesystem::path& path);

struct Polar {
  Mat3 rotation;  // det +1
  Mat3 shear;     // symmetric
};

/// M = R S. Throws Error(kDegenerate) when |M| < 1e-12. A reflection in M
/// is folded into S, which then has one negative eigenvalue.
Polar polar_decompose(const Mat3& m);

struct BlendedRotation {
  Mat3 rotation;
  /// Two inputs are at least pi apart, so the log map is ambiguous.
  bool ambiguous = false;
};

/// exp(sum_k w_k log R_k), quaternions aligned to the first one's hemisphere.
BlendedRotation blend_rotations(const std::array<Mat3, 3>& rotations, const Vec3& w);

Vec3 rotation_log(const Mat3& r);
Mat3 rotation_exp(const Vec3& omega);

struct VertexGradients {
  std::vector<Mat3> transforms;
  std::vector<Mat3> rotations;
  std::vector<Mat3> shears;
  /// The 1-ring could not determine T; it was copied from a neighbour.
  std::vector<bool> fallback;
};

/// Weighted 1-ring least-squares fit of T_i followed by polar decomposition.
/// The fit includes the vertex normal as an extra edge so flat 1-rings are
/// well posed.
VertexGradients vertex_gradients(const TriangleMesh& mesh, const EdgeWeights& weights,
                                 const std::vector<Vec3>& deformed);

struct DeformState {
  std::vector<Vec3> vertices;
  std::vector<Vec4> rotation_quats;  // (w, x, y, z)
  std::vector<Mat3> rotations;
  std::vector<Mat3> shears;
  std::vector<bool> fallback;
  double energy = 0.0;
  int iterations = 0;
  std::vector<double> energy_history;

  bool empty() const { return vertices.empty(); }
};

/// The rest pose: v' = v, R = I, S = I.
DeformState identity_state(const TriangleMesh& mesh);

struct SolveOptions {
  int max_iters = 20;
  /// Stop when the relative energy decrease of one iteration drops below this.
  double tol = 1e-6;
};

inline constexpr int kInteractiveIterations = 4;

struct ArapResult {
  std::vector<Vec3> positions;
  std::vector<Mat3> rotations;
  double energy = 0.0;
  int iterations = 0;
  /// Energy after each local step, starting with the initial guess.
  std::vector<double> history;
};

class ArapSolver {
 public:
  /// Throws Error(kSolve) for a non-manifold mesh, Error(kDegenerate) for a
  /// zero-area face.
  explicit ArapSolver(const TriangleMesh& mesh);

  /// Starts from the previous solution with constrained vertices moved to
  /// their targets, or from the Laplacian-editing solution when there is no
  /// previous solution. Throws Error(kSolve) if some connected
  /// component has no constrained vertex.
  ArapResult solve(const HandleSet& handles, const SolveOptions& options = {});

  void reset_warm_start() { warm_.clear(); }
  const EdgeWeights& weights() const { return weights_; }
  const TriangleMesh& mesh() const { return mesh_; }

  /// Best-fit rotations for the given deformed positions.
  std::vector<Mat3> local_step(const std::vector<Vec3>& deformed) const;
  double energy(const std::vector<Vec3>& deformed, const std::vector<Mat3>& rotations) const;

 private:
  void factorize(const HandleSet& handles);

  TriangleMesh mesh_;
  EdgeWeights weights_;
  // weights_ laid out parallel to mesh_.neighbors(i).
  std::vector<std::vector<double>> neighbor_weights_;
  std::vector<int> component_;
  std::vector<Vec3> warm_;

  // Cached per constrained-vertex set.
  std::vector<VertexId> constrained_ids_;
  std::vector<int> free_index_;  // -1 for constrained vertices
  std::vector<VertexId> free_ids_;
  std::optional<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

/// One converged solve from the rest pose, then per-vertex gradients.
DeformState arap_solve(const TriangleMesh& mesh, const HandleSet& handles,
                       int max_iters = SolveOptions{}.max_iters, double tol = SolveOptions{}.tol);

/// Builds a DeformState from a solver result.
DeformState make_state(const TriangleMesh& mesh, const EdgeWeights& weights,
                       const ArapResult& result);

struct TransferOptions {
  /// Rotate the tau R n offset by the blended rotation.
  bool rotate_normal_offset = true;
};

struct TransferResult {
  std::vector<Splat> splats;
  std::size_t ambiguous_blends = 0;
};

/// Deformed splats for a cloud bound to the rest mesh. The splats reference
/// the cloud's SH coefficients.
TransferResult transfer(const GaussianCloud& cloud, const TriangleMesh& mesh,
                        const DeformState& state, const TransferOptions& options = {});

struct BakedScene {
  TriangleMesh mesh;
  GaussianCloud cloud;
};

/// Rebinds transferred Gaussians to the deformed mesh: barycentric weights
/// are kept, the offset is projected on the deformed face normal, the
/// covariance is re-factored and SH coefficients are rotated.
BakedScene bake(const GaussianCloud& cloud, const TriangleMesh& mesh, const DeformState& state,
                const TransferOptions& options = {});

}  // namespace meshgs
