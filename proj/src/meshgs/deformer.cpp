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

#include "meshgs/deformer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "meshgs/error.hpp"
#include "meshgs/sh.hpp"

namespace meshgs {

void HandleSet::validate(const TriangleMesh& mesh) const {
  for (const auto& [v, target] : constrained) {
    if (v >= mesh.vertex_count()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "handle vertex " + std::to_string(v) + " out of range (mesh has " +
                      std::to_string(mesh.vertex_count()) + " vertices)");
    }
    if (!target.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "handle target for vertex " + std::to_string(v) +
                                                   " is not finite");
    }
  }
}

HandleSet handles_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() && j.contains("handles") ? j["handles"] : j;
  if (!list.is_array()) throw Error(ErrorCode::kParse, "handles must be a JSON array");
  HandleSet out;
  for (const auto& h : list) {
    if (!h.is_object() || !h.contains("vertex_index") || !h["vertex_index"].is_number_unsigned() ||
        !h.contains("target_xyz") || !h["target_xyz"].is_array() || h["target_xyz"].size() != 3) {
      throw Error(ErrorCode::kParse, "handle entries need vertex_index and target_xyz[3]");
    }
    const auto& t = h["target_xyz"];
    for (const auto& c : t) {
      if (!c.is_number()) throw Error(ErrorCode::kParse, "target_xyz must hold numbers");
    }
    out.constrained[h["vertex_index"].get<VertexId>()] =
        Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  }
  return out;
}

nlohmann::json handles_to_json(const HandleSet& handles) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [v, t] : handles.constrained) {
    list.push_back({{"vertex_index", v}, {"target_xyz", {t.x(), t.y(), t.z()}}});
  }
  return list;
}

HandleSet load_handles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "handle file not found: " + path.string());
  try {
    return handles_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed handle file " + path.string() + ": " + e.what());
  }
}

namespace {

Polar polar_svd(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  Polar p;
  p.rotation = u * v.transpose();
  const Mat3 s = p.rotation.transpose() * m;
  p.shear = 0.5 * (s + s.transpose());
  return p;
}

}  // namespace

Polar polar_decompose(const Mat3& m) {
  const double norm = m.norm();
  if (!(norm >= 1e-12)) throw Error(ErrorCode::kDegenerate, "polar decomposition of a zero matrix");
  const double det = m.determinant();
  // Newton's iteration X <- (X + X^-T) / 2 converges to the orthogonal
  // factor when det > 0 and M is not close to singular.
  if (det > 1e-6 * norm * norm * norm) {
    Mat3 x = m;
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
      const Mat3 next = 0.5 * (x + x.inverse().transpose());
      const double step = (next - x).norm();
      x = next;
      if (step <= 1e-15 * std::sqrt(3.0)) {
        converged = true;
        break;
      }
    }
    if (converged) {
      Polar p;
      p.rotation = x;
      const Mat3 s = x.transpose() * m;
      p.shear = 0.5 * (s + s.transpose());
      return p;
    }
  }
  return polar_svd(m);
}

namespace {

Eigen::Quaterniond to_quat(const Mat3& r) { return Eigen::Quaterniond(r).normalized(); }

Vec3 quat_log(const Eigen::Quaterniond& q) {
  const double s = q.vec().norm();
  if (s == 0.0) return Vec3::Zero();
  return (2.0 * std::atan2(s, q.w()) / s) * q.vec();
}

Eigen::Quaterniond quat_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta == 0.0) return Eigen::Quaterniond::Identity();
  const Vec3 v = (std::sin(0.5 * theta) / theta) * omega;
  return Eigen::Quaterniond(std::cos(0.5 * theta), v.x(), v.y(), v.z());
}

}  // namespace

Vec3 rotation_log(const Mat3& r) {
  Eigen::Quaterniond q = to_quat(r);
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return quat_log(q);
}

Mat3 rotation_exp(const Vec3& omega) {
  if (omega.isZero(0.0)) return Mat3::Identity();
  return quat_exp(omega).toRotationMatrix();
}

BlendedRotation blend_rotations(const std::array<Mat3, 3>& rotations, const Vec3& w) {
  BlendedRotation out;
  std::array<Eigen::Quaterniond, 3> q;
  for (int k = 0; k < 3; ++k) q[k] = to_quat(rotations[k]);
  if (q[0].w() < 0.0) q[0].coeffs() *= -1.0;
  for (int k = 1; k < 3; ++k) {
    if (q[k].dot(q[0]) < 0.0) q[k].coeffs() *= -1.0;
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      if (w[a] <= 0.0 || w[b] <= 0.0) continue;
      const double angle = 2.0 * std::acos(std::min(1.0, std::abs(q[a].dot(q[b]))));
      if (angle >= M_PI - 1e-9) out.ambiguous = true;
    }
  }
  for (int k = 0; k < 3; ++k) {
    if (w[k] == 1.0) {
      out.rotation = rotations[k];
      return out;
    }
  }
  Vec3 omega = Vec3::Zero();
  for (int k = 0; k < 3; ++k) omega += w[k] * quat_log(q[k]);
  out.rotation = rotation_exp(omega);
  return out;
}

namespace {

struct RingNormal {
  Vec3 unit = Vec3::Zero();
  double area = 0.0;
};

RingNormal ring_normal(const TriangleMesh& mesh, VertexId v, const std::vector<Vec3>& pos) {
  Vec3 sum = Vec3::Zero();
  double area = 0.0;
  for (FaceId f : mesh.incident_faces(v)) {
    const Face& face = mesh.faces()[f];
    const Vec3 c = (pos[face[1]] - pos[face[0]]).cross(pos[face[2]] - pos[face[0]]);
    sum += c;
    area += 0.5 * c.norm();
  }
  RingNormal out;
  out.area = area;
  const double len = sum.norm();
  if (len > 0.0) out.unit = sum / len;
  return out;
}

}  // namespace

VertexGradients vertex_gradients(const TriangleMesh& mesh, const EdgeWeights& weights,
                                 const std::vector<Vec3>& deformed) {
  const std::size_t n = mesh.vertex_count();
  if (deformed.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "deformed vertex count does not match the mesh");
  }
  const auto& rest = mesh.vertices();
  VertexGradients out;
  out.transforms.assign(n, Mat3::Identity());
  out.fallback.assign(n, false);

  for (VertexId i = 0; i < n; ++i) {
    const auto& ring = mesh.neighbors(i);
    if (ring.empty()) {
      out.fallback[i] = true;
      continue;
    }
    Mat3 c = Mat3::Zero();
    Mat3 d = Mat3::Zero();  // sum w (e' - e) e^T
    double mean_len = 0.0;
    double mean_w = 0.0;
    for (VertexId j : ring) {
      const double w = weights(i, j);
      const Vec3 e = rest[i] - rest[j];
      const Vec3 e_def = deformed[i] - deformed[j];
      c += w * e * e.transpose();
      d += w * (e_def - e) * e.transpose();
      mean_len += e.norm();
      mean_w += w;
    }
    mean_len /= static_cast<double>(ring.size());
    mean_w /= static_cast<double>(ring.size());

    const RingNormal nr = ring_normal(mesh, i, rest);
    const RingNormal nd = ring_normal(mesh, i, deformed);
    if (nr.area > 0.0 && nd.area > 0.0) {
      const Vec3 nv = mean_len * nr.unit;
      const Vec3 nv_def = (mean_len * std::sqrt(nd.area / nr.area)) * nd.unit;
      c += mean_w * nv * nv.transpose();
      d += mean_w * (nv_def - nv) * nv.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(c, Eigen::EigenvaluesOnly);
    const Vec3 ev = eig.eigenvalues();
    if (!(ev[0] > 1e-10 * ev[2])) {
      out.fallback[i] = true;
      continue;
    }
    out.transforms[i] = Mat3::Identity() + d * c.inverse();
  }

  // Breadth-first search for the nearest vertex with a determined T.
  for (VertexId i = 0; i < n; ++i) {
    if (!out.fallback[i]) continue;
    std::vector<bool> seen(n, false);
    std::deque<VertexId> queue{i};
    seen[i] = true;
    std::optional<VertexId> found;
    while (!queue.empty() && !found) {
      const VertexId v = queue.front();
      queue.pop_front();
      std::vector<VertexId> ring = mesh.neighbors(v);
      std::sort(ring.begin(), ring.end(), [&](VertexId a, VertexId b) {
        return (rest[a] - rest[v]).squaredNorm() < (rest[b] - rest[v]).squaredNorm();
      });
      for (VertexId u : ring) {
        if (seen[u]) continue;
        seen[u] = true;
        if (!out.fallback[u]) {
          found = u;
          break;
        }
        queue.push_back(u);
      }
    }
    if (found) out.transforms[i] = out.transforms[*found];
  }

  out.rotations.resize(n);
  out.shears.resize(n);
  for (VertexId i = 0; i < n; ++i) {
    const Polar p = polar_decompose(out.transforms[i]);
    out.rotations[i] = p.rotation;
    out.shears[i] = p.shear;
  }
  return out;
}

DeformState identity_state(const TriangleMesh& mesh) {
  DeformState s;
  const std::size_t n = mesh.vertex_count();
  s.vertices = mesh.vertices();
  s.rotation_quats.assign(n, Vec4(1.0, 0.0, 0.0, 0.0));
  s.rotations.assign(n, Mat3::Identity());
  s.shears.assign(n, Mat3::Identity());
  s.fallback.assign(n, false);
  return s;
}

namespace {

void check_vertex_fans(const TriangleMesh& mesh) {
  for (VertexId v = 0; v < mesh.vertex_count(); ++v) {
    const auto& faces = mesh.incident_faces(v);
    if (faces.size() < 2) continue;
    std::vector<int> parent(faces.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t a = 0; a < faces.size(); ++a) {
      for (std::size_t b = a + 1; b < faces.size(); ++b) {
        const Face& fa = mesh.faces()[faces[a]];
        const Face& fb = mesh.faces()[faces[b]];
        int shared = 0;
        for (VertexId x : fa) {
          if (x != v && std::find(fb.begin(), fb.end(), x) != fb.end()) ++shared;
        }
        if (shared > 0) parent[find(static_cast<int>(a))] = find(static_cast<int>(b));
      }
    }
    for (std::size_t a = 1; a < faces.size(); ++a) {
      if (find(static_cast<int>(a)) != find(0)) {
        throw Error(ErrorCode::kSolve, "non-manifold neighbourhood at vertex " + std::to_string(v));
      }
    }
  }
}

}  // namespace

ArapSolver::ArapSolver(const TriangleMesh& mesh) : mesh_(mesh) {
  weights_ = cotangent_weights(mesh_);
  check_vertex_fans(mesh_);
  const std::size_t n = mesh_.vertex_count();
  neighbor_weights_.resize(n);
  for (VertexId i = 0; i < n; ++i) {
    for (VertexId j : mesh_.neighbors(i)) neighbor_weights_[i].push_back(weights_(i, j));
  }
  component_.assign(n, -1);
  int next = 0;
  for (VertexId s = 0; s < n; ++s) {
    if (component_[s] >= 0) continue;
    std::vector<VertexId> stack{s};
    component_[s] = next;
    while (!stack.empty()) {
      const VertexId v = stack.back();
      stack.pop_back();
      for (VertexId u : mesh_.neighbors(v)) {
        if (component_[u] < 0) {
          component_[u] = next;
          stack.push_back(u);
        }
      }
    }
    ++next;
  }
}

std::vector<Mat3> ArapSolver::local_step(const std::vector<Vec3>& deformed) const {
  const auto& rest = mesh_.vertices();
  std::vector<Mat3> rotations(rest.size(), Mat3::Identity());
  for (VertexId i = 0; i < rest.size(); ++i) {
    Mat3 cov = Mat3::Zero();
    const auto& nbrs = mesh_.neighbors(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const VertexId j = nbrs[k];
      cov += neighbor_weights_[i][k] * (rest[i] - rest[j]) * (deformed[i] - deformed[j]).transpose();
    }
    if (cov.isZero(0.0)) continue;
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 r = svd.matrixV() * u.transpose();
    if (r.determinant() < 0.0) {
      u.col(2) *= -1.0;
      r = svd.matrixV() * u.transpose();
    }
    rotations[i] = r;
  }
  return rotations;
}

double ArapSolver::energy(const std::vector<Vec3>& deformed,
                          const std::vector<Mat3>& rotations) const {
  const auto& rest = mesh_.vertices();
  double e = 0.0;
  for (VertexId i = 0; i < rest.size(); ++i) {
    const auto& nbrs = mesh_.neighbors(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const VertexId j = nbrs[k];
      e += neighbor_weights_[i][k] *
           ((deformed[i] - deformed[j]) - rotations[i] * (rest[i] - rest[j])).squaredNorm();
    }
  }
  return e;
}

void ArapSolver::factorize(const HandleSet& handles) {
  const std::size_t n = mesh_.vertex_count();
  std::vector<bool> anchored(*std::max_element(component_.begin(), component_.end()) + 1, false);
  constrained_ids_.clear();
  for (const auto& [v, target] : handles.constrained) {
    constrained_ids_.push_back(v);
    anchored[component_[v]] = true;
  }
  free_index_.assign(n, -1);
  free_ids_.clear();
  for (VertexId v = 0; v < n; ++v) {
    if (handles.constrained.count(v) || mesh_.neighbors(v).empty()) continue;
    if (!anchored[component_[v]]) {
      ldlt_.reset();
      throw Error(ErrorCode::kSolve, "singular system: vertex " + std::to_string(v) +
                                         " lies in a component without constrained vertices");
    }
    free_index_[v] = static_cast<int>(free_ids_.size());
    free_ids_.push_back(v);
  }

  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t a = 0; a < free_ids_.size(); ++a) {
    const VertexId i = free_ids_[a];
    double diag = 0.0;
    for (VertexId j : mesh_.neighbors(i)) {
      const double w = weights_(i, j);
      diag += w;
      if (free_index_[j] >= 0) triplets.emplace_back(static_cast<int>(a), free_index_[j], -w);
    }
    triplets.emplace_back(static_cast<int>(a), static_cast<int>(a), diag);
  }
  Eigen::SparseMatrix<double> l(static_cast<Eigen::Index>(free_ids_.size()),
                                static_cast<Eigen::Index>(free_ids_.size()));
  l.setFromTriplets(triplets.begin(), triplets.end());
  ldlt_.emplace();
  if (!free_ids_.empty()) {
    ldlt_->compute(l);
    if (ldlt_->info() != Eigen::Success) {
      ldlt_.reset();
      throw Error(ErrorCode::kSolve, "sparse Cholesky factorization failed");
    }
  }
}

ArapResult ArapSolver::solve(const HandleSet& handles, const SolveOptions& options) {
  if (handles.empty()) {
    throw Error(ErrorCode::kSolve, "no constrained vertices: the system is singular");
  }
  handles.validate(mesh_);
  std::vector<VertexId> ids;
  for (const auto& [v, target] : handles.constrained) ids.push_back(v);
  if (!ldlt_ || ids != constrained_ids_) factorize(handles);

  const auto& rest = mesh_.vertices();
  ArapResult result;
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(free_ids_.size()), 3);
  auto global_step = [&]() {
    for (std::size_t a = 0; a < free_ids_.size(); ++a) {
      const VertexId i = free_ids_[a];
      Vec3 b = Vec3::Zero();
      const auto& nbrs = mesh_.neighbors(i);
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const VertexId j = nbrs[k];
        const double w = neighbor_weights_[i][k];
        b += 0.5 * w * (result.rotations[i] + result.rotations[j]) * (rest[i] - rest[j]);
        if (free_index_[j] < 0) b += w * result.positions[j];
      }
      rhs.row(static_cast<Eigen::Index>(a)) = b.transpose();
    }
    const Eigen::MatrixXd x = ldlt_->solve(rhs);
    if (ldlt_->info() != Eigen::Success || !x.allFinite()) {
      throw Error(ErrorCode::kSolve, "back-substitution failed");
    }
    for (std::size_t a = 0; a < free_ids_.size(); ++a) {
      result.positions[free_ids_[a]] = x.row(static_cast<Eigen::Index>(a)).transpose();
    }
  };

  const bool cold = warm_.empty();
  result.positions = cold ? rest : warm_;
  for (const auto& [v, target] : handles.constrained) result.positions[v] = target;
  if (cold && !free_ids_.empty()) {
    // Laplacian editing (all rotations identity) as the initial guess.
    result.rotations.assign(rest.size(), Mat3::Identity());
    global_step();
  }
  result.rotations = local_step(result.positions);
  result.energy = energy(result.positions, result.rotations);
  result.history.push_back(result.energy);

  for (int it = 0; it < options.max_iters && !free_ids_.empty(); ++it) {
    global_step();
    result.rotations = local_step(result.positions);
    const double e = energy(result.positions, result.rotations);
    result.history.push_back(e);
    ++result.iterations;
    const double previous = result.energy;
    result.energy = e;
    if (previous - e <= options.tol * previous) break;
  }
  warm_ = result.positions;
  return result;
}

DeformState make_state(const TriangleMesh& mesh, const EdgeWeights& weights,
                       const ArapResult& result) {
  DeformState s;
  s.vertices = result.positions;
  VertexGradients grads = vertex_gradients(mesh, weights, s.vertices);
  s.rotations = std::move(grads.rotations);
  s.shears = std::move(grads.shears);
  s.fallback = std::move(grads.fallback);
  s.rotation_quats.reserve(s.rotations.size());
  for (const Mat3& r : s.rotations) s.rotation_quats.push_back(matrix_to_quaternion(r));
  s.energy = result.energy;
  s.iterations = result.iterations;
  s.energy_history = result.history;
  return s;
}

DeformState arap_solve(const TriangleMesh& mesh, const HandleSet& handles, int max_iters,
                       double tol) {
  ArapSolver solver(mesh);
  const ArapResult result = solver.solve(handles, SolveOptions{max_iters, tol});
  return make_state(mesh, solver.weights(), result);
}

TransferResult transfer(const GaussianCloud& cloud, const TriangleMesh& mesh,
                        const DeformState& state, const TransferOptions& options) {
  validate_cloud(cloud, mesh);
  if (state.vertices.size() != mesh.vertex_count() ||
      state.rotations.size() != mesh.vertex_count() || state.shears.size() != mesh.vertex_count()) {
    throw Error(ErrorCode::kInvalidArgument, "deform state does not cover the mesh");
  }
  const auto& rest = mesh.vertices();
  TransferResult out;
  out.splats.resize(cloud.size());
  std::vector<FaceFrame> frames(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) frames[i] = mesh.face_frame(cloud.gaussians[i].face);
  std::size_t ambiguous = 0;
#pragma omp parallel for reduction(+ : ambiguous)
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    const Face& f = mesh.faces()[g.face];
    const FaceFrame& frame = frames[i];
    const Vec3 w = barycentric(g);
    Vec3 delta = Vec3::Zero();
    for (int k = 0; k < 3; ++k) delta += w[k] * (state.vertices[f[k]] - rest[f[k]]);
    const BlendedRotation rb = blend_rotations(
        {state.rotations[f[0]], state.rotations[f[1]], state.rotations[f[2]]}, w);
    if (rb.ambiguous) ++ambiguous;
    Mat3 sb = Mat3::Identity();
    for (int k = 0; k < 3; ++k) sb += w[k] * (state.shears[f[k]] - Mat3::Identity());
    const Mat3 t = rb.rotation * sb;

    Splat& s = out.splats[i];
    s.mean = world_position(g, mesh, frame) + delta;
    if (options.rotate_normal_offset) {
      s.mean += normal_offset(g) * frame.circumradius * (rb.rotation * frame.normal - frame.normal);
    }
    s.cov = t * covariance(g) * t.transpose();
    s.opacity = opacity(g);
    s.sh = g.sh;
    s.sh_rotation = rb.rotation;
  }
  out.ambiguous_blends = ambiguous;
  return out;
}

BakedScene bake(const GaussianCloud& cloud, const TriangleMesh& mesh, const DeformState& state,
                const TransferOptions& options) {
  const TransferResult moved = transfer(cloud, mesh, state, options);
  BakedScene out;
  out.mesh = TriangleMesh(state.vertices, mesh.faces());
  out.cloud.sh_degree = cloud.sh_degree;
  out.cloud.mesh_hash = out.mesh.content_hash();
  out.cloud.gaussians.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    const Splat& s = moved.splats[i];
    const Face& f = mesh.faces()[g.face];
    const FaceFrame frame = out.mesh.face_frame(g.face);
    const Vec3 w = barycentric(g);
    Vec3 foot = Vec3::Zero();
    for (int k = 0; k < 3; ++k) foot += w[k] * state.vertices[f[k]];

    BoundGaussian b = g;
    const double tau = (s.mean - foot).dot(frame.normal) / frame.circumradius;
    b.tau_logit = tau_logit_for(std::clamp(tau, -0.4999, 0.4999));
    Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (s.cov + s.cov.transpose()));
    Mat3 axes = eig.eigenvectors();
    if (axes.determinant() < 0.0) axes.col(0) *= -1.0;
    b.rotation = matrix_to_quaternion(axes);
    for (int k = 0; k < 3; ++k) b.log_scale[k] = 0.5 * std::log(std::max(eig.eigenvalues()[k], 1e-30));
    b.sh = rotate_sh(cloud.sh_degree, g.sh, s.sh_rotation);
    out.cloud.gaussians.push_back(std::move(b));
  }
  return out;
}

}  // namespace meshgs
