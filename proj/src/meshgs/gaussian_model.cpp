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

#include "meshgs/gaussian_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "meshgs/error.hpp"

namespace meshgs {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec3 softmax(const Vec3& logits) {
  // Scalar exp: Eigen's packet exp clamps its argument, so saturated weights
  // would not reach exactly zero.
  const double m = logits.maxCoeff();
  const Vec3 e(std::exp(logits.x() - m), std::exp(logits.y() - m), std::exp(logits.z() - m));
  return e / e.sum();
}

Vec3 barycentric(const BoundGaussian& g) { return softmax(g.bary_logits); }
double normal_offset(const BoundGaussian& g) { return 0.5 * std::tanh(g.tau_logit); }
Vec3 scale(const BoundGaussian& g) { return g.log_scale.array().exp(); }
double opacity(const BoundGaussian& g) { return sigmoid(g.opacity_logit); }

Vec3 bary_logits_for(const Vec3& w) {
  if ((w.array() <= 0.0).any()) {
    throw Error(ErrorCode::kInvalidArgument, "barycentric weights must be positive");
  }
  return w.array().log();
}

double tau_logit_for(double tau) {
  if (!(std::abs(tau) < 0.5)) {
    throw Error(ErrorCode::kInvalidArgument, "normal offset must lie in (-0.5, 0.5)");
  }
  return std::atanh(2.0 * tau);
}

double opacity_logit_for(double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "opacity must lie in (0, 1)");
  }
  return std::log(sigma / (1.0 - sigma));
}

Mat3 quaternion_to_matrix(const Vec4& raw) {
  const Vec4 q = raw / raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 matrix_to_quaternion(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0.0) out = -out;
  return out / out.norm();
}

Vec3 world_position(const BoundGaussian& g, const TriangleMesh& mesh, const FaceFrame& frame) {
  const Face& face = mesh.faces()[g.face];
  const auto& v = mesh.vertices();
  const Vec3 w = barycentric(g);
  return (w[0] * v[face[0]] + w[1] * v[face[1]] + w[2] * v[face[2]]) +
         normal_offset(g) * frame.circumradius * frame.normal;
}

Vec3 world_position(const BoundGaussian& g, const TriangleMesh& mesh) {
  return world_position(g, mesh, mesh.face_frame(g.face));
}

Mat3 covariance(const BoundGaussian& g) {
  const Mat3 m = quaternion_to_matrix(g.rotation) * scale(g).asDiagonal();
  return m * m.transpose();
}

GaussianCloud init_from_mesh(const TriangleMesh& mesh, int sh_degree) {
  if (mesh.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot initialize from an empty mesh");
  if (sh_degree < 0 || sh_degree > kMaxShDegree) {
    throw Error(ErrorCode::kInvalidArgument, "sh_degree must be in [0, 3]");
  }
  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.mesh_hash = mesh.content_hash();
  cloud.gaussians.reserve(mesh.face_count());
  for (FaceId f = 0; f < mesh.face_count(); ++f) {
    const FaceFrame frame = mesh.face_frame(f);
    BoundGaussian g;
    g.face = f;
    g.log_scale.setConstant(std::log(0.5 * frame.circumradius));
    // DC coefficient 0 renders as the +0.5 offset, i.e. mid-gray.
    g.sh.assign(sh_coeff_count(sh_degree), Vec3::Zero());
    cloud.gaussians.push_back(std::move(g));
  }
  return cloud;
}

void validate_cloud(const GaussianCloud& cloud, const TriangleMesh& mesh) {
  const auto expected = static_cast<std::size_t>(sh_coeff_count(cloud.sh_degree));
  for (std::size_t i = 0; i < cloud.gaussians.size(); ++i) {
    const BoundGaussian& g = cloud.gaussians[i];
    if (g.face >= mesh.face_count()) {
      throw Error(ErrorCode::kInvalidArgument, "gaussian " + std::to_string(i) +
                                                   " is bound to missing face " +
                                                   std::to_string(g.face));
    }
    if (g.sh.size() != expected) {
      throw Error(ErrorCode::kInvalidArgument,
                  "gaussian " + std::to_string(i) + " has " + std::to_string(g.sh.size()) +
                      " SH coefficients, expected " + std::to_string(expected));
    }
  }
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "cloud serialization assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'G', 'S', 'C'};

class Writer {
 public:
  explicit Writer(std::vector<char>& buf) : buf_(buf) {}
  template <typename T>
  void put(T value) {
    const char* p = reinterpret_cast<const char*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_f32(double value) { put(static_cast<float>(value)); }

 private:
  std::vector<char>& buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& buf) : buf_(buf) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) {
      throw Error(ErrorCode::kParse, "truncated cloud file at byte " + std::to_string(pos_));
    }
    T value;
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  double get_f32() { return static_cast<double>(get<float>()); }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_cloud(const GaussianCloud& cloud, const std::filesystem::path& path) {
  std::vector<char> buf;
  Writer w(buf);
  for (char c : kMagic) w.put(c);
  w.put<std::uint32_t>(kCloudFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cloud.sh_degree));
  w.put<std::uint64_t>(cloud.gaussians.size());
  for (std::uint8_t b : cloud.mesh_hash) w.put(b);
  const auto k = static_cast<std::size_t>(sh_coeff_count(cloud.sh_degree));
  for (const BoundGaussian& g : cloud.gaussians) {
    w.put<std::uint32_t>(g.face);
    for (int i = 0; i < 3; ++i) w.put_f32(g.bary_logits[i]);
    w.put_f32(g.tau_logit);
    for (int i = 0; i < 3; ++i) w.put_f32(g.log_scale[i]);
    for (int i = 0; i < 4; ++i) w.put_f32(g.rotation[i]);
    w.put_f32(g.opacity_logit);
    for (std::size_t j = 0; j < k; ++j) {
      const Vec3 c = j < g.sh.size() ? g.sh[j] : Vec3::Zero();
      for (int i = 0; i < 3; ++i) w.put_f32(c[i]);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write cloud file " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing cloud file " + path.string());
}

CloudLoadResult load_cloud(const std::filesystem::path& path,
                           const ContentHash* expected_mesh_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open cloud file " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
  Reader r(buf);
  for (char c : kMagic) {
    if (r.get<char>() != c) throw Error(ErrorCode::kParse, "not a cloud file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCloudFormatVersion) {
    throw Error(ErrorCode::kVersion, "unsupported cloud format version " + std::to_string(version));
  }
  CloudLoadResult result;
  GaussianCloud& cloud = result.cloud;
  const auto degree = r.get<std::uint32_t>();
  if (degree > kMaxShDegree) {
    throw Error(ErrorCode::kParse, "invalid sh_degree " + std::to_string(degree));
  }
  cloud.sh_degree = static_cast<int>(degree);
  const auto count = r.get<std::uint64_t>();
  for (std::uint8_t& b : cloud.mesh_hash) b = r.get<std::uint8_t>();
  const auto k = static_cast<std::size_t>(sh_coeff_count(cloud.sh_degree));
  const std::size_t record = 4 + 4 * (12 + 3 * k);
  if (count > buf.size() / record) {
    throw Error(ErrorCode::kParse, "truncated cloud file: header claims " + std::to_string(count) +
                                       " gaussians");
  }
  cloud.gaussians.resize(count);
  for (BoundGaussian& g : cloud.gaussians) {
    g.face = r.get<std::uint32_t>();
    for (int i = 0; i < 3; ++i) g.bary_logits[i] = r.get_f32();
    g.tau_logit = r.get_f32();
    for (int i = 0; i < 3; ++i) g.log_scale[i] = r.get_f32();
    for (int i = 0; i < 4; ++i) g.rotation[i] = r.get_f32();
    g.opacity_logit = r.get_f32();
    g.sh.resize(k);
    for (Vec3& c : g.sh) {
      for (int i = 0; i < 3; ++i) c[i] = r.get_f32();
    }
  }
  if (!r.at_end()) throw Error(ErrorCode::kParse, "trailing bytes after cloud records");
  if (expected_mesh_hash && *expected_mesh_hash != cloud.mesh_hash) {
    result.warnings.push_back("cloud was bound to mesh " + hash_to_hex(cloud.mesh_hash) +
                              " but is being loaded against mesh " +
                              hash_to_hex(*expected_mesh_hash));
  }
  return result;
}

std::string hash_to_hex(const ContentHash& hash) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : hash) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

}  // namespace meshgs
