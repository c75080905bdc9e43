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

#include "meshgs/mesh.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "meshgs/error.hpp"

namespace meshgs {
namespace {

void insert_sorted(std::vector<std::uint32_t>& list, std::uint32_t value) {
  auto it = std::lower_bound(list.begin(), list.end(), value);
  if (it == list.end() || *it != value) list.insert(it, value);
}

void erase_sorted(std::vector<std::uint32_t>& list, std::uint32_t value) {
  auto it = std::lower_bound(list.begin(), list.end(), value);
  if (it != list.end() && *it == value) list.erase(it);
}

bool face_has(const Face& f, VertexId v) { return f[0] == v || f[1] == v || f[2] == v; }

// |cross| below this fraction of the longest squared edge counts as zero area.
constexpr double kDegenerateRelArea = 1e-14;

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  validate_faces();
  rebuild_adjacency();
}

void TriangleMesh::validate_faces() const {
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& face = faces_[f];
    for (VertexId v : face) {
      if (v >= vertices_.size()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                        " out of range");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "face " + std::to_string(f) + " repeats a vertex index");
    }
  }
}

void TriangleMesh::rebuild_adjacency() {
  adjacency_.assign(vertices_.size(), {});
  vertex_faces_.assign(vertices_.size(), {});
  for (FaceId f = 0; f < faces_.size(); ++f) {
    const Face& face = faces_[f];
    for (int k = 0; k < 3; ++k) {
      VertexId a = face[k];
      VertexId b = face[(k + 1) % 3];
      insert_sorted(adjacency_[a], b);
      insert_sorted(adjacency_[b], a);
      insert_sorted(vertex_faces_[a], f);
    }
  }
}

FaceFrame TriangleMesh::face_frame(FaceId f) const {
  if (f >= faces_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "face index " + std::to_string(f) + " out of range");
  }
  const Vec3& a = vertices_[faces_[f][0]];
  const Vec3& b = vertices_[faces_[f][1]];
  const Vec3& c = vertices_[faces_[f][2]];
  const Vec3 cross = (b - a).cross(c - a);
  const double la = (c - b).norm();
  const double lb = (a - c).norm();
  const double lc = (b - a).norm();
  const double longest = std::max({la, lb, lc});
  const double twice_area = cross.norm();
  if (!(twice_area > kDegenerateRelArea * longest * longest)) {
    throw Error(ErrorCode::kDegenerate, "degenerate face " + std::to_string(f));
  }
  FaceFrame frame;
  frame.normal = cross / twice_area;
  frame.area = 0.5 * twice_area;
  frame.circumradius = (la * lb * lc) / (4.0 * frame.area);
  frame.centroid = (a + b + c) / 3.0;
  return frame;
}

std::array<FaceId, 4> TriangleMesh::split_face(FaceId f) {
  if (f >= faces_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "face index " + std::to_string(f) + " out of range");
  }
  const Face parent = faces_[f];
  auto midpoint = [this](VertexId i, VertexId j) {
    const std::uint64_t key = edge_key(i, j);
    if (auto it = midpoints_.find(key); it != midpoints_.end()) return it->second;
    const auto id = static_cast<VertexId>(vertices_.size());
    vertices_.push_back(0.5 * (vertices_[i] + vertices_[j]));
    adjacency_.emplace_back();
    vertex_faces_.emplace_back();
    midpoints_.emplace(key, id);
    return id;
  };
  const VertexId a = parent[0], b = parent[1], c = parent[2];
  const VertexId mab = midpoint(a, b);
  const VertexId mbc = midpoint(b, c);
  const VertexId mca = midpoint(c, a);

  const std::array<Face, 4> children = {Face{a, mab, mca}, Face{mab, b, mbc}, Face{mca, mbc, c},
                                        Face{mab, mbc, mca}};
  const auto base = static_cast<FaceId>(faces_.size());
  const std::array<FaceId, 4> ids = {f, base, base + 1, base + 2};
  faces_[f] = children[0];
  for (int k = 1; k < 4; ++k) faces_.push_back(children[k]);

  for (VertexId v : parent) erase_sorted(vertex_faces_[v], f);
  // A parent edge survives only if another face still uses it (an unsplit
  // neighbour across that edge).
  for (int k = 0; k < 3; ++k) {
    const VertexId u = parent[k];
    const VertexId v = parent[(k + 1) % 3];
    bool still_used = false;
    for (FaceId g : vertex_faces_[u]) {
      if (face_has(faces_[g], v)) {
        still_used = true;
        break;
      }
    }
    if (!still_used) {
      erase_sorted(adjacency_[u], v);
      erase_sorted(adjacency_[v], u);
    }
  }
  for (int k = 0; k < 4; ++k) {
    const Face& face = children[k];
    for (int e = 0; e < 3; ++e) {
      const VertexId u = face[e];
      const VertexId v = face[(e + 1) % 3];
      insert_sorted(adjacency_[u], v);
      insert_sorted(adjacency_[v], u);
      insert_sorted(vertex_faces_[u], ids[k]);
    }
  }
  ++revision_;
  return ids;
}

ContentHash TriangleMesh::content_hash() const {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  auto put_u64 = [ctx](std::uint64_t value) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    EVP_DigestUpdate(ctx, bytes, 8);
  };
  put_u64(vertices_.size());
  put_u64(faces_.size());
  for (const Vec3& v : vertices_) {
    for (int k = 0; k < 3; ++k) {
      std::uint64_t bits;
      const double value = v[k];
      std::memcpy(&bits, &value, sizeof(bits));
      put_u64(bits);
    }
  }
  for (const Face& face : faces_) {
    for (VertexId v : face) {
      unsigned char bytes[4];
      for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
      EVP_DigestUpdate(ctx, bytes, 4);
    }
  }
  ContentHash hash{};
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, hash.data(), &length);
  EVP_MD_CTX_free(ctx);
  return hash;
}

double EdgeWeights::operator()(VertexId i, VertexId j) const {
  auto it = weights_.find(edge_key(i, j));
  if (it == weights_.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no edge between vertices " + std::to_string(i) + " and " + std::to_string(j));
  }
  return it->second;
}

EdgeWeights cotangent_weights(const TriangleMesh& mesh) {
  EdgeWeights result;
  std::unordered_map<std::uint64_t, int> face_count;
  const auto& verts = mesh.vertices();
  const auto& faces = mesh.faces();
  result.weights_.reserve(faces.size() * 2);
  for (FaceId f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    const Vec3 cross = (verts[face[1]] - verts[face[0]]).cross(verts[face[2]] - verts[face[0]]);
    double longest2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      longest2 = std::max(longest2, (verts[face[(k + 1) % 3]] - verts[face[k]]).squaredNorm());
    }
    const double twice_area = cross.norm();
    if (!(twice_area > kDegenerateRelArea * longest2)) {
      throw Error(ErrorCode::kDegenerate, "degenerate face " + std::to_string(f));
    }
    for (int k = 0; k < 3; ++k) {
      // Angle at corner k is opposite edge (k+1, k+2).
      const VertexId o = face[k];
      const VertexId i = face[(k + 1) % 3];
      const VertexId j = face[(k + 2) % 3];
      const Vec3 u = verts[i] - verts[o];
      const Vec3 v = verts[j] - verts[o];
      const double cot = u.dot(v) / twice_area;
      const std::uint64_t key = edge_key(i, j);
      result.weights_[key] += 0.5 * cot;
      if (++face_count[key] > 2) {
        throw Error(ErrorCode::kSolve, "non-manifold edge (" + std::to_string(i) + ", " +
                                           std::to_string(j) + ") at face " + std::to_string(f));
      }
    }
  }
  for (auto& [key, w] : result.weights_) w = std::max(w, kMinCotangentWeight);
  return result;
}

double surface_area(const TriangleMesh& mesh) {
  double total = 0.0;
  const auto& verts = mesh.vertices();
  for (const Face& face : mesh.faces()) {
    total += 0.5 * (verts[face[1]] - verts[face[0]]).cross(verts[face[2]] - verts[face[0]]).norm();
  }
  return total;
}

TriangleMesh parse_obj(std::istream& in) {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&line_no](const std::string& what) {
    throw Error(ErrorCode::kParse, what + " at line " + std::to_string(line_no));
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string tag;
    if (!(tokens >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(tokens >> p.x() >> p.y() >> p.z())) fail("malformed vertex");
      vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::int64_t> ids;
      std::string item;
      while (tokens >> item) {
        const std::string head = item.substr(0, item.find('/'));
        std::size_t used = 0;
        std::int64_t id = 0;
        try {
          id = std::stoll(head, &used);
        } catch (const std::exception&) {
          fail("malformed face index '" + item + "'");
        }
        if (used != head.size() || id == 0) fail("malformed face index '" + item + "'");
        // Negative indices count back from the most recent vertex.
        if (id < 0) id = static_cast<std::int64_t>(vertices.size()) + id + 1;
        if (id < 1 || id > static_cast<std::int64_t>(vertices.size())) {
          fail("face index " + head + " out of range");
        }
        ids.push_back(id - 1);
      }
      if (ids.size() != 3) fail("non-triangular face");
      Face face{static_cast<VertexId>(ids[0]), static_cast<VertexId>(ids[1]),
                static_cast<VertexId>(ids[2])};
      if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
        fail("face repeats a vertex");
      }
      faces.push_back(face);
    }
    // vn, vt, o, g, s, usemtl, mtllib: ignored.
  }
  return TriangleMesh(std::move(vertices), std::move(faces));
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open OBJ file " + path.string());
  return parse_obj(in);
}

void save_obj(const std::vector<Vec3>& vertices, const std::vector<Face>& faces,
              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write OBJ file " + path.string());
  out << std::setprecision(17);
  for (const Vec3& v : vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Face& f : faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing OBJ file " + path.string());
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  save_obj(mesh.vertices(), mesh.faces(), path);
}

}  // namespace meshgs
