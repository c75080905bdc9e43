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

#include "meshgs/protocol.hpp"

#include <openssl/evp.h>

#include <type_traits>

#include "meshgs/error.hpp"

namespace meshgs::protocol {

using nlohmann::json;

bool SetCamera::operator==(const SetCamera& o) const {
  const Camera& a = camera;
  const Camera& b = o.camera;
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
         a.height == b.height && a.rotation == b.rotation && a.translation == b.translation;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::kProtocol, msg); }

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::uint64_t count(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

VertexId vertex(const json& j) {
  const std::uint64_t v = count(j, "vertex");
  if (v > 0xffffffffULL) fail("vertex index out of range");
  return static_cast<VertexId>(v);
}

Vec3 vec3(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_array() || v.size() != 3) fail(std::string("field '") + key + "' must be [x, y, z]");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number()) fail(std::string("field '") + key + "' must hold numbers");
    out[i] = v[i].get<double>();
  }
  if (!out.allFinite()) fail(std::string("field '") + key + "' must be finite");
  return out;
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Camera camera_from(const json& j) {
  const json& in = field(j, "intrinsics");
  const json& pose = field(j, "pose");
  if (!in.is_object()) fail("intrinsics must be an object");
  if (!pose.is_array() || pose.size() != 4) fail("pose must be a 4x4 array");
  Camera cam;
  cam.fx = number(in, "fx");
  cam.fy = number(in, "fy");
  cam.cx = number(in, "cx");
  cam.cy = number(in, "cy");
  cam.width = static_cast<int>(count(in, "width"));
  cam.height = static_cast<int>(count(in, "height"));
  for (int r = 0; r < 4; ++r) {
    if (!pose[r].is_array() || pose[r].size() != 4) fail("pose rows must have 4 entries");
    for (int c = 0; c < 4; ++c) {
      if (!pose[r][c].is_number()) fail("pose must hold numbers");
      const double v = pose[r][c].get<double>();
      if (r < 3) {
        if (c < 3) cam.rotation(r, c) = v;
        else cam.translation[r] = v;
      }
    }
  }
  try {
    cam.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  return cam;
}

json camera_json(const Camera& cam) {
  json pose = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) {
      if (r < 3) row.push_back(c < 3 ? cam.rotation(r, c) : cam.translation[r]);
      else row.push_back(c < 3 ? 0.0 : 1.0);
    }
    pose.push_back(row);
  }
  return {{"intrinsics",
           {{"fx", cam.fx},
            {"fy", cam.fy},
            {"cx", cam.cx},
            {"cy", cam.cy},
            {"width", cam.width},
            {"height", cam.height}}},
          {"pose", pose}};
}

std::string type_of(const json& j) {
  if (!j.is_object()) fail("message must be a JSON object");
  const json& t = field(j, "type");
  if (!t.is_string()) fail("'type' must be a string");
  return t.get<std::string>();
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

ClientMessage client_from_json(const json& j) {
  const std::string type = type_of(j);
  if (type == "load_scene") {
    const json& p = field(j, "path");
    if (!p.is_string()) fail("'path' must be a string");
    return LoadScene{p.get<std::string>()};
  }
  if (type == "set_camera") return SetCamera{camera_from(j)};
  if (type == "set_handles") {
    const json& list = field(j, "handles");
    if (!list.is_array()) fail("'handles' must be an array");
    SetHandles out;
    for (const json& h : list) {
      if (!h.is_object()) fail("handle entries must be objects");
      out.handles.push_back({vertex(h), vec3(h, "target")});
    }
    return out;
  }
  if (type == "drag") return Drag{vertex(j), vec3(j, "target")};
  if (type == "release") return Release{};
  if (type == "set_flag") {
    const json& n = field(j, "name");
    const json& v = field(j, "value");
    if (!n.is_string()) fail("'name' must be a string");
    if (!v.is_boolean()) fail("'value' must be a boolean");
    return SetFlag{n.get<std::string>(), v.get<bool>()};
  }
  if (type == "request_frame") return RequestFrame{};
  fail("unknown message type '" + type + "'");
}

ClientMessage parse_client(const std::string& text) { return client_from_json(parse_text(text)); }

const char* type_name(const ClientMessage& message) {
  static constexpr const char* kNames[] = {"load_scene", "set_camera", "set_handles", "drag",
                                           "release",    "set_flag",   "request_frame"};
  return kNames[message.index()];
}

const char* type_name(const ServerMessage& message) {
  return message.index() == 0 ? "frame" : "error";
}

json to_json(const ClientMessage& message) {
  json j = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LoadScene>) {
          return {{"path", m.path}};
        } else if constexpr (std::is_same_v<T, SetCamera>) {
          return camera_json(m.camera);
        } else if constexpr (std::is_same_v<T, SetHandles>) {
          json list = json::array();
          for (const Handle& h : m.handles) {
            list.push_back({{"vertex", h.vertex}, {"target", vec3_json(h.target)}});
          }
          return {{"handles", list}};
        } else if constexpr (std::is_same_v<T, Drag>) {
          return {{"vertex", m.vertex}, {"target", vec3_json(m.target)}};
        } else if constexpr (std::is_same_v<T, SetFlag>) {
          return {{"name", m.name}, {"value", m.value}};
        } else {
          return json::object();
        }
      },
      message);
  j["type"] = type_name(message);
  return j;
}

namespace {

// Invalid UTF-8 (for example in a file name echoed in an error) is replaced
// rather than rejected.
std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace

std::string serialize(const ClientMessage& message) { return dump(to_json(message)); }

ServerMessage server_from_json(const json& j) {
  const std::string type = type_of(j);
  if (type == "error") {
    const json& m = field(j, "message");
    if (!m.is_string()) fail("'message' must be a string");
    return ErrorReply{m.get<std::string>()};
  }
  if (type != "frame") fail("unknown message type '" + type + "'");
  Frame f;
  f.frame_id = count(j, "frame_id");
  const json& enc = field(j, "encoding");
  const json& payload = field(j, "payload");
  if (!enc.is_string() || enc.get<std::string>() != "png") fail("'encoding' must be \"png\"");
  if (!payload.is_string()) fail("'payload' must be a string");
  f.payload = payload.get<std::string>();
  const json& stats = field(j, "stats");
  if (!stats.is_object()) fail("'stats' must be an object");
  f.stats.solve_ms = number(stats, "solve_ms");
  f.stats.render_ms = number(stats, "render_ms");
  f.stats.gaussians = count(stats, "gaussians");
  f.stats.fps = number(stats, "fps");
  if (j.contains("pick_vertices")) {
    const json& list = j["pick_vertices"];
    if (!list.is_array()) fail("'pick_vertices' must be an array");
    for (const json& p : list) {
      if (!p.is_object()) fail("pick_vertices entries must be objects");
      f.pick_vertices.push_back({vertex(p), number(p, "x"), number(p, "y"), number(p, "depth")});
    }
  }
  return f;
}

ServerMessage parse_server(const std::string& text) { return server_from_json(parse_text(text)); }

json to_json(const ServerMessage& message) {
  if (const auto* e = std::get_if<ErrorReply>(&message)) {
    return {{"type", "error"}, {"message", e->message}};
  }
  const Frame& f = std::get<Frame>(message);
  json picks = json::array();
  for (const PickVertex& p : f.pick_vertices) {
    picks.push_back({{"vertex", p.vertex}, {"x", p.x}, {"y", p.y}, {"depth", p.depth}});
  }
  return {{"type", "frame"},
          {"frame_id", f.frame_id},
          {"encoding", f.encoding},
          {"payload", f.payload},
          {"stats",
           {{"solve_ms", f.stats.solve_ms},
            {"render_ms", f.stats.render_ms},
            {"gaussians", f.stats.gaussians},
            {"fps", f.stats.fps}}},
          {"pick_vertices", picks}};
}

std::string serialize(const ServerMessage& message) { return dump(to_json(message)); }

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) fail("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) fail("invalid base64 payload");
  std::size_t size = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the bytes that padding stands for.
  if (!text.empty() && text.back() == '=') --size;
  if (text.size() > 1 && text[text.size() - 2] == '=') --size;
  out.resize(size);
  return out;
}

}  // namespace meshgs::protocol
