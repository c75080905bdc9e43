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
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "meshgs/camera.hpp"
#include "meshgs/mesh.hpp"

namespace meshgs::protocol {

// Client to server. Every message is a JSON object with a "type" field.

struct LoadScene {
  std::string path;
  bool operator==(const LoadScene&) const = default;
};

/// {"type": "set_camera", "intrinsics": {fx, fy, cx, cy, width, height},
///  "pose": 4x4 world-to-camera rows}
struct SetCamera {
  Camera camera;
  bool operator==(const SetCamera& o) const;
};

struct Handle {
  VertexId vertex = 0;
  Vec3 target = Vec3::Zero();
  bool operator==(const Handle& o) const { return vertex == o.vertex && target == o.target; }
};

struct SetHandles {
  std::vector<Handle> handles;
  bool operator==(const SetHandles&) const = default;
};

struct Drag {
  VertexId vertex = 0;
  Vec3 target = Vec3::Zero();
  bool operator==(const Drag& o) const { return vertex == o.vertex && target == o.target; }
};

struct Release {
  bool operator==(const Release&) const = default;
};

struct SetFlag {
  std::string name;
  bool value = false;
  bool operator==(const SetFlag&) const = default;
};

struct RequestFrame {
  bool operator==(const RequestFrame&) const = default;
};

using ClientMessage =
    std::variant<LoadScene, SetCamera, SetHandles, Drag, Release, SetFlag, RequestFrame>;

// Server to client.

struct FrameStats {
  double solve_ms = 0.0;
  double render_ms = 0.0;
  std::uint64_t gaussians = 0;
  double fps = 0.0;
  bool operator==(const FrameStats&) const = default;
};

/// Screen position and camera depth of a mesh vertex, for picking.
struct PickVertex {
  VertexId vertex = 0;
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
  bool operator==(const PickVertex&) const = default;
};

struct Frame {
  std::uint64_t frame_id = 0;
  std::string encoding = "png";
  std::string payload;  // base64
  FrameStats stats;
  std::vector<PickVertex> pick_vertices;
  bool operator==(const Frame&) const = default;
};

struct ErrorReply {
  std::string message;
  bool operator==(const ErrorReply&) const = default;
};

using ServerMessage = std::variant<Frame, ErrorReply>;

/// Throws Error(kProtocol) for malformed JSON, unknown types or bad fields.
ClientMessage parse_client(const std::string& text);
ClientMessage client_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClientMessage& message);
std::string serialize(const ClientMessage& message);

ServerMessage parse_server(const std::string& text);
ServerMessage server_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ServerMessage& message);
std::string serialize(const ServerMessage& message);

/// The "type" discriminator of a message.
const char* type_name(const ClientMessage& message);
const char* type_name(const ServerMessage& message);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws Error(kProtocol) on invalid input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace meshgs::protocol
