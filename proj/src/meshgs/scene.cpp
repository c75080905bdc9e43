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

#include "meshgs/scene.hpp"

#include <fstream>

#include "json.hpp"
#include "meshgs/error.hpp"

namespace meshgs {

namespace {

std::string required_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorCode::kParse, std::string("scene field '") + key + "' missing or not a string");
  }
  return j[key].get<std::string>();
}

}  // namespace

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "scene not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed scene " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParse, "scene must be a JSON object");
  const std::filesystem::path base = path.parent_path();

  Scene scene;
  scene.mesh = load_obj(base / required_string(j, "mesh"));
  const ContentHash hash = scene.mesh.content_hash();
  CloudLoadResult loaded = load_cloud(base / required_string(j, "cloud"), &hash);
  scene.cloud = std::move(loaded.cloud);
  scene.warnings = std::move(loaded.warnings);
  validate_cloud(scene.cloud, scene.mesh);
  if (!j.contains("camera")) throw Error(ErrorCode::kParse, "scene needs a camera");
  scene.camera = camera_from_json(j["camera"]);
  if (j.contains("handle_presets")) {
    if (!j["handle_presets"].is_object()) {
      throw Error(ErrorCode::kParse, "handle_presets must be an object");
    }
    for (auto it = j["handle_presets"].begin(); it != j["handle_presets"].end(); ++it) {
      HandleSet h = handles_from_json(it.value());
      h.validate(scene.mesh);
      scene.handle_presets.emplace(it.key(), std::move(h));
    }
  }
  if (j.contains("background")) {
    const auto& bg = j["background"];
    if (!bg.is_array() || bg.size() != 3 || !bg[0].is_number() || !bg[1].is_number() ||
        !bg[2].is_number()) {
      throw Error(ErrorCode::kParse, "background must be [r, g, b]");
    }
    scene.background = Vec3(bg[0].get<double>(), bg[1].get<double>(), bg[2].get<double>());
  }
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  const std::string stem = path.stem().string();
  const std::filesystem::path base = path.parent_path();
  save_obj(scene.mesh, base / (stem + ".obj"));
  save_cloud(scene.cloud, base / (stem + ".mgsc"));
  nlohmann::json j;
  j["mesh"] = stem + ".obj";
  j["cloud"] = stem + ".mgsc";
  j["camera"] = camera_to_json(scene.camera);
  j["background"] = {scene.background.x(), scene.background.y(), scene.background.z()};
  nlohmann::json presets = nlohmann::json::object();
  for (const auto& [name, h] : scene.handle_presets) presets[name] = handles_to_json(h);
  j["handle_presets"] = presets;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write scene " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace meshgs
