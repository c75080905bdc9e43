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

#include <fstream>

#include "json.hpp"
#include "meshgs/error.hpp"
#include "meshgs/optimizer.hpp"

namespace meshgs {

namespace {

std::filesystem::path resolve_image(const std::filesystem::path& base, std::string rel) {
  std::filesystem::path p = base / rel;
  if (!p.has_extension()) p += ".png";
  return p;
}

View load_view(const nlohmann::json& shared, const nlohmann::json& frame,
               const std::filesystem::path& base, const Vec3& background) {
  if (!frame.is_object() || !frame.contains("file_path") || !frame["file_path"].is_string()) {
    throw Error(ErrorCode::kParse, "manifest frame needs a string file_path");
  }
  View view;
  view.image_path = resolve_image(base, frame["file_path"].get<std::string>());
  view.image = read_png(view.image_path, background);
  nlohmann::json merged = shared;
  for (auto it = frame.begin(); it != frame.end(); ++it) merged[it.key()] = it.value();
  if (!merged.contains("w") && !merged.contains("width")) merged["width"] = view.image.width;
  if (!merged.contains("h") && !merged.contains("height")) merged["height"] = view.image.height;
  view.camera = camera_from_json(merged);
  return view;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest, const Vec3* background_override) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::kIo, "manifest not found: " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "malformed manifest " + manifest.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
    throw Error(ErrorCode::kParse, "manifest needs a non-empty frames array");
  }

  Dataset data;
  if (background_override) {
    data.background = *background_override;
  } else if (j.contains("background")) {
    const auto& bg = j["background"];
    if (!bg.is_array() || bg.size() != 3) throw Error(ErrorCode::kParse, "background must be [r, g, b]");
    data.background = Vec3(bg[0].get<double>(), bg[1].get<double>(), bg[2].get<double>());
  }

  nlohmann::json shared = nlohmann::json::object();
  for (const char* key : {"camera_angle_x", "fl_x", "fl_y", "cx", "cy", "w", "h"}) {
    if (j.contains(key)) shared[key] = j[key];
  }
  const std::filesystem::path base = manifest.parent_path();
  for (const auto& frame : j["frames"]) {
    data.train.push_back(load_view(shared, frame, base, data.background));
  }
  if (j.contains("test_frames")) {
    if (!j["test_frames"].is_array()) throw Error(ErrorCode::kParse, "test_frames must be an array");
    for (const auto& frame : j["test_frames"]) {
      data.holdout.push_back(load_view(shared, frame, base, data.background));
    }
  } else if (data.train.size() > 1) {
    data.holdout.push_back(std::move(data.train.back()));
    data.train.pop_back();
  }
  return data;
}

}  // namespace meshgs
