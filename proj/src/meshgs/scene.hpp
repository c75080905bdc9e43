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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "meshgs/camera.hpp"
#include "meshgs/deformer.hpp"
#include "meshgs/gaussian_model.hpp"
#include "meshgs/mesh.hpp"

namespace meshgs {

/// JSON scene file:
///   {"mesh": "m.obj", "cloud": "c.mgsc", "camera": {...},
///    "handle_presets": {"name": [{"vertex_index": i, "target_xyz": [x, y, z]}]},
///    "background": [r, g, b]}
/// Paths are relative to the scene file.
struct Scene {
  TriangleMesh mesh;
  GaussianCloud cloud;
  Camera camera;
  std::map<std::string, HandleSet> handle_presets;
  Vec3 background = Vec3::Zero();
  std::vector<std::string> warnings;
};

/// Throws Error(kIo) for missing files and Error(kParse) for malformed JSON.
/// A cloud bound to a different mesh is a warning.
Scene load_scene(const std::filesystem::path& path);

/// Writes mesh (OBJ), cloud and scene JSON next to each other; the mesh and
/// cloud file names are derived from the scene file stem.
void save_scene(const Scene& scene, const std::filesystem::path& path);

}  // namespace meshgs
