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

#include "meshgs/mesh.hpp"

namespace meshgs {

/// Regular icosahedron inscribed in the unit sphere (12 vertices, 20 faces).
TriangleMesh make_icosahedron();

/// Icosahedron refined `level` times by conforming midpoint subdivision with
/// vertices projected onto the sphere. 20 * 4^level faces.
TriangleMesh make_icosphere(int level, double radius = 1.0);

/// Latitude/longitude sphere with `segments` around and `rings` bands;
/// 2 * segments * (rings - 1) faces.
TriangleMesh make_uv_sphere(int segments, int rings, double radius = 1.0);

/// Flat triangulated grid in the z = 0 plane with `nx` by `ny` vertices and
/// unit spacing.
TriangleMesh make_grid(int nx, int ny, double spacing = 1.0);

}  // namespace meshgs
