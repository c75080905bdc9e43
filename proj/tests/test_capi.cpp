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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "meshgs/meshgs.h"
#include "meshgs/image_io.hpp"
#include "meshgs/primitives.hpp"
#include "meshgs/scene.hpp"
#include "support/test_support.hpp"

namespace meshgs {
namespace {

namespace fs = std::filesystem;

class CApi : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("meshgs_capi_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

meshgs::Scene sphere_scene() {
  meshgs::Scene s;
  s.mesh = make_icosphere(1);
  s.cloud = init_from_mesh(s.mesh, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (BoundGaussian& g : s.cloud.gaussians) {
    g.sh[0] = Vec3(u(rng), u(rng), u(rng));
    g.opacity_logit = opacity_logit_for(0.8);
  }
  s.camera = look_at(Vec3(0.0, 0.5, 4.0), Vec3::Zero(), Vec3::UnitY(), 40.0, 32, 32);
  s.background = Vec3(0.2, 0.2, 0.2);
  return s;
}

TEST_F(CApi, VersionAndStatusStrings) {
  EXPECT_STRNE(mgs_version(), "");
  EXPECT_STREQ(mgs_status_string(MGS_OK), "ok");
  EXPECT_STREQ(mgs_status_string(MGS_ERR_SOLVE), "solve error");
}

TEST_F(CApi, NullArgumentsAreRejected) {
  mgs_mesh* mesh = nullptr;
  EXPECT_EQ(mgs_mesh_load(nullptr, &mesh), MGS_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(mgs_last_error()).find("path"), std::string::npos);
  EXPECT_EQ(mgs_cloud_init(nullptr, 0, nullptr), MGS_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(mgs_render_scene(nullptr, nullptr, "x.png"), MGS_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(mgs_mesh_vertex_count(nullptr), 0u);
  mgs_mesh_free(nullptr);
  mgs_server_stop(nullptr);
}

TEST_F(CApi, MissingFilesReportIo) {
  mgs_mesh* mesh = nullptr;
  const std::string missing = (dir_ / "missing.obj").string();
  EXPECT_EQ(mgs_mesh_load(missing.c_str(), &mesh), MGS_ERR_IO);
  EXPECT_EQ(mesh, nullptr);
  EXPECT_NE(std::string(mgs_last_error()).find("missing.obj"), std::string::npos);
}

TEST_F(CApi, LastErrorIsPerThread) {
  mgs_mesh* mesh = nullptr;
  EXPECT_EQ(mgs_mesh_load("/nonexistent/a.obj", &mesh), MGS_ERR_IO);
  const std::string mine = mgs_last_error();
  std::thread([] { mgs_mesh_load(nullptr, nullptr); }).join();
  EXPECT_EQ(mine, mgs_last_error());
}

TEST_F(CApi, MeshAndCloudRoundTrip) {
  const TriangleMesh m = make_icosphere(1);
  save_obj(m, dir_ / "m.obj");
  mgs_mesh* mesh = nullptr;
  ASSERT_EQ(mgs_mesh_load((dir_ / "m.obj").c_str(), &mesh), MGS_OK) << mgs_last_error();
  EXPECT_EQ(mgs_mesh_vertex_count(mesh), m.vertex_count());
  EXPECT_EQ(mgs_mesh_face_count(mesh), m.face_count());

  mgs_cloud* cloud = nullptr;
  ASSERT_EQ(mgs_cloud_init(mesh, 2, &cloud), MGS_OK);
  EXPECT_EQ(mgs_cloud_size(cloud), m.face_count());
  ASSERT_EQ(mgs_cloud_save(cloud, (dir_ / "c.mgsc").c_str()), MGS_OK);
  mgs_cloud* loaded = nullptr;
  ASSERT_EQ(mgs_cloud_load((dir_ / "c.mgsc").c_str(), mesh, &loaded), MGS_OK);
  ASSERT_EQ(mgs_cloud_save(loaded, (dir_ / "d.mgsc").c_str()), MGS_OK);
  EXPECT_EQ(file_bytes(dir_ / "c.mgsc"), file_bytes(dir_ / "d.mgsc"));
  mgs_cloud_free(loaded);
  mgs_cloud_free(cloud);
  mgs_mesh_free(mesh);
}

TEST_F(CApi, FitMissingManifest) {
  const std::string manifest = (dir_ / "nope.json").string();
  const std::string prefix = (dir_ / "out").string();
  EXPECT_EQ(mgs_fit(manifest.c_str(), "m.obj", nullptr, prefix.c_str(), nullptr, nullptr, nullptr),
            MGS_ERR_IO);
  EXPECT_NE(std::string(mgs_last_error()).find("manifest not found"), std::string::npos);
}

TEST_F(CApi, ZeroIterationFitWritesInitialCloud) {
  const meshgs::Scene s = sphere_scene();
  save_obj(s.mesh, dir_ / "m.obj");
  const fs::path manifest = testing::write_dataset(
      dir_ / "data", s.cloud, s.mesh, testing::orbit_cameras(3, 4.0, 40.0, 32), 1, s.background);
  const char* overrides[] = {"iterations=0", "max_sh_degree=1"};
  const mgs_config_options cfg{nullptr, overrides, 2};
  const std::string prefix = (dir_ / "fit").string();
  std::vector<int> iterations;
  mgs_fit_summary summary{};
  ASSERT_EQ(mgs_fit(manifest.c_str(), (dir_ / "m.obj").c_str(), &cfg, prefix.c_str(),
                    [](const mgs_metrics_row* r, void* user) {
                      static_cast<std::vector<int>*>(user)->push_back(r->iteration);
                    },
                    &iterations, &summary),
            MGS_OK)
      << mgs_last_error();
  EXPECT_EQ(iterations, std::vector<int>{0});
  EXPECT_EQ(summary.final_row.gaussians, s.mesh.face_count());
  EXPECT_GT(summary.final_row.psnr, 0.0);
  save_cloud(init_from_mesh(load_obj(dir_ / "m.obj"), 1), dir_ / "expected.mgsc");
  EXPECT_EQ(file_bytes(prefix + ".mgsc"), file_bytes(dir_ / "expected.mgsc"));
  EXPECT_TRUE(fs::exists(prefix + ".csv"));
  EXPECT_TRUE(fs::exists(prefix + ".obj"));

  // The written scene loads and renders through the same API.
  mgs_scene* scene = nullptr;
  ASSERT_EQ(mgs_scene_load((prefix + ".json").c_str(), &scene), MGS_OK) << mgs_last_error();
  EXPECT_EQ(mgs_scene_gaussian_count(scene), s.mesh.face_count());
  mgs_scene_free(scene);
}

TEST_F(CApi, BadOverrideIsParseError) {
  const char* overrides[] = {"iterations=many"};
  const mgs_config_options cfg{nullptr, overrides, 1};
  EXPECT_EQ(mgs_fit("x.json", "m.obj", &cfg, "out", nullptr, nullptr, nullptr), MGS_ERR_PARSE);
}

TEST_F(CApi, RenderMatchesReference) {
  const meshgs::Scene s = sphere_scene();
  save_scene(s, dir_ / "scene.json");
  mgs_scene* scene = nullptr;
  ASSERT_EQ(mgs_scene_load((dir_ / "scene.json").c_str(), &scene), MGS_OK) << mgs_last_error();
  int w = 0, h = 0;
  ASSERT_EQ(mgs_render_scene_rgb(scene, nullptr, nullptr, 0, &w, &h), MGS_OK);
  ASSERT_EQ(w, 32);
  std::vector<double> rgb(3 * w * h);
  EXPECT_EQ(mgs_render_scene_rgb(scene, nullptr, rgb.data(), 10, &w, &h), MGS_ERR_INVALID_ARGUMENT);
  ASSERT_EQ(mgs_render_scene_rgb(scene, nullptr, rgb.data(), rgb.size(), &w, &h), MGS_OK);
  // The cloud file stores single precision, so compare against the loaded scene.
  const meshgs::Scene loaded = load_scene(dir_ / "scene.json");
  RenderOptions opts;
  opts.background = loaded.background;
  const Framebuffer ref = testing::reference_render(rest_splats(loaded.cloud, loaded.mesh),
                                                    loaded.cloud.sh_degree, loaded.camera, opts);
  EXPECT_LE(testing::max_abs_diff(rgb, ref.rgb), 1e-12);

  EXPECT_EQ(mgs_render_scene(scene, "{\"fx\": 1}", (dir_ / "x.png").c_str()), MGS_ERR_PARSE);
  EXPECT_EQ(mgs_render_scene(scene, "not json", (dir_ / "x.png").c_str()), MGS_ERR_PARSE);
  mgs_scene_free(scene);
}

TEST_F(CApi, DeformReportsSolverEnergy) {
  const TriangleMesh strip = testing::make_strip(8);
  meshgs::Scene s;
  s.mesh = strip;
  s.cloud = init_from_mesh(strip, 0);
  s.camera = look_at(Vec3(3.5, 0.4, 8.0), Vec3(3.5, 0.4, 0.0), Vec3::UnitY(), 30.0, 48, 32);
  save_scene(s, dir_ / "strip.json");
  const testing::StripBend bend = testing::strip_bend(strip, 8, 45.0, Vec3::UnitZ());
  std::ofstream(dir_ / "handles.json") << handles_to_json(bend.handles).dump();

  mgs_scene* scene = nullptr;
  ASSERT_EQ(mgs_scene_load((dir_ / "strip.json").c_str(), &scene), MGS_OK) << mgs_last_error();
  mgs_deform_summary summary{};
  const std::string prefix = (dir_ / "bent").string();
  ASSERT_EQ(mgs_deform_scene(scene, (dir_ / "handles.json").c_str(), nullptr, nullptr,
                             prefix.c_str(), &summary),
            MGS_OK)
      << mgs_last_error();
  const DeformState direct = arap_solve(strip, bend.handles);
  EXPECT_EQ(summary.energy, direct.energy);
  EXPECT_EQ(summary.iterations, direct.iterations);
  const nlohmann::json stats = nlohmann::json::parse(file_bytes(prefix + ".stats.json"));
  EXPECT_EQ(stats["energy"].get<double>(), direct.energy);
  for (const char* ext : {".obj", ".mgsc", ".png"}) EXPECT_TRUE(fs::exists(prefix + ext)) << ext;
  EXPECT_EQ(load_obj(prefix + ".obj").vertices(), direct.vertices);
  mgs_scene_free(scene);
}

TEST_F(CApi, UnsolvableHandlesAreSolveErrors) {
  // Two disjoint triangles, only one of them constrained.
  meshgs::Scene s;
  s.mesh = TriangleMesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(3, 0, 0),
                         Vec3(4, 0, 0), Vec3(3, 1, 0)},
                        {{0, 1, 2}, {3, 4, 5}});
  s.cloud = init_from_mesh(s.mesh, 0);
  s.camera = look_at(Vec3(2, 0.5, 5), Vec3(2, 0.5, 0), Vec3::UnitY(), 20.0, 16, 16);
  save_scene(s, dir_ / "two.json");
  std::ofstream(dir_ / "h.json") << R"([{"vertex_index": 0, "target_xyz": [0, 0, 1]}])";
  mgs_scene* scene = nullptr;
  ASSERT_EQ(mgs_scene_load((dir_ / "two.json").c_str(), &scene), MGS_OK);
  EXPECT_EQ(mgs_deform_scene(scene, (dir_ / "h.json").c_str(), nullptr, nullptr,
                             (dir_ / "o").c_str(), nullptr),
            MGS_ERR_SOLVE);
  EXPECT_NE(std::string(mgs_last_error()).find("component"), std::string::npos);
  mgs_scene_free(scene);
}

TEST_F(CApi, ServerStartsOnFreePort) {
  const meshgs::Scene s = sphere_scene();
  save_scene(s, dir_ / "scene.json");
  mgs_server* server = nullptr;
  ASSERT_EQ(mgs_server_start((dir_ / "scene.json").c_str(), "127.0.0.1:0", nullptr, nullptr,
                             &server),
            MGS_OK)
      << mgs_last_error();
  EXPECT_GT(mgs_server_port(server), 0);
  mgs_server_stop(server);
  EXPECT_EQ(mgs_server_start(nullptr, "127.0.0.1:99999", nullptr, nullptr, &server),
            MGS_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(mgs_server_start((dir_ / "none.json").c_str(), "127.0.0.1:0", nullptr, nullptr,
                             &server),
            MGS_ERR_IO);
}

}  // namespace
}  // namespace meshgs
