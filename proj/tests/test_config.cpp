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
#include <optional>
#include <sstream>

#include "json.hpp"
#include "meshgs/config.hpp"
#include "meshgs/error.hpp"
#include "meshgs/optimizer.hpp"
#include "meshgs/primitives.hpp"
#include "meshgs/scene.hpp"
#include "support/test_support.hpp"

namespace meshgs {
namespace {

namespace fs = std::filesystem;

template <typename F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("meshgs_cfg_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(Config, DefaultsMatchDocumentedValues) {
  const Config c;
  EXPECT_EQ(c.train.densify_grad_threshold, 2e-4);
  EXPECT_EQ(c.train.prune_opacity, 0.005);
  EXPECT_EQ(c.train.gamma, 1.0);
  EXPECT_EQ(c.train.lambda_r, 0.05);
  EXPECT_EQ(c.train.lr_scale, 5e-3);
  EXPECT_TRUE(c.transfer.rotate_normal_offset);
  EXPECT_NO_THROW(c.train.validate());
}

TEST(Config, ParsesKeysCommentsAndSections) {
  std::istringstream in(
      "# training\n"
      "[train]\n"
      "iterations = 1200\n"
      "lambda-r = 0.1   # dashes are accepted\n"
      "seed=42\n"
      "\n"
      "[deform]\n"
      "rotate_normal_offset = true\n"
      "arap_tol = \"1e-7\"\n");
  const Config c = parse_config(in);
  EXPECT_EQ(c.train.iterations, 1200);
  EXPECT_EQ(c.train.lambda_r, 0.1);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_TRUE(c.transfer.rotate_normal_offset);
  EXPECT_EQ(c.solve.tol, 1e-7);
}

TEST(Config, UnknownKeyReportsLine) {
  std::istringstream in("iterations = 3\nbogus = 1\n");
  try {
    parse_config(in);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, BadValuesAreParseErrors) {
  for (const char* text : {"iterations = ten\n", "gamma = 1.0x\n", "rotate_normal_offset = maybe\n",
                           "seed = -1\n", "just a line\n"}) {
    std::istringstream in(text);
    EXPECT_EQ(code_of([&] { parse_config(in); }), ErrorCode::kParse) << text;
  }
}

TEST(Config, OverridesApplyOnTop) {
  Config c;
  apply_override(c, "iterations=7");
  apply_override(c, "rotate-normal-offset=off");
  EXPECT_EQ(c.train.iterations, 7);
  EXPECT_FALSE(c.transfer.rotate_normal_offset);
  EXPECT_EQ(code_of([&] { apply_override(c, "iterations"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([&] { apply_override(c, "nope=1"); }), ErrorCode::kParse);
}

TEST(Config, EveryListedKeyIsAccepted) {
  for (const std::string& key : config_keys()) {
    Config c;
    const std::string value = key == "rotate_normal_offset" ? "false" : "1";
    EXPECT_NO_THROW(apply_override(c, key + "=" + value)) << key;
  }
}

TEST(Config, ValidateRejectsBadRates) {
  TrainConfig t;
  t.lr_sh = 0.0;
  EXPECT_EQ(code_of([&] { t.validate(); }), ErrorCode::kInvalidArgument);
  t = TrainConfig{};
  t.densify_grad_threshold = -1.0;
  EXPECT_EQ(code_of([&] { t.validate(); }), ErrorCode::kInvalidArgument);
}

TEST_F(TempDir, MissingConfigFileIsIo) {
  EXPECT_EQ(code_of([&] { load_config(dir_ / "none.conf"); }), ErrorCode::kIo);
}

GaussianCloud colored_cloud(const TriangleMesh& mesh) {
  GaussianCloud cloud = init_from_mesh(mesh, 1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud.gaussians[i].sh[0] = Vec3(0.1 * (i % 7), 0.5, -0.3);
    cloud.gaussians[i].opacity_logit = 2.0;
  }
  return cloud;
}

TEST_F(TempDir, DatasetRoundTripsCamerasAndImages) {
  const TriangleMesh mesh = make_icosphere(1);
  const GaussianCloud cloud = colored_cloud(mesh);
  const auto cams = testing::orbit_cameras(5, 3.0, 30.0, 24);
  const Vec3 bg(0.2, 0.3, 0.4);
  const fs::path manifest = testing::write_dataset(dir_, cloud, mesh, cams, 2, bg);
  const Dataset d = load_dataset(manifest);
  ASSERT_EQ(d.train.size(), 3u);
  ASSERT_EQ(d.holdout.size(), 2u);
  EXPECT_NEAR((d.background - bg).norm(), 0.0, 1e-12);
  RenderOptions options;
  options.background = bg;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const View& v = i < 3 ? d.train[i] : d.holdout[i - 3];
    EXPECT_NEAR((v.camera.rotation - cams[i].rotation).norm(), 0.0, 1e-9);
    EXPECT_NEAR((v.camera.translation - cams[i].translation).norm(), 0.0, 1e-9);
    EXPECT_EQ(v.camera.fx, cams[i].fx);
    const Framebuffer fb = render(cloud, mesh, cams[i], options);
    // 8-bit quantization.
    EXPECT_LE(testing::max_abs_diff(fb.rgb, v.image.rgb), 0.5 / 255.0 + 1e-12);
  }
}

TEST_F(TempDir, DatasetCameraAngleAndImplicitHoldout) {
  const std::vector<double> rgb(3 * 8 * 6, 0.5);
  fs::create_directories(dir_ / "train");
  for (int i = 0; i < 2; ++i) write_png(dir_ / "train" / ("r_" + std::to_string(i) + ".png"), 8, 6, rgb);
  nlohmann::json j;
  j["camera_angle_x"] = 0.69;
  nlohmann::json pose = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 4}, {0, 0, 0, 1}};
  j["frames"] = {{{"file_path", "./train/r_0"}, {"transform_matrix", pose}},
                 {{"file_path", "./train/r_1"}, {"transform_matrix", pose}}};
  std::ofstream(dir_ / "transforms.json") << j.dump();
  const Dataset d = load_dataset(dir_ / "transforms.json");
  ASSERT_EQ(d.train.size(), 1u);
  ASSERT_EQ(d.holdout.size(), 1u);
  EXPECT_EQ(d.train[0].camera.width, 8);
  EXPECT_EQ(d.train[0].camera.height, 6);
  EXPECT_NEAR(d.train[0].camera.fx, 4.0 / std::tan(0.345), 1e-9);
  // OpenGL camera at z = 4 looking down -z: the origin sits 4 units ahead.
  const Vec3 p = d.train[0].camera.rotation * Vec3::Zero() + d.train[0].camera.translation;
  EXPECT_NEAR((p - Vec3(0, 0, 4)).norm(), 0.0, 1e-12);
}

TEST_F(TempDir, DatasetErrors) {
  EXPECT_EQ(code_of([&] { load_dataset(dir_ / "missing.json"); }), ErrorCode::kIo);
  std::ofstream(dir_ / "bad.json") << "{\"frames\": [";
  EXPECT_EQ(code_of([&] { load_dataset(dir_ / "bad.json"); }), ErrorCode::kParse);
  std::ofstream(dir_ / "empty.json") << "{\"frames\": []}";
  EXPECT_EQ(code_of([&] { load_dataset(dir_ / "empty.json"); }), ErrorCode::kParse);
  std::ofstream(dir_ / "noimg.json")
      << R"({"camera_angle_x": 0.7, "frames": [{"file_path": "nothing.png",
             "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}]})";
  EXPECT_EQ(code_of([&] { load_dataset(dir_ / "noimg.json"); }), ErrorCode::kIo);
}

TEST_F(TempDir, SceneSaveLoadRoundTrip) {
  Scene s;
  s.mesh = make_icosphere(1);
  s.cloud = colored_cloud(s.mesh);
  s.camera = look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 40.0, 32, 32);
  s.background = Vec3(1, 1, 1);
  s.handle_presets["lift"].constrained = {{0, Vec3(0.1, 0.2, 1.3)}, {5, Vec3(0, 0, -1)}};
  save_scene(s, dir_ / "scene.json");
  EXPECT_TRUE(fs::exists(dir_ / "scene.obj"));
  EXPECT_TRUE(fs::exists(dir_ / "scene.mgsc"));
  const Scene back = load_scene(dir_ / "scene.json");
  EXPECT_TRUE(back.warnings.empty());
  EXPECT_EQ(back.mesh.content_hash(), s.mesh.content_hash());
  EXPECT_EQ(back.cloud.size(), s.cloud.size());
  EXPECT_EQ(back.background, s.background);
  EXPECT_NEAR((back.camera.rotation - s.camera.rotation).norm(), 0.0, 1e-12);
  ASSERT_EQ(back.handle_presets.count("lift"), 1u);
  EXPECT_EQ(back.handle_presets.at("lift").constrained, s.handle_presets.at("lift").constrained);
}

TEST_F(TempDir, SceneWithForeignCloudWarns) {
  Scene s;
  s.mesh = make_icosphere(1);
  s.cloud = colored_cloud(s.mesh);
  s.camera = look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 40.0, 32, 32);
  s.cloud.mesh_hash = make_icosphere(0).content_hash();
  save_scene(s, dir_ / "scene.json");
  const Scene back = load_scene(dir_ / "scene.json");
  ASSERT_FALSE(back.warnings.empty());
}

TEST_F(TempDir, SceneErrors) {
  EXPECT_EQ(code_of([&] { load_scene(dir_ / "none.json"); }), ErrorCode::kIo);
  std::ofstream(dir_ / "broken.json") << "{\"mesh\": 3}";
  EXPECT_EQ(code_of([&] { load_scene(dir_ / "broken.json"); }), ErrorCode::kParse);
}

}  // namespace
}  // namespace meshgs
