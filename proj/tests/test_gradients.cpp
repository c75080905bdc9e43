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

#include <array>
#include <cmath>
#include <random>

#include "meshgs/error.hpp"
#include "meshgs/optimizer.hpp"
#include "support/test_support.hpp"

namespace meshgs {
namespace {

class GradientSuite : public ::testing::TestWithParam<int> {};

TEST_P(GradientSuite, MatchesCentralDifferences) {
  const int gaussians = GetParam();
  std::mt19937_64 rng(100 + gaussians);
  for (int degree = 0; degree <= 3; ++degree) {
    testing::Scene scene = testing::random_scene(rng, gaussians, 16, degree);
    const Image target = testing::random_target(rng, 16);
    LossWeights weights;
    weights.lambda_dssim = 0.2;
    weights.lambda_r = 0.05;
    weights.gamma = 0.1;
    RenderOptions options;
    options.background = Vec3(0.2, 0.1, 0.3);
    const testing::GradCheck result = testing::check_gradients(scene, target, weights, options);
    EXPECT_EQ(result.failed, 0) << "degree " << degree << " worst: " << result.worst;
    for (int group = 0; group < kParamGroupCount; ++group) {
      EXPECT_GT(result.group_max[group], 1e-4)
          << param_group_name(static_cast<ParamGroup>(group)) << " never exercised";
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Scenes, GradientSuite, ::testing::Values(1, 5));

TEST(Backward, ExactFitHasZeroGradient) {
  std::mt19937_64 rng(7);
  testing::Scene scene = testing::random_scene(rng, 4, 16, 2);
  const Framebuffer fb = render(scene.cloud, scene.mesh, scene.camera);
  Image target;
  target.width = target.height = 16;
  target.rgb = fb.rgb;
  const BackwardResult br =
      backward(scene.cloud, scene.mesh, scene.camera, target, LossWeights{0.2, 0.0, 1.0});
  EXPECT_NEAR(br.loss, 0.0, 1e-12);
  for (const GaussianGrad& g : br.grads) {
    for (double v : g.params) EXPECT_NEAR(v, 0.0, 1e-8);
  }
}

TEST(Backward, RegularizerSilentBelowBudget) {
  std::mt19937_64 rng(8);
  testing::Scene scene = testing::random_scene(rng, 1, 16, 0);
  const Image target = testing::random_target(rng, 16);
  LossWeights with_r{0.2, 1.0, 100.0};
  LossWeights without_r{0.2, 0.0, 100.0};
  const BackwardResult a = backward(scene.cloud, scene.mesh, scene.camera, target, with_r);
  const BackwardResult b = backward(scene.cloud, scene.mesh, scene.camera, target, without_r);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a.grads[0].params[ParamLayout::kScale + k], b.grads[0].params[ParamLayout::kScale + k]);
  }
}

TEST(Backward, NonFiniteGradientIsReported) {
  std::mt19937_64 rng(9);
  testing::Scene scene = testing::random_scene(rng, 2, 16, 0);
  Image target = testing::random_target(rng, 16);
  for (double& v : target.rgb) v = NAN;
  try {
    backward(scene.cloud, scene.mesh, scene.camera, target, LossWeights{});
    FAIL() << "expected a numeric error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
    EXPECT_NE(std::string(e.what()).find("gaussian"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("parameter group"), std::string::npos);
  }
}

}  // namespace
}  // namespace meshgs
