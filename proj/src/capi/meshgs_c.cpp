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

#include "meshgs/meshgs.h"

#include <chrono>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "json.hpp"
#include "meshgs/config.hpp"
#include "meshgs/deformer.hpp"
#include "meshgs/error.hpp"
#include "meshgs/gaussian_model.hpp"
#include "meshgs/image_io.hpp"
#include "meshgs/mesh.hpp"
#include "meshgs/optimizer.hpp"
#include "meshgs/renderer.hpp"
#include "meshgs/scene.hpp"
#include "meshgs/server.hpp"
#include "meshgs/session.hpp"

struct mgs_mesh {
  meshgs::TriangleMesh mesh;
};

struct mgs_cloud {
  meshgs::GaussianCloud cloud;
};

struct mgs_scene {
  meshgs::Scene scene;
};

struct mgs_server {
  std::shared_ptr<meshgs::Session> session;
  std::unique_ptr<meshgs::Server> server;
};

namespace {

using meshgs::Error;
using meshgs::ErrorCode;

thread_local std::string g_last_error;

mgs_status fail(mgs_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `fn`, translating exceptions into a status and the thread's message.
template <typename Fn>
mgs_status guarded(Fn&& fn) {
  try {
    fn();
    return MGS_OK;
  } catch (const Error& e) {
    return fail(static_cast<mgs_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MGS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MGS_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw Error(ErrorCode::kInvalidArgument, std::string(name) + " is NULL");
}

meshgs::Config make_config(const mgs_config_options* options) {
  meshgs::Config config;
  if (options == nullptr) return config;
  if (options->config_path != nullptr) config = meshgs::load_config(options->config_path);
  if (options->override_count > 0) require(options->overrides, "overrides");
  for (size_t i = 0; i < options->override_count; ++i) {
    require(options->overrides[i], "override");
    meshgs::apply_override(config, options->overrides[i]);
  }
  return config;
}

meshgs::Camera camera_for(const meshgs::Scene& scene, const char* camera_json) {
  if (camera_json == nullptr) return scene.camera;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(camera_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("malformed camera JSON: ") + e.what());
  }
  return meshgs::camera_from_json(j);
}

meshgs::Framebuffer render_scene(const meshgs::Scene& scene, const char* camera_json) {
  meshgs::RenderOptions options;
  options.background = scene.background;
  return meshgs::render(scene.cloud, scene.mesh, camera_for(scene, camera_json), options);
}

mgs_metrics_row to_row(const meshgs::MetricsRow& r) {
  mgs_metrics_row out{};
  out.iteration = r.iteration;
  out.loss = r.loss;
  out.psnr = r.psnr;
  out.ssim = r.ssim;
  out.gaussians = r.gaussian_count;
  out.faces = r.face_count;
  out.oversized = r.oversized;
  return out;
}

}  // namespace

extern "C" {

const char* mgs_version(void) { return "0.1.0"; }

const char* mgs_status_string(mgs_status status) {
  switch (status) {
    case MGS_OK: return "ok";
    case MGS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MGS_ERR_IO: return "i/o error";
    case MGS_ERR_PARSE: return "parse error";
    case MGS_ERR_DEGENERATE: return "degenerate geometry";
    case MGS_ERR_SOLVE: return "solve error";
    case MGS_ERR_NUMERIC: return "numeric error";
    case MGS_ERR_VERSION: return "unsupported version";
    case MGS_ERR_PROTOCOL: return "protocol error";
    case MGS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* mgs_last_error(void) { return g_last_error.c_str(); }

mgs_status mgs_mesh_load(const char* path, mgs_mesh** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new mgs_mesh{meshgs::load_obj(path)};
  });
}

void mgs_mesh_free(mgs_mesh* mesh) { delete mesh; }

size_t mgs_mesh_vertex_count(const mgs_mesh* mesh) { return mesh ? mesh->mesh.vertex_count() : 0; }

size_t mgs_mesh_face_count(const mgs_mesh* mesh) { return mesh ? mesh->mesh.face_count() : 0; }

mgs_status mgs_cloud_init(const mgs_mesh* mesh, int sh_degree, mgs_cloud** out) {
  return guarded([&] {
    require(mesh, "mesh");
    require(out, "out");
    *out = new mgs_cloud{meshgs::init_from_mesh(mesh->mesh, sh_degree)};
  });
}

mgs_status mgs_cloud_load(const char* path, const mgs_mesh* mesh, mgs_cloud** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    meshgs::ContentHash hash{};
    if (mesh) hash = mesh->mesh.content_hash();
    meshgs::CloudLoadResult loaded = meshgs::load_cloud(path, mesh ? &hash : nullptr);
    if (mesh) meshgs::validate_cloud(loaded.cloud, mesh->mesh);
    *out = new mgs_cloud{std::move(loaded.cloud)};
  });
}

mgs_status mgs_cloud_save(const mgs_cloud* cloud, const char* path) {
  return guarded([&] {
    require(cloud, "cloud");
    require(path, "path");
    meshgs::save_cloud(cloud->cloud, path);
  });
}

void mgs_cloud_free(mgs_cloud* cloud) { delete cloud; }

size_t mgs_cloud_size(const mgs_cloud* cloud) { return cloud ? cloud->cloud.gaussians.size() : 0; }

mgs_status mgs_fit(const char* manifest, const char* mesh_path, const mgs_config_options* config,
                   const char* out_prefix, mgs_progress_fn progress, void* user,
                   mgs_fit_summary* summary) {
  return guarded([&] {
    require(manifest, "manifest");
    require(mesh_path, "mesh_path");
    require(out_prefix, "out_prefix");
    const meshgs::Config cfg = make_config(config);
    cfg.train.validate();
    const meshgs::Dataset data = meshgs::load_dataset(manifest);
    meshgs::TriangleMesh mesh = meshgs::load_obj(mesh_path);
    const auto start = std::chrono::steady_clock::now();
    meshgs::ProgressCallback cb;
    if (progress) {
      cb = [&](const meshgs::MetricsRow& row) {
        const mgs_metrics_row r = to_row(row);
        progress(&r, user);
      };
    }
    meshgs::TrainResult result = meshgs::train(data, std::move(mesh), cfg.train, cb);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const std::string prefix(out_prefix);
    meshgs::write_metrics_csv(result.log, prefix + ".csv");
    meshgs::Scene scene;
    scene.camera = data.holdout.empty() ? data.train.front().camera : data.holdout.front().camera;
    scene.background = data.background;
    scene.mesh = std::move(result.mesh);
    scene.cloud = std::move(result.cloud);
    meshgs::save_scene(scene, prefix + ".json");
    if (summary) {
      summary->final_row = result.log.empty() ? mgs_metrics_row{} : to_row(result.log.back());
      summary->seconds = seconds;
    }
  });
}

mgs_status mgs_scene_load(const char* path, mgs_scene** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new mgs_scene{meshgs::load_scene(path)};
  });
}

void mgs_scene_free(mgs_scene* scene) { delete scene; }

size_t mgs_scene_gaussian_count(const mgs_scene* scene) {
  return scene ? scene->scene.cloud.gaussians.size() : 0;
}

mgs_status mgs_render_scene(const mgs_scene* scene, const char* camera_json, const char* out_png) {
  return guarded([&] {
    require(scene, "scene");
    require(out_png, "out_png");
    const meshgs::Framebuffer fb = render_scene(scene->scene, camera_json);
    meshgs::write_png(out_png, fb.width, fb.height, fb.rgb);
  });
}

mgs_status mgs_render_scene_rgb(const mgs_scene* scene, const char* camera_json, double* rgb,
                                size_t capacity, int* width, int* height) {
  return guarded([&] {
    require(scene, "scene");
    require(width, "width");
    require(height, "height");
    const meshgs::Camera cam = camera_for(scene->scene, camera_json);
    *width = cam.width;
    *height = cam.height;
    if (rgb == nullptr) return;
    const meshgs::Framebuffer fb = render_scene(scene->scene, camera_json);
    if (capacity < fb.rgb.size()) {
      throw Error(ErrorCode::kInvalidArgument, "rgb buffer too small: need " +
                                                   std::to_string(fb.rgb.size()) + " doubles");
    }
    std::memcpy(rgb, fb.rgb.data(), fb.rgb.size() * sizeof(double));
  });
}

mgs_status mgs_deform_scene(const mgs_scene* scene, const char* handles_path,
                            const mgs_config_options* config, const char* camera_json,
                            const char* out_prefix, mgs_deform_summary* summary) {
  return guarded([&] {
    require(scene, "scene");
    require(handles_path, "handles_path");
    require(out_prefix, "out_prefix");
    const meshgs::Config cfg = make_config(config);
    const meshgs::Scene& sc = scene->scene;
    const meshgs::Camera cam = camera_for(sc, camera_json);
    const meshgs::HandleSet handles = meshgs::load_handles(handles_path);

    const auto start = std::chrono::steady_clock::now();
    const meshgs::DeformState state = handles.constrained.empty()
                                          ? meshgs::identity_state(sc.mesh)
                                          : meshgs::arap_solve(sc.mesh, handles, cfg.solve.max_iters,
                                                               cfg.solve.tol);
    const meshgs::TransferResult moved = meshgs::transfer(sc.cloud, sc.mesh, state, cfg.transfer);
    const double solve_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    meshgs::RenderOptions options;
    options.background = sc.background;
    const meshgs::Framebuffer fb = meshgs::render(moved.splats, sc.cloud.sh_degree, cam, options);
    const meshgs::BakedScene baked = meshgs::bake(sc.cloud, sc.mesh, state, cfg.transfer);

    const std::string prefix(out_prefix);
    meshgs::write_png(prefix + ".png", fb.width, fb.height, fb.rgb);
    meshgs::save_obj(baked.mesh, prefix + ".obj");
    meshgs::save_cloud(baked.cloud, prefix + ".mgsc");
    nlohmann::json stats = {{"energy", state.energy},
                            {"iterations", state.iterations},
                            {"energy_history", state.energy_history},
                            {"ambiguous_blends", moved.ambiguous_blends},
                            {"solve_ms", solve_ms},
                            {"gaussians", sc.cloud.gaussians.size()}};
    std::ofstream out(prefix + ".stats.json");
    out << stats.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + prefix + ".stats.json");
    if (summary) {
      summary->energy = state.energy;
      summary->iterations = state.iterations;
      summary->ambiguous_blends = moved.ambiguous_blends;
      summary->solve_ms = solve_ms;
    }
  });
}

mgs_status mgs_server_start(const char* scene_path, const char* bind, const char* static_root,
                            const mgs_config_options* config, mgs_server** out) {
  return guarded([&] {
    require(bind, "bind");
    require(out, "out");
    const meshgs::Config cfg = make_config(config);
    meshgs::ServerOptions options;
    meshgs::parse_bind(bind, &options);
    if (static_root) options.static_root = static_root;
    meshgs::SessionEngine engine = scene_path
                                       ? meshgs::SessionEngine(meshgs::load_scene(scene_path), cfg)
                                       : meshgs::SessionEngine(cfg);
    auto server = std::make_unique<mgs_server>();
    server->session = std::make_shared<meshgs::Session>(std::move(engine));
    server->server = std::make_unique<meshgs::Server>(server->session, options);
    server->server->start();
    *out = server.release();
  });
}

int mgs_server_port(const mgs_server* server) {
  return server ? static_cast<int>(server->server->port()) : 0;
}

void mgs_server_stop(mgs_server* server) {
  if (!server) return;
  server->server->stop();
  delete server;
}

}  // extern "C"
