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

// meshgs command line: fit, render, deform, serve.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "meshgs/meshgs.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitSolve = 3;

int exit_code(mgs_status status) {
  switch (status) {
    case MGS_OK:
      return kExitOk;
    case MGS_ERR_DEGENERATE:
    case MGS_ERR_SOLVE:
    case MGS_ERR_NUMERIC:
      return kExitSolve;
    case MGS_ERR_INTERNAL:
      return kExitInternal;
    default:
      return kExitInput;
  }
}

int report(mgs_status status) {
  if (status != MGS_OK) {
    std::cerr << "error: " << mgs_status_string(status) << ": " << mgs_last_error() << '\n';
  }
  return exit_code(status);
}

// Holds the storage behind an mgs_config_options.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> flags;
  std::vector<std::string> overrides;
  long long seed = -1;

  std::vector<const char*> pointers;
  mgs_config_options options{};

  const mgs_config_options* build() {
    overrides.clear();
    for (const std::string& f : flags) overrides.push_back(f);
    if (seed >= 0) overrides.push_back("seed=" + std::to_string(seed));
    pointers.clear();
    for (const std::string& o : overrides) pointers.push_back(o.c_str());
    options.config_path = config_path.empty() ? nullptr : config_path.c_str();
    options.overrides = pointers.data();
    options.override_count = pointers.size();
    return &options;
  }
};

void add_config_flags(CLI::App* cmd, ConfigArgs* args) {
  cmd->add_option("--config", args->config_path, "key=value config file");
  cmd->add_option("--flag", args->flags, "override a config key, e.g. rotate-normal-offset=false");
  cmd->add_option("--seed", args->seed, "random seed");
}

bool read_text(const std::string& path, std::string* out) {
  std::ifstream in(path);
  if (!in) return false;
  std::ostringstream s;
  s << in.rdbuf();
  *out = s.str();
  return true;
}

// Loads the optional --camera file; returns false (after reporting) on failure.
bool load_camera(const std::string& path, std::string* text) {
  if (path.empty()) return true;
  if (!read_text(path, text)) {
    std::cerr << "error: camera file not found: " << path << '\n';
    return false;
  }
  return true;
}

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh-bound Gaussian splatting: fit, render, deform and serve"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mgs_version()));

  ConfigArgs fit_cfg;
  std::string manifest, mesh_path, out_prefix = "fit";
  bool quiet = false;
  CLI::App* fit = app.add_subcommand("fit", "fit a mesh-bound cloud to a multi-view dataset");
  fit->add_option("manifest", manifest, "dataset manifest (transforms JSON)")->required();
  fit->add_option("--mesh", mesh_path, "bound mesh (OBJ)")->required();
  fit->add_option("-o,--out", out_prefix, "output prefix for .mgsc/.obj/.csv/.json");
  fit->add_flag("-q,--quiet", quiet, "no progress output");
  add_config_flags(fit, &fit_cfg);

  std::string scene_path, camera_path, out_png = "render.png";
  CLI::App* render = app.add_subcommand("render", "render a scene to PNG");
  render->add_option("--scene", scene_path, "scene JSON")->required();
  render->add_option("--camera", camera_path, "camera JSON (defaults to the scene camera)");
  render->add_option("-o,--out", out_png, "output PNG");

  ConfigArgs deform_cfg;
  std::string handles_path, deform_prefix = "deformed";
  CLI::App* deform = app.add_subcommand("deform", "solve handles, transfer, bake and render");
  deform->add_option("--scene", scene_path, "scene JSON")->required();
  deform->add_option("--handles", handles_path, "handles JSON")->required();
  deform->add_option("--camera", camera_path, "camera JSON (defaults to the scene camera)");
  deform->add_option("-o,--out", deform_prefix, "output prefix for .obj/.mgsc/.png/.stats.json");
  add_config_flags(deform, &deform_cfg);

  ConfigArgs serve_cfg;
  std::string bind = "127.0.0.1:8080", static_root;
  CLI::App* serve = app.add_subcommand("serve", "interactive session server");
  serve->add_option("--scene", scene_path, "scene JSON");
  serve->add_option("--bind", bind, "host:port");
  serve->add_option("--static", static_root, "UI bundle directory served at /");
  add_config_flags(serve, &serve_cfg);

  CLI11_PARSE(app, argc, argv);

  if (fit->parsed()) {
    struct Progress {
      bool quiet;
    } state{quiet};
    mgs_fit_summary summary{};
    const mgs_status status = mgs_fit(
        manifest.c_str(), mesh_path.c_str(), fit_cfg.build(), out_prefix.c_str(),
        [](const mgs_metrics_row* r, void* user) {
          if (static_cast<Progress*>(user)->quiet) return;
          std::printf("iter %6d  loss %.5f  psnr %.3f  ssim %.4f  gaussians %llu  faces %llu\n",
                      r->iteration, r->loss, r->psnr, r->ssim,
                      static_cast<unsigned long long>(r->gaussians),
                      static_cast<unsigned long long>(r->faces));
          std::fflush(stdout);
        },
        &state, &summary);
    if (status == MGS_OK) {
      std::printf("final psnr %.3f dB after %d iterations (%.1f s); wrote %s.{mgsc,obj,csv,json}\n",
                  summary.final_row.psnr, summary.final_row.iteration, summary.seconds,
                  out_prefix.c_str());
    }
    return report(status);
  }

  if (render->parsed() || deform->parsed()) {
    std::string camera_text;
    if (!load_camera(camera_path, &camera_text)) return kExitInput;
    const char* camera = camera_path.empty() ? nullptr : camera_text.c_str();
    mgs_scene* scene = nullptr;
    mgs_status status = mgs_scene_load(scene_path.c_str(), &scene);
    if (status != MGS_OK) return report(status);
    if (render->parsed()) {
      status = mgs_render_scene(scene, camera, out_png.c_str());
    } else {
      mgs_deform_summary summary{};
      status = mgs_deform_scene(scene, handles_path.c_str(), deform_cfg.build(), camera,
                                deform_prefix.c_str(), &summary);
      if (status == MGS_OK) {
        std::printf("energy %.9g after %d iterations, solve %.1f ms\n", summary.energy,
                    summary.iterations, summary.solve_ms);
      }
    }
    mgs_scene_free(scene);
    return report(status);
  }

  mgs_server* server = nullptr;
  const mgs_status status =
      mgs_server_start(scene_path.empty() ? nullptr : scene_path.c_str(), bind.c_str(),
                       static_root.empty() ? nullptr : static_root.c_str(), serve_cfg.build(),
                       &server);
  if (status != MGS_OK) return report(status);
  std::printf("serving on port %d (WebSocket /session)\n", mgs_server_port(server));
  std::fflush(stdout);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  mgs_server_stop(server);
  return kExitOk;
}
