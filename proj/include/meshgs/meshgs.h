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

/* C interface to the meshgs engine. All functions return MGS_OK or an error
 * status; the message of the last failure on the calling thread is available
 * from mgs_last_error(). Objects are opaque and owned by the caller. */

#ifndef MESHGS_MESHGS_H_
#define MESHGS_MESHGS_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MGS_API __declspec(dllexport)
#else
#define MGS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mgs_status {
  MGS_OK = 0,
  MGS_ERR_INVALID_ARGUMENT = 1,
  MGS_ERR_IO = 2,
  MGS_ERR_PARSE = 3,
  MGS_ERR_DEGENERATE = 4,
  MGS_ERR_SOLVE = 5,
  MGS_ERR_NUMERIC = 6,
  MGS_ERR_VERSION = 7,
  MGS_ERR_PROTOCOL = 8,
  MGS_ERR_INTERNAL = 99
} mgs_status;

typedef struct mgs_mesh mgs_mesh;
typedef struct mgs_cloud mgs_cloud;
typedef struct mgs_scene mgs_scene;
typedef struct mgs_server mgs_server;

MGS_API const char* mgs_version(void);
MGS_API const char* mgs_status_string(mgs_status status);
/* Thread-local; valid until the next failing call on this thread. */
MGS_API const char* mgs_last_error(void);

/* Optional config file plus "key=value" overrides applied on top. */
typedef struct mgs_config_options {
  const char* config_path;
  const char* const* overrides;
  size_t override_count;
} mgs_config_options;

/* Meshes (OBJ). */
MGS_API mgs_status mgs_mesh_load(const char* path, mgs_mesh** out);
MGS_API void mgs_mesh_free(mgs_mesh* mesh);
MGS_API size_t mgs_mesh_vertex_count(const mgs_mesh* mesh);
MGS_API size_t mgs_mesh_face_count(const mgs_mesh* mesh);

/* Gaussian clouds bound to a mesh. */
MGS_API mgs_status mgs_cloud_init(const mgs_mesh* mesh, int sh_degree, mgs_cloud** out);
MGS_API mgs_status mgs_cloud_load(const char* path, const mgs_mesh* mesh, mgs_cloud** out);
MGS_API mgs_status mgs_cloud_save(const mgs_cloud* cloud, const char* path);
MGS_API void mgs_cloud_free(mgs_cloud* cloud);
MGS_API size_t mgs_cloud_size(const mgs_cloud* cloud);

/* Training. */
typedef struct mgs_metrics_row {
  int iteration;
  double loss;
  double psnr;
  double ssim;
  uint64_t gaussians;
  uint64_t faces;
  uint64_t oversized;
} mgs_metrics_row;

typedef void (*mgs_progress_fn)(const mgs_metrics_row* row, void* user);

typedef struct mgs_fit_summary {
  mgs_metrics_row final_row;
  double seconds;
} mgs_fit_summary;

/* Fits a cloud to the dataset and writes <out_prefix>.mgsc (cloud),
 * <out_prefix>.obj (refined mesh), <out_prefix>.csv (metrics) and
 * <out_prefix>.json (scene using the first held-out camera). `progress` and
 * `summary` may be NULL. */
MGS_API mgs_status mgs_fit(const char* manifest, const char* mesh_path,
                           const mgs_config_options* config, const char* out_prefix,
                           mgs_progress_fn progress, void* user, mgs_fit_summary* summary);

/* Scenes (JSON: mesh, cloud, camera, handle presets, background). */
MGS_API mgs_status mgs_scene_load(const char* path, mgs_scene** out);
MGS_API void mgs_scene_free(mgs_scene* scene);
MGS_API size_t mgs_scene_gaussian_count(const mgs_scene* scene);

/* Renders with the camera in `camera_json` (JSON text), or the scene camera
 * when NULL. Writes a PNG. */
MGS_API mgs_status mgs_render_scene(const mgs_scene* scene, const char* camera_json,
                                    const char* out_png);
/* Renders into caller memory: width * height * 3 doubles in [0, 1]. Call with
 * rgb == NULL to query the size. */
MGS_API mgs_status mgs_render_scene_rgb(const mgs_scene* scene, const char* camera_json,
                                        double* rgb, size_t capacity, int* width,
                                        int* height);

typedef struct mgs_deform_summary {
  double energy;
  int iterations;
  uint64_t ambiguous_blends;
  double solve_ms;
} mgs_deform_summary;

/* One converged solve for the handles file, then transfer and render.
 * Writes <out_prefix>.obj (deformed mesh), <out_prefix>.mgsc (baked cloud),
 * <out_prefix>.png and <out_prefix>.stats.json. */
MGS_API mgs_status mgs_deform_scene(const mgs_scene* scene, const char* handles_path,
                                    const mgs_config_options* config, const char* camera_json,
                                    const char* out_prefix, mgs_deform_summary* summary);

/* Session server. `scene_path` and `static_root` may be NULL. `bind` is
 * "host:port"; port 0 picks a free port. */
MGS_API mgs_status mgs_server_start(const char* scene_path, const char* bind,
                                    const char* static_root, const mgs_config_options* config,
                                    mgs_server** out);
MGS_API int mgs_server_port(const mgs_server* server);
/* Stops and frees the server. */
MGS_API void mgs_server_stop(mgs_server* server);

#ifdef __cplusplus
}
#endif

#endif  // MESHGS_MESHGS_H_
