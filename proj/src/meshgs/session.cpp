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

#include "meshgs/session.hpp"

#include <algorithm>
#include <set>
#include <type_traits>

#include "meshgs/error.hpp"
#include "meshgs/image_io.hpp"

namespace meshgs {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Low zlib effort keeps encoding well under the render time.
constexpr int kFramePngCompression = 1;

}  // namespace

SessionEngine::SessionEngine(Config config) : config_(std::move(config)) {}

SessionEngine::SessionEngine(Scene scene, Config config) : config_(std::move(config)) {
  set_scene(std::move(scene));
}

const Scene& SessionEngine::scene() const {
  require_scene();
  return *scene_;
}

void SessionEngine::require_scene() const {
  if (!scene_) throw Error(ErrorCode::kInvalidArgument, "no scene loaded");
}

void SessionEngine::set_scene(Scene scene) {
  auto solver = std::make_unique<ArapSolver>(scene.mesh);
  scene_ = std::move(scene);
  solver_ = std::move(solver);
  camera_ = scene_->camera;
  handles_ = {};
  drag_.reset();
  drag_pending_ = false;
  state_ = identity_state(scene_->mesh);
  transfer_dirty_ = true;
  last_solve_ms_ = 0.0;
}

HandleSet SessionEngine::active_handles() const {
  HandleSet h = handles_;
  if (drag_) h.constrained[drag_->vertex] = drag_->target;
  return h;
}

void SessionEngine::solve_converged() {
  const Clock::time_point start = Clock::now();
  const HandleSet h = active_handles();
  solver_->reset_warm_start();
  if (h.constrained.empty()) {
    state_ = identity_state(scene_->mesh);
  } else {
    state_ = make_state(scene_->mesh, solver_->weights(), solver_->solve(h, config_.solve));
  }
  solver_->reset_warm_start();
  drag_pending_ = false;
  transfer_dirty_ = true;
  last_solve_ms_ = ms_since(start);
}

bool SessionEngine::apply(const protocol::ClientMessage& message) {
  using namespace protocol;
  return std::visit(
      [&](const auto& m) -> bool {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LoadScene>) {
          set_scene(load_scene(m.path));
          return true;
        } else if constexpr (std::is_same_v<T, SetCamera>) {
          require_scene();
          m.camera.validate();
          camera_ = m.camera;
          return true;
        } else if constexpr (std::is_same_v<T, SetHandles>) {
          require_scene();
          HandleSet h;
          for (const Handle& e : m.handles) h.constrained[e.vertex] = e.target;
          h.validate(scene_->mesh);
          const HandleSet previous = std::exchange(handles_, std::move(h));
          const std::optional<Drag> previous_drag = std::exchange(drag_, std::nullopt);
          try {
            solve_converged();
          } catch (...) {
            handles_ = previous;
            drag_ = previous_drag;
            throw;
          }
          return true;
        } else if constexpr (std::is_same_v<T, Drag>) {
          require_scene();
          if (m.vertex >= scene_->mesh.vertex_count()) {
            throw Error(ErrorCode::kInvalidArgument,
                        "drag vertex " + std::to_string(m.vertex) + " out of range");
          }
          drag_ = m;
          drag_pending_ = true;
          return true;
        } else if constexpr (std::is_same_v<T, Release>) {
          require_scene();
          if (!drag_) return false;
          handles_.constrained[drag_->vertex] = drag_->target;
          drag_.reset();
          solve_converged();
          return true;
        } else if constexpr (std::is_same_v<T, SetFlag>) {
          if (m.name != "rotate_normal_offset" && m.name != "rotate-normal-offset") {
            throw Error(ErrorCode::kInvalidArgument, "unknown flag '" + m.name + "'");
          }
          config_.transfer.rotate_normal_offset = m.value;
          transfer_dirty_ = true;
          return true;
        } else {
          return false;
        }
      },
      message);
}

FrameContent SessionEngine::render() {
  require_scene();
  const Scene& sc = *scene_;
  FrameContent out;
  if (drag_pending_) {
    const Clock::time_point start = Clock::now();
    SolveOptions opts = config_.solve;
    opts.max_iters = config_.interactive_iters;
    try {
      state_ = make_state(sc.mesh, solver_->weights(), solver_->solve(active_handles(), opts));
    } catch (...) {
      drag_.reset();
      drag_pending_ = false;
      throw;
    }
    drag_pending_ = false;
    transfer_dirty_ = true;
    last_solve_ms_ = ms_since(start);
  }
  Clock::time_point start = Clock::now();
  if (transfer_dirty_) {
    splats_ = transfer(sc.cloud, sc.mesh, state_, config_.transfer).splats;
    transfer_dirty_ = false;
    last_solve_ms_ += ms_since(start);
  }
  out.stats.solve_ms = last_solve_ms_;
  last_solve_ms_ = 0.0;

  start = Clock::now();
  RenderOptions ropts;
  ropts.background = sc.background;
  Framebuffer fb = meshgs::render(splats_, sc.cloud.sh_degree, camera_, ropts);
  out.payload = protocol::base64_encode(
      encode_png(fb.width, fb.height, fb.rgb, kFramePngCompression));
  out.stats.render_ms = ms_since(start);
  out.stats.gaussians = sc.cloud.gaussians.size();
  out.width = fb.width;
  out.height = fb.height;
  out.rgb = std::move(fb.rgb);

  // Pick candidates: a strided subset of the deformed vertices plus every
  // handle, in view.
  const std::size_t n = state_.vertices.size();
  const std::size_t stride = std::max<std::size_t>(1, (n + kMaxPickVertices - 1) / kMaxPickVertices);
  const HandleSet active = active_handles();
  RenderOptions defaults;
  for (std::size_t v = 0; v < n; ++v) {
    if (v % stride != 0 && !active.constrained.count(static_cast<VertexId>(v))) continue;
    const Vec3 p = camera_.rotation * state_.vertices[v] + camera_.translation;
    if (p.z() <= defaults.near_plane) continue;
    const double x = camera_.fx * p.x() / p.z() + camera_.cx;
    const double y = camera_.fy * p.y() / p.z() + camera_.cy;
    if (x < 0.0 || y < 0.0 || x >= camera_.width || y >= camera_.height) continue;
    out.pick_vertices.push_back({static_cast<VertexId>(v), x, y, p.z()});
  }
  return out;
}

// Outbox

void Outbox::set_notify(std::function<void()> notify) {
  std::lock_guard guard(notify_mutex_);
  notify_ = std::move(notify);
}

void Outbox::notify() {
  cv_.notify_all();
  std::lock_guard guard(notify_mutex_);
  if (notify_) notify_();
}

void Outbox::push_frame(protocol::Frame frame) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    frame.frame_id = next_frame_id_++;
    frame_ = protocol::serialize(protocol::ServerMessage(std::move(frame)));
  }
  notify();
}

void Outbox::push_error(const std::string& message) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    errors_.push_back(protocol::serialize(protocol::ServerMessage(protocol::ErrorReply{message})));
  }
  notify();
}

void Outbox::close(const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closed_ = true;
    close_reason_ = reason;
  }
  notify();
}

std::optional<Outbox::Item> Outbox::pop() {
  std::lock_guard lock(mutex_);
  if (!errors_.empty()) {
    Item item{std::move(errors_.front()), false};
    errors_.pop_front();
    return item;
  }
  if (frame_) {
    Item item{std::move(*frame_), true};
    frame_.reset();
    return item;
  }
  return std::nullopt;
}

std::optional<Outbox::Item> Outbox::wait_pop(std::chrono::milliseconds timeout) {
  {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || !errors_.empty() || frame_.has_value(); });
  }
  return pop();
}

bool Outbox::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::string Outbox::close_reason() const {
  std::lock_guard lock(mutex_);
  return close_reason_;
}

std::uint64_t Outbox::frames_sent() const {
  std::lock_guard lock(mutex_);
  return next_frame_id_ - 1;
}

// Session

Session::Session(SessionEngine engine) : engine_(std::move(engine)) {
  worker_ = std::thread([this] { run(); });
}

Session::~Session() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

Session::ConnectionId Session::connect() {
  std::lock_guard lock(mutex_);
  const ConnectionId id = next_id_++;
  outboxes_[id] = std::make_shared<Outbox>();
  if (!controller_) controller_ = id;
  return id;
}

void Session::disconnect(ConnectionId id) {
  std::shared_ptr<Outbox> box;
  {
    std::lock_guard lock(mutex_);
    auto it = outboxes_.find(id);
    if (it == outboxes_.end()) return;
    box = it->second;
    outboxes_.erase(it);
    if (controller_ == id) controller_.reset();
  }
  box->close("disconnected");
}

std::shared_ptr<Outbox> Session::outbox(ConnectionId id) const {
  std::lock_guard lock(mutex_);
  auto it = outboxes_.find(id);
  return it == outboxes_.end() ? nullptr : it->second;
}

bool Session::is_controller(ConnectionId id) const {
  std::lock_guard lock(mutex_);
  return controller_ == id;
}

void Session::receive(ConnectionId id, const std::string& text) {
  std::shared_ptr<Outbox> box = outbox(id);
  if (!box) return;
  protocol::ClientMessage message;
  try {
    message = protocol::parse_client(text);
  } catch (const Error& e) {
    box->push_error(e.what());
    return;
  }
  {
    std::lock_guard lock(mutex_);
    const bool controller = controller_ == id;
    if (!controller && !std::holds_alternative<protocol::RequestFrame>(message)) {
      box->push_error(std::string("view-only connection: '") + protocol::type_name(message) +
                      "' is not accepted");
      return;
    }
    if (std::holds_alternative<protocol::Drag>(message) && !queue_.empty() &&
        queue_.back().from == id && std::holds_alternative<protocol::Drag>(queue_.back().message)) {
      queue_.back().message = std::move(message);
      return;
    }
    queue_.push_back({id, std::move(message)});
    ++enqueued_;
  }
  cv_.notify_all();
}

void Session::flush() {
  std::unique_lock lock(mutex_);
  const std::uint64_t target = enqueued_;
  idle_cv_.wait(lock, [&] { return processed_ >= target || stop_; });
}

void Session::run() {
  for (;;) {
    std::vector<Pending> batch;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_) return;
      batch.assign(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
      queue_.clear();
    }
    const std::size_t n = batch.size();
    process(std::move(batch));
    {
      std::lock_guard lock(mutex_);
      processed_ += n;
    }
    idle_cv_.notify_all();
  }
}

void Session::process(std::vector<Pending> batch) {
  bool changed = false;
  std::set<ConnectionId> requesters;
  std::set<ConnectionId> senders;
  for (Pending& p : batch) {
    senders.insert(p.from);
    try {
      if (engine_.apply(p.message)) {
        changed = true;
      } else {
        requesters.insert(p.from);
      }
    } catch (const std::exception& e) {
      std::shared_ptr<Outbox> box = outbox(p.from);
      if (!box) continue;
      box->push_error(e.what());
      if (std::holds_alternative<protocol::LoadScene>(p.message)) {
        box->close(std::string("scene load failed: ") + e.what());
        std::lock_guard lock(mutex_);
        outboxes_.erase(p.from);
        if (controller_ == p.from) controller_.reset();
      }
    }
  }
  if (!changed && requesters.empty()) return;

  std::vector<ConnectionId> targets;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, box] : outboxes_) {
      if (changed || requesters.count(id)) targets.push_back(id);
    }
  }
  FrameContent content;
  try {
    content = engine_.render();
  } catch (const std::exception& e) {
    for (ConnectionId id : senders) {
      if (std::shared_ptr<Outbox> box = outbox(id)) box->push_error(e.what());
    }
    return;
  }
  content.stats.fps = tick_fps();
  deliver(content, targets);
}

double Session::tick_fps() {
  const Clock::time_point now = Clock::now();
  frame_times_.push_back(now);
  while (now - frame_times_.front() > std::chrono::seconds(1)) frame_times_.pop_front();
  return static_cast<double>(frame_times_.size());
}

void Session::deliver(const FrameContent& content, const std::vector<ConnectionId>& targets) {
  protocol::Frame frame;
  frame.payload = content.payload;
  frame.stats = content.stats;
  frame.pick_vertices = content.pick_vertices;
  for (ConnectionId id : targets) {
    if (std::shared_ptr<Outbox> box = outbox(id)) box->push_frame(frame);
  }
}

}  // namespace meshgs
