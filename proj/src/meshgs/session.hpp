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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "meshgs/config.hpp"
#include "meshgs/deformer.hpp"
#include "meshgs/protocol.hpp"
#include "meshgs/renderer.hpp"
#include "meshgs/scene.hpp"

namespace meshgs {

/// A rendered view of the current session state, not yet numbered.
struct FrameContent {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
  std::string payload;  // base64 PNG
  protocol::FrameStats stats;
  std::vector<protocol::PickVertex> pick_vertices;
};

/// Single-threaded deform/render state machine behind a session.
///
/// Drags are applied lazily: the solve for the latest drag runs in render(),
/// so consecutive drags cost one capped solve. Release commits the dragged
/// vertex into the handle set, runs a converged solve from the rest pose and
/// drops the warm start.
class SessionEngine {
 public:
  static constexpr std::size_t kMaxPickVertices = 512;

  explicit SessionEngine(Config config = {});
  SessionEngine(Scene scene, Config config = {});

  bool has_scene() const { return scene_.has_value(); }
  const Scene& scene() const;
  void set_scene(Scene scene);

  /// Applies one client message. Returns false for messages that change
  /// nothing visible (request_frame). Throws Error on invalid input; a failed
  /// load_scene leaves the previous scene in place.
  bool apply(const protocol::ClientMessage& message);

  /// Runs any pending solve and renders. Throws Error(kSolve) if the pending
  /// handle set is unsolvable; the offending drag is then discarded.
  FrameContent render();

  /// Handles committed by set_handles and release, without the active drag.
  const HandleSet& handles() const { return handles_; }
  const DeformState& state() const { return state_; }
  const Camera& camera() const { return camera_; }
  bool rotate_normal_offset() const { return config_.transfer.rotate_normal_offset; }

 private:
  HandleSet active_handles() const;
  void solve_converged();
  void require_scene() const;

  Config config_;
  std::optional<Scene> scene_;
  std::unique_ptr<ArapSolver> solver_;
  Camera camera_;
  HandleSet handles_;
  std::optional<protocol::Drag> drag_;
  bool drag_pending_ = false;
  bool transfer_dirty_ = true;
  DeformState state_;
  std::vector<Splat> splats_;
  double last_solve_ms_ = 0.0;
};

/// Outbound queue of one connection. Frames are latest-wins; errors are
/// queued in order. `notify` is called (outside the lock) whenever something
/// new is available.
class Outbox {
 public:
  struct Item {
    std::string text;
    bool is_frame = false;
  };

  void set_notify(std::function<void()> notify);
  void push_frame(protocol::Frame frame);
  void push_error(const std::string& message);
  void close(const std::string& reason);

  /// Errors first, then the pending frame.
  std::optional<Item> pop();
  /// Blocks until an item is available, the box is closed or the timeout
  /// expires.
  std::optional<Item> wait_pop(std::chrono::milliseconds timeout);
  bool closed() const;
  std::string close_reason() const;
  std::uint64_t frames_sent() const;

 private:
  void notify();

  std::mutex notify_mutex_;  // held while the callback runs
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::function<void()> notify_;
  std::optional<std::string> frame_;
  std::deque<std::string> errors_;
  std::uint64_t next_frame_id_ = 1;
  bool closed_ = false;
  std::string close_reason_;
};

/// Network-agnostic session hub: one controlling connection, any number of
/// view-only ones, and a worker thread that owns the engine.
///
/// The receiver side (receive()) only parses and enqueues. A drag arriving
/// while the previous queued message is also a drag replaces it. The worker
/// drains the whole queue, applies it and renders one frame per batch.
/// Every connection numbers its own frames from 1.
class Session {
 public:
  using ConnectionId = std::uint64_t;

  explicit Session(SessionEngine engine);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// The first connection while no controller is attached becomes the
  /// controller; the others are view-only.
  ConnectionId connect();
  void disconnect(ConnectionId id);
  std::shared_ptr<Outbox> outbox(ConnectionId id) const;
  bool is_controller(ConnectionId id) const;

  /// Malformed messages are answered with an error on the same connection.
  void receive(ConnectionId id, const std::string& text);

  /// Blocks until the worker has processed everything queued so far.
  void flush();

 private:
  struct Pending {
    ConnectionId from = 0;
    protocol::ClientMessage message;
  };

  void run();
  void process(std::vector<Pending> batch);
  void deliver(const FrameContent& content, const std::vector<ConnectionId>& targets);
  double tick_fps();

  SessionEngine engine_;  // worker thread only

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Pending> queue_;
  std::map<ConnectionId, std::shared_ptr<Outbox>> outboxes_;
  std::optional<ConnectionId> controller_;
  ConnectionId next_id_ = 1;
  std::uint64_t enqueued_ = 0;
  std::uint64_t processed_ = 0;
  bool stop_ = false;

  std::deque<std::chrono::steady_clock::time_point> frame_times_;  // worker only
  std::thread worker_;
};

}  // namespace meshgs
