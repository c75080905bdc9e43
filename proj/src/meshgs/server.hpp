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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "meshgs/session.hpp"

namespace meshgs {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  std::uint16_t port = 8080;
  /// Served at "/"; a placeholder page is served when empty.
  std::filesystem::path static_root;
};

/// Splits "host:port" (or ":port", or "port"). Throws Error(kInvalidArgument).
void parse_bind(const std::string& bind, ServerOptions* options);

/// HTTP static files at "/" and the session WebSocket at "/session", on one
/// background I/O thread.
class Server {
 public:
  Server(std::shared_ptr<Session> session, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts the I/O thread. Throws Error(kIo) if binding fails.
  void start();
  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace meshgs
