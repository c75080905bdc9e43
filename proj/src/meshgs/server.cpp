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

#include "meshgs/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "meshgs/error.hpp"

namespace meshgs {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

void parse_bind(const std::string& bind, ServerOptions* options) {
  std::string host = options->host;
  std::string port = bind;
  const std::size_t colon = bind.rfind(':');
  if (colon != std::string::npos) {
    host = bind.substr(0, colon);
    port = bind.substr(colon + 1);
    if (host.empty()) host = "0.0.0.0";
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range(port);
    options->host = host;
    options->port = static_cast<std::uint16_t>(p);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidArgument, "invalid bind address '" + bind + "'");
  }
}

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html><title>meshgs</title>"
    "<p>UI bundle not installed. The session endpoint is <code>/session</code>.</p>";

std::string mime_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

// Resolves a request target inside the static root, or returns an empty path.
std::filesystem::path resolve(const std::filesystem::path& root, std::string target) {
  target = target.substr(0, target.find_first_of("?#"));
  if (target.empty() || target.front() != '/') return {};
  std::filesystem::path rel = std::filesystem::path(target.substr(1)).lexically_normal();
  if (!rel.empty() && *rel.begin() == "..") return {};
  std::filesystem::path p = root / rel;
  std::error_code ec;
  if (std::filesystem::is_directory(p, ec)) p /= "index.html";
  return p;
}

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, std::shared_ptr<Session> session,
               std::function<void(Session::ConnectionId, bool)> track)
      : ws_(std::move(socket)), session_(std::move(session)), track_(std::move(track)) {}

  void accept(http::request<http::string_body> request) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(request, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->on_open();
    });
  }

 private:
  void on_open() {
    id_ = session_->connect();
    box_ = session_->outbox(id_);
    track_(id_, true);
    std::weak_ptr<WsConnection> weak = weak_from_this();
    auto executor = ws_.get_executor();
    box_->set_notify([weak, executor] {
      net::post(executor, [weak] {
        if (auto self = weak.lock()) self->pump();
      });
    });
    read();
    pump();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->session_->receive(self->id_, beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void pump() {
    if (writing_ || done_) return;
    if (std::optional<Outbox::Item> item = box_->pop()) {
      writing_ = true;
      out_ = std::move(item->text);
      ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec,
                                                                       std::size_t) {
        self->writing_ = false;
        if (ec) return self->shutdown();
        self->pump();
      });
      return;
    }
    if (box_->closed()) {
      done_ = true;
      websocket::close_reason reason(websocket::close_code::normal);
      reason.reason = box_->close_reason().substr(0, 120);
      ws_.async_close(reason, [self = shared_from_this()](beast::error_code) { self->shutdown(); });
    }
  }

  void shutdown() {
    if (id_ == 0) return;
    box_->set_notify(nullptr);
    session_->disconnect(id_);
    track_(id_, false);
    id_ = 0;
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Session> session_;
  std::function<void(Session::ConnectionId, bool)> track_;
  Session::ConnectionId id_ = 0;
  std::shared_ptr<Outbox> box_;
  beast::flat_buffer buffer_;
  std::string out_;
  bool writing_ = false;
  bool done_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, std::shared_ptr<Session> session,
                 std::filesystem::path root,
                 std::function<void(Session::ConnectionId, bool)> track)
      : stream_(std::move(socket)),
        session_(std::move(session)),
        root_(std::move(root)),
        track_(std::move(track)) {}

  void run() { read(); }

 private:
  void read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return;
                       self->handle();
                     });
  }

  void handle() {
    if (websocket::is_upgrade(request_)) {
      const std::string target(request_.target());
      if (target.substr(0, target.find('?')) == "/session") {
        stream_.expires_never();
        std::make_shared<WsConnection>(stream_.release_socket(), session_, track_)
            ->accept(std::move(request_));
        return;
      }
      return respond(http::status::not_found, "text/plain", "unknown endpoint\n");
    }
    if (request_.method() != http::verb::get && request_.method() != http::verb::head) {
      return respond(http::status::method_not_allowed, "text/plain", "method not allowed\n");
    }
    const std::string target(request_.target());
    if (root_.empty()) {
      if (target == "/" || target == "/index.html") {
        return respond(http::status::ok, "text/html", kPlaceholderPage);
      }
      return respond(http::status::not_found, "text/plain", "not found\n");
    }
    const std::filesystem::path path = resolve(root_, target);
    std::ifstream in(path, std::ios::binary);
    if (path.empty() || !in) return respond(http::status::not_found, "text/plain", "not found\n");
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, mime_type(path), body.str());
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
    res->set(http::field::server, "meshgs");
    res->set(http::field::content_type, type);
    res->keep_alive(request_.keep_alive());
    if (request_.method() == http::verb::head) {
      res->content_length(body.size());
    } else {
      res->body() = std::move(body);
      res->prepare_payload();
    }
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!res->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->read();
                      });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::shared_ptr<Session> session_;
  std::filesystem::path root_;
  std::function<void(Session::ConnectionId, bool)> track_;
};

}  // namespace

struct Server::Impl {
  std::shared_ptr<Session> session;
  ServerOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  std::mutex mutex;
  std::set<Session::ConnectionId> live;
  bool running = false;

  void track(Session::ConnectionId id, bool open) {
    std::lock_guard lock(mutex);
    if (open) live.insert(id);
    else live.erase(id);
  }

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpConnection>(std::move(socket), session, options.static_root,
                                       [this](Session::ConnectionId id, bool open) {
                                         track(id, open);
                                       })
          ->run();
      accept();
    });
  }
};

Server::Server(std::shared_ptr<Session> session, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->session = std::move(session);
  impl_->options = std::move(options);
}

Server::~Server() { stop(); }

void Server::start() {
  Impl& s = *impl_;
  if (s.running) return;
  try {
    const tcp::endpoint endpoint(net::ip::make_address(s.options.host), s.options.port);
    s.acceptor.open(endpoint.protocol());
    s.acceptor.set_option(net::socket_base::reuse_address(true));
    s.acceptor.bind(endpoint);
    s.acceptor.listen(net::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorCode::kIo, "cannot listen on " + s.options.host + ":" +
                                    std::to_string(s.options.port) + ": " + e.what());
  }
  s.accept();
  s.running = true;
  s.thread = std::thread([&s] { s.ioc.run(); });
}

std::uint16_t Server::port() const {
  beast::error_code ec;
  const tcp::endpoint endpoint = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : endpoint.port();
}

void Server::stop() {
  Impl& s = *impl_;
  if (!s.running) return;
  s.running = false;
  s.ioc.stop();
  s.thread.join();
  std::set<Session::ConnectionId> live;
  {
    std::lock_guard lock(s.mutex);
    live.swap(s.live);
  }
  for (Session::ConnectionId id : live) {
    if (std::shared_ptr<Outbox> box = s.session->outbox(id)) box->set_notify(nullptr);
    s.session->disconnect(id);
  }
  beast::error_code ignored;
  s.acceptor.close(ignored);
}

}  // namespace meshgs
