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

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "meshgs/error.hpp"
#include "meshgs/primitives.hpp"
#include "meshgs/protocol.hpp"
#include "meshgs/server.hpp"
#include "meshgs/session.hpp"

namespace meshgs {
namespace {

namespace fs = std::filesystem;
namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using namespace std::chrono_literals;
using protocol::ClientMessage;

Scene test_scene(int size = 64) {
  Scene s;
  s.mesh = make_icosphere(2);
  s.cloud = init_from_mesh(s.mesh, 1);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (BoundGaussian& g : s.cloud.gaussians) {
    g.sh[0] = Vec3(u(rng), u(rng), u(rng));
    g.sh[1] = 0.3 * Vec3(u(rng), u(rng), u(rng));
    g.opacity_logit = opacity_logit_for(0.9);
    g.tau_logit = tau_logit_for(0.3 * u(rng));
  }
  s.camera = look_at(Vec3(0.3, -0.4, 4.0), Vec3::Zero(), Vec3::UnitY(), 1.4 * size, size, size);
  s.background = Vec3(0.1, 0.2, 0.3);
  return s;
}

// Rotation drag: vertex 0 moves while the antipodal cap stays put.
struct DragSetup {
  VertexId anchor = 0;
  VertexId handle = 0;
};

DragSetup pick_poles(const TriangleMesh& mesh) {
  DragSetup d;
  for (VertexId v = 0; v < mesh.vertex_count(); ++v) {
    if (mesh.vertices()[v].y() < mesh.vertices()[d.anchor].y()) d.anchor = v;
    if (mesh.vertices()[v].y() > mesh.vertices()[d.handle].y()) d.handle = v;
  }
  return d;
}

protocol::SetHandles anchor_handles(const Scene& s, const DragSetup& d) {
  return {{{d.anchor, s.mesh.vertices()[d.anchor]}}};
}

protocol::Drag drag_to(const Scene& s, const DragSetup& d, const Vec3& offset) {
  return {d.handle, s.mesh.vertices()[d.handle] + offset};
}

TEST(SessionEngine, RestFrameMatchesDirectRender) {
  const Scene s = test_scene();
  SessionEngine engine(s);
  EXPECT_FALSE(engine.apply(protocol::RequestFrame{}));
  const FrameContent f = engine.render();
  RenderOptions opts;
  opts.background = s.background;
  const Framebuffer direct = render(s.cloud, s.mesh, s.camera, opts);
  EXPECT_EQ(f.width, 64);
  EXPECT_EQ(f.rgb, direct.rgb);
  EXPECT_EQ(f.stats.gaussians, s.cloud.gaussians.size());
  const std::vector<std::uint8_t> png = protocol::base64_decode(f.payload);
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png[1], 'P');
}

TEST(SessionEngine, InteractiveSolveIsCapped) {
  const Scene s = test_scene();
  const DragSetup d = pick_poles(s.mesh);
  SessionEngine engine(s);
  engine.apply(anchor_handles(s, d));
  engine.apply(drag_to(s, d, Vec3(0.6, 0.0, 0.0)));
  engine.render();
  EXPECT_LE(engine.state().iterations, kInteractiveIterations);
  EXPECT_EQ(engine.state().vertices[d.handle], s.mesh.vertices()[d.handle] + Vec3(0.6, 0.0, 0.0));
}

TEST(SessionEngine, WarmStartKeepsImprovingSameDrag) {
  const Scene s = test_scene();
  const DragSetup d = pick_poles(s.mesh);
  SessionEngine engine(s);
  engine.apply(anchor_handles(s, d));
  double previous = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    engine.apply(drag_to(s, d, Vec3(0.8, 0.0, 0.3)));
    engine.render();
    EXPECT_LE(engine.state().energy, previous * (1.0 + 1e-12));
    previous = engine.state().energy;
  }
}

TEST(SessionEngine, ReleaseMatchesConvergedSolve) {
  const Scene s = test_scene();
  const DragSetup d = pick_poles(s.mesh);
  SessionEngine engine(s);
  engine.apply(anchor_handles(s, d));
  const protocol::Drag drag = drag_to(s, d, Vec3(0.5, -0.2, 0.1));
  engine.apply(drag);
  engine.render();
  EXPECT_TRUE(engine.apply(protocol::Release{}));
  HandleSet h;
  h.constrained[d.anchor] = s.mesh.vertices()[d.anchor];
  h.constrained[drag.vertex] = drag.target;
  EXPECT_EQ(engine.handles().constrained, h.constrained);
  const DeformState expected = arap_solve(s.mesh, h);
  EXPECT_EQ(engine.state().vertices, expected.vertices);
  EXPECT_EQ(engine.state().energy, expected.energy);
}

TEST(SessionEngine, DragReleaseDragIsDeterministic) {
  const Scene s = test_scene();
  const DragSetup d = pick_poles(s.mesh);
  SessionEngine engine(s);
  engine.apply(anchor_handles(s, d));
  const protocol::Drag drag = drag_to(s, d, Vec3(0.4, 0.3, 0.0));
  engine.apply(drag);
  const FrameContent first = engine.render();
  engine.apply(protocol::Release{});
  engine.render();
  engine.apply(drag);
  const FrameContent again = engine.render();
  EXPECT_EQ(first.payload, again.payload);
  EXPECT_EQ(first.rgb, again.rgb);
}

TEST(SessionEngine, FlagChangesRotatedOffsets) {
  const Scene s = test_scene();
  const DragSetup d = pick_poles(s.mesh);
  SessionEngine engine(s);
  engine.apply(anchor_handles(s, d));
  engine.apply(drag_to(s, d, Vec3(1.2, -0.8, 0.0)));
  engine.apply(protocol::Release{});
  const FrameContent rotated = engine.render();
  EXPECT_TRUE(engine.apply(protocol::SetFlag{"rotate-normal-offset", false}));
  EXPECT_FALSE(engine.rotate_normal_offset());
  const FrameContent literal = engine.render();
  EXPECT_NE(rotated.rgb, literal.rgb);
  EXPECT_THROW(engine.apply(protocol::SetFlag{"warp_speed", true}), Error);
}

TEST(SessionEngine, InvalidInputLeavesStateUsable) {
  const Scene s = test_scene();
  SessionEngine engine(s);
  EXPECT_THROW(engine.apply(protocol::Drag{100000, Vec3::Zero()}), Error);
  EXPECT_THROW(engine.apply(protocol::SetHandles{{{100000, Vec3::Zero()}}}), Error);
  Camera bad = s.camera;
  bad.fx = -1.0;
  EXPECT_THROW(engine.apply(protocol::SetCamera{bad}), Error);
  EXPECT_THROW(engine.apply(protocol::LoadScene{"/nonexistent/scene.json"}), Error);
  EXPECT_EQ(engine.render().rgb, SessionEngine(s).render().rgb);
}

TEST(SessionEngine, NoSceneIsAnError) {
  SessionEngine engine;
  EXPECT_THROW(engine.render(), Error);
  EXPECT_THROW(engine.apply(protocol::Drag{0, Vec3::Zero()}), Error);
}

TEST(SessionEngine, PickVerticesAreProjectedAndIncludeHandles) {
  Scene s = test_scene();
  s.mesh = make_icosphere(4);  // 2562 vertices
  s.cloud = init_from_mesh(s.mesh, 0);
  const DragSetup d = pick_poles(s.mesh);
  SessionEngine engine(s);
  engine.apply(anchor_handles(s, d));
  engine.apply(protocol::Drag{d.handle, s.mesh.vertices()[d.handle] + Vec3(0.1, 0.0, 0.0)});
  const FrameContent f = engine.render();
  EXPECT_GT(f.pick_vertices.size(), 50u);
  EXPECT_LE(f.pick_vertices.size(), SessionEngine::kMaxPickVertices + 2);
  bool found = false;
  for (const protocol::PickVertex& p : f.pick_vertices) {
    const Vec3 c = s.camera.rotation * engine.state().vertices[p.vertex] + s.camera.translation;
    EXPECT_NEAR(p.depth, c.z(), 1e-12);
    EXPECT_NEAR(p.x, s.camera.fx * c.x() / c.z() + s.camera.cx, 1e-9);
    EXPECT_NEAR(p.y, s.camera.fy * c.y() / c.z() + s.camera.cy, 1e-9);
    found = found || p.vertex == d.handle;
  }
  EXPECT_TRUE(found);
}

TEST(SessionEngine, LoadSceneReplacesState) {
  const fs::path dir = fs::temp_directory_path() / "meshgs_session_load";
  fs::create_directories(dir);
  Scene s = test_scene(32);
  save_scene(s, dir / "scene.json");
  SessionEngine engine;
  EXPECT_TRUE(engine.apply(protocol::LoadScene{(dir / "scene.json").string()}));
  const FrameContent f = engine.render();
  EXPECT_EQ(f.width, 32);
  EXPECT_EQ(f.stats.gaussians, s.cloud.gaussians.size());
  fs::remove_all(dir);
}

protocol::ServerMessage next(Outbox& box) {
  std::optional<Outbox::Item> item = box.wait_pop(10s);
  if (!item) throw std::runtime_error("timed out waiting for a message");
  return protocol::parse_server(item->text);
}

TEST(Session, RequestFrameGivesFrameOne) {
  Session session{SessionEngine(test_scene())};
  const auto id = session.connect();
  session.receive(id, R"({"type": "request_frame"})");
  const protocol::ServerMessage m = next(*session.outbox(id));
  ASSERT_TRUE(std::holds_alternative<protocol::Frame>(m));
  EXPECT_EQ(std::get<protocol::Frame>(m).frame_id, 1u);
}

TEST(Session, MalformedMessageIsAnsweredAndSessionContinues) {
  Session session{SessionEngine(test_scene())};
  const auto id = session.connect();
  session.receive(id, "{not json");
  session.receive(id, R"({"type": "teleport"})");
  session.receive(id, R"({"type": "request_frame"})");
  auto box = session.outbox(id);
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(next(*box)));
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(next(*box)));
  EXPECT_TRUE(std::holds_alternative<protocol::Frame>(next(*box)));
  EXPECT_FALSE(box->closed());
}

TEST(Session, SecondConnectionIsViewOnly) {
  const Scene s = test_scene();
  Session session{SessionEngine(s)};
  const auto ui = session.connect();
  const auto viewer = session.connect();
  EXPECT_TRUE(session.is_controller(ui));
  EXPECT_FALSE(session.is_controller(viewer));
  session.receive(viewer, protocol::serialize(protocol::Drag{0, Vec3::Zero()}));
  const protocol::ServerMessage rejected = next(*session.outbox(viewer));
  ASSERT_TRUE(std::holds_alternative<protocol::ErrorReply>(rejected));
  EXPECT_NE(std::get<protocol::ErrorReply>(rejected).message.find("view-only"), std::string::npos);
  session.receive(viewer, R"({"type": "request_frame"})");
  EXPECT_TRUE(std::holds_alternative<protocol::Frame>(next(*session.outbox(viewer))));

  // Controller edits are broadcast; each connection numbers its own frames.
  session.receive(ui, protocol::serialize(protocol::Drag{0, s.mesh.vertices()[0]}));
  session.flush();
  const auto a = std::get<protocol::Frame>(next(*session.outbox(ui)));
  const auto b = std::get<protocol::Frame>(next(*session.outbox(viewer)));
  EXPECT_EQ(a.frame_id, 1u);
  EXPECT_EQ(b.frame_id, 2u);
  EXPECT_EQ(a.payload, b.payload);
}

TEST(Session, NewControllerStartsAtFrameOne) {
  Session session{SessionEngine(test_scene())};
  auto first = session.connect();
  for (int i = 0; i < 3; ++i) {
    session.receive(first, R"({"type": "request_frame"})");
    next(*session.outbox(first));
  }
  EXPECT_EQ(session.outbox(first)->frames_sent(), 3u);
  session.disconnect(first);
  const auto second = session.connect();
  EXPECT_TRUE(session.is_controller(second));
  session.receive(second, R"({"type": "request_frame"})");
  EXPECT_EQ(std::get<protocol::Frame>(next(*session.outbox(second))).frame_id, 1u);
}

TEST(Session, FailedLoadClosesConnection) {
  Session session{SessionEngine(test_scene())};
  const auto id = session.connect();
  auto box = session.outbox(id);
  session.receive(id, protocol::serialize(protocol::LoadScene{"/nonexistent/scene.json"}));
  session.flush();
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(next(*box)));
  EXPECT_TRUE(box->closed());
  EXPECT_NE(box->close_reason().find("scene load failed"), std::string::npos);
  EXPECT_FALSE(session.is_controller(id));
  EXPECT_TRUE(session.is_controller(session.connect()));
}

TEST(Session, DragBurstCoalescesInOrder) {
  const Scene s = test_scene();
  const DragSetup d = pick_poles(s.mesh);
  Session session{SessionEngine(s)};
  const auto id = session.connect();
  auto box = session.outbox(id);
  session.receive(id, protocol::serialize(anchor_handles(s, d)));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  protocol::Drag last;
  std::vector<std::uint64_t> ids;
  const int kDrags = 60;
  for (int i = 0; i < kDrags; ++i) {
    last = drag_to(s, d, Vec3(u(rng), u(rng), u(rng)));
    session.receive(id, protocol::serialize(last));
    while (std::optional<Outbox::Item> item = box->pop()) {
      ids.push_back(std::get<protocol::Frame>(protocol::parse_server(item->text)).frame_id);
    }
  }
  session.flush();
  protocol::Frame final_frame;
  while (std::optional<Outbox::Item> item = box->pop()) {
    final_frame = std::get<protocol::Frame>(protocol::parse_server(item->text));
    ids.push_back(final_frame.frame_id);
  }
  ASSERT_FALSE(ids.empty());
  for (std::size_t i = 1; i < ids.size(); ++i) EXPECT_GT(ids[i], ids[i - 1]);
  EXPECT_LE(ids.size(), static_cast<std::size_t>(kDrags + 1));
  ASSERT_GT(final_frame.frame_id, 0u);

  // The handle sits exactly on the last target in the last frame.
  const Camera& c = s.camera;
  const Vec3 p = c.rotation * last.target + c.translation;
  bool found = false;
  for (const protocol::PickVertex& pv : final_frame.pick_vertices) {
    if (pv.vertex != d.handle) continue;
    found = true;
    EXPECT_NEAR(pv.x, c.fx * p.x() / p.z() + c.cx, 1e-9);
    EXPECT_NEAR(pv.y, c.fy * p.y() / p.z() + c.cy, 1e-9);
  }
  EXPECT_TRUE(found);
}

TEST(Outbox, FramesAreLatestWins) {
  Outbox box;
  protocol::Frame f;
  f.payload = "a";
  box.push_frame(f);
  f.payload = "b";
  box.push_frame(f);
  box.push_error("oops");
  const auto e = box.pop();
  ASSERT_TRUE(e);
  EXPECT_FALSE(e->is_frame);
  const auto latest = box.pop();
  ASSERT_TRUE(latest);
  const auto frame = std::get<protocol::Frame>(protocol::parse_server(latest->text));
  EXPECT_EQ(frame.payload, "b");
  EXPECT_EQ(frame.frame_id, 2u);
  EXPECT_FALSE(box.pop());
}

// Network

struct WsClient {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit WsClient(std::uint16_t port) {
    tcp::resolver resolver(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/session");
  }
  void send(const std::string& text) { ws.write(net::buffer(text)); }
  protocol::ServerMessage receive() {
    beast::flat_buffer buffer;
    ws.read(buffer);
    return protocol::parse_server(beast::buffers_to_string(buffer.data()));
  }
};

http::response<http::string_body> http_get(std::uint16_t port, const std::string& target) {
  net::io_context ioc;
  tcp::socket socket(ioc);
  tcp::resolver resolver(ioc);
  net::connect(socket, resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(socket, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(socket, buffer, res);
  return res;
}

TEST(Server, ParseBind) {
  ServerOptions o;
  parse_bind("0.0.0.0:9000", &o);
  EXPECT_EQ(o.host, "0.0.0.0");
  EXPECT_EQ(o.port, 9000);
  parse_bind("1234", &o);
  EXPECT_EQ(o.port, 1234);
  EXPECT_THROW(parse_bind("localhost:http", &o), Error);
  EXPECT_THROW(parse_bind("host:70000", &o), Error);
}

TEST(Server, StaticFilesAndSessionEndpoint) {
  const fs::path root = fs::temp_directory_path() / "meshgs_static";
  fs::create_directories(root / "assets");
  std::ofstream(root / "index.html") << "<html>editor</html>";
  std::ofstream(root / "assets" / "app.js") << "console.log(1);";

  auto session = std::make_shared<Session>(SessionEngine(test_scene()));
  ServerOptions options;
  options.port = 0;
  options.static_root = root;
  Server server(session, options);
  server.start();
  const std::uint16_t port = server.port();
  ASSERT_NE(port, 0);

  auto index = http_get(port, "/");
  EXPECT_EQ(index.result(), http::status::ok);
  EXPECT_EQ(index.body(), "<html>editor</html>");
  EXPECT_EQ(index[http::field::content_type], "text/html");
  auto js = http_get(port, "/assets/app.js?v=2");
  EXPECT_EQ(js.result(), http::status::ok);
  EXPECT_EQ(js[http::field::content_type], "text/javascript");
  EXPECT_EQ(http_get(port, "/../../etc/passwd").result(), http::status::not_found);
  EXPECT_EQ(http_get(port, "/missing.css").result(), http::status::not_found);

  WsClient ui(port);
  ui.send(R"({"type": "request_frame"})");
  auto m = ui.receive();
  ASSERT_TRUE(std::holds_alternative<protocol::Frame>(m));
  EXPECT_EQ(std::get<protocol::Frame>(m).frame_id, 1u);
  ui.send("garbage");
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(ui.receive()));

  WsClient viewer(port);
  viewer.send(R"({"type": "release"})");
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(viewer.receive()));
  viewer.send(R"({"type": "request_frame"})");
  m = viewer.receive();
  ASSERT_TRUE(std::holds_alternative<protocol::Frame>(m));
  EXPECT_EQ(std::get<protocol::Frame>(m).frame_id, 1u);

  server.stop();
  fs::remove_all(root);
}

TEST(Server, PlaceholderWithoutStaticRoot) {
  auto session = std::make_shared<Session>(SessionEngine());
  ServerOptions options;
  options.port = 0;
  Server server(session, options);
  server.start();
  auto res = http_get(server.port(), "/");
  EXPECT_EQ(res.result(), http::status::ok);
  EXPECT_NE(res.body().find("/session"), std::string::npos);
  WsClient ui(server.port());
  ui.send(R"({"type": "request_frame"})");
  auto m = ui.receive();
  ASSERT_TRUE(std::holds_alternative<protocol::ErrorReply>(m));
  EXPECT_NE(std::get<protocol::ErrorReply>(m).message.find("no scene"), std::string::npos);
}

TEST(Server, FailedLoadClosesSocketWithReason) {
  auto session = std::make_shared<Session>(SessionEngine(test_scene()));
  ServerOptions options;
  options.port = 0;
  Server server(session, options);
  server.start();
  WsClient ui(server.port());
  ui.send(protocol::serialize(protocol::LoadScene{"/nonexistent/scene.json"}));
  EXPECT_TRUE(std::holds_alternative<protocol::ErrorReply>(ui.receive()));
  beast::flat_buffer buffer;
  beast::error_code ec;
  ui.ws.read(buffer, ec);
  EXPECT_EQ(ec, websocket::error::closed);
  EXPECT_NE(std::string(ui.ws.reason().reason.c_str()).find("scene load failed"),
            std::string::npos);
}

}  // namespace
}  // namespace meshgs
