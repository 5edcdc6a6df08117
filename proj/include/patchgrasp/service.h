#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "patchgrasp/scene.h"

namespace patchgrasp {

constexpr int kProtocolVersion = 1;

// One interactive session over a scene. Messages are JSON objects
//   {"version": 1, "id": <any>, "op": <name>, ...}
// answered by {"version": 1, "id": <same>, "ok": true, ...} or
// {"version": 1, "id": <same>, "ok": false, "error": <text>}.
// Ops: fetch_scene, pick, transfer, solve_call, history, fk. See README.
//
// Mutating ops run one at a time; fetch_scene and history read a snapshot
// that is replaced after each mutation, so they never wait for a running call.
class Service {
public:
  using EventFn = std::function<void(const nlohmann::json&)>;

  explicit Service(Scene scene);

  // Never throws; malformed messages get an error response and leave the session alone.
  // events receives {"type": "progress", ...} while a solve_call runs.
  nlohmann::json handle(const nlohmann::json& message, const EventFn& events = {});

  // Accessors for tests and the CLI; not synchronized with handle().
  const Scene& scene() const { return scene_; }
  const PreparedScene* prepared() const { return prepared_.get(); }
  const SolveSession* session() const { return session_ ? &*session_ : nullptr; }

private:
  nlohmann::json dispatch(const std::string& op, const nlohmann::json& message, const EventFn& events);
  nlohmann::json fetchScene(const nlohmann::json& message) const;
  nlohmann::json pick(const nlohmann::json& message);
  nlohmann::json transfer();
  nlohmann::json solve(const nlohmann::json& message, const EventFn& events);
  nlohmann::json forwardKinematics(const nlohmann::json& message) const;
  nlohmann::json stateJson() const;
  void publish();

  Scene scene_;
  std::unique_ptr<PreparedScene> prepared_;
  std::optional<SolveSession> session_;

  std::mutex writer_;
  mutable std::mutex snapshotMutex_;
  std::shared_ptr<const nlohmann::json> snapshot_; // {"state": ..., "history": ...}
};

// Local HTTP front end: POST /api answers one message; POST /api/stream answers
// with newline-delimited JSON, the progress events followed by the response.
// Blocks until stop() is called from another thread.
class ServiceServer {
public:
  explicit ServiceServer(Service& service);
  ~ServiceServer();

  // Binds host:port (port 0 picks a free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  void listen();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace patchgrasp
