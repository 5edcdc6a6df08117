#include "patchgrasp/service.h"

#include <algorithm>

#include <httplib.h>

#include "patchgrasp/error.h"

namespace patchgrasp {

using json = nlohmann::json;

namespace {

json vec(const VectorX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json vec3(const Vector3& v) { return {v.x(), v.y(), v.z()}; }

VectorX readPose(const json& j, int size, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != size) {
    throw InputError(what + " must be an array of " + std::to_string(size) + " numbers");
  }
  VectorX v(size);
  for (int k = 0; k < size; k++) {
    if (!j[k].is_number()) throw InputError(what + " must be an array of " + std::to_string(size) + " numbers");
    v[k] = j[k].get<double>();
  }
  if (!v.allFinite()) throw InputError(what + " is not finite");
  return v;
}

int readVertex(const json& message, const TriangleMesh& mesh, const std::string& what) {
  if (!message.contains("vertex") || !message["vertex"].is_number_integer()) {
    throw InputError("pick needs an integer 'vertex'");
  }
  const int v = message["vertex"].get<int>();
  if (v < 0 || v >= static_cast<int>(mesh.nVertices())) {
    throw InputError(what + " vertex " + std::to_string(v) + " out of range");
  }
  return v;
}

json meshJson(const TriangleMesh& mesh, const std::string& file, bool geometry) {
  json m = {{"file", file},
            {"vertices", mesh.nVertices()},
            {"faces", mesh.nFaces()},
            {"bounding_diagonal", mesh.boundingDiagonal()}};
  if (geometry) {
    json pos = json::array(), faces = json::array();
    for (const Vector3& p : mesh.positions()) pos.push_back(vec3(p));
    for (const Face& f : mesh.faces()) faces.push_back({f[0], f[1], f[2]});
    m["positions"] = pos;
    m["face_indices"] = faces;
  }
  return m;
}

} // namespace

Service::Service(Scene scene) : scene_(std::move(scene)) { publish(); }

json Service::handle(const json& message, const EventFn& events) {
  json response = {{"version", kProtocolVersion}};
  try {
    if (!message.is_object()) throw InputError("message must be a JSON object");
    if (message.contains("id")) response["id"] = message["id"];
    if (message.value("version", kProtocolVersion) != kProtocolVersion) {
      throw InputError("unsupported protocol version " + message["version"].dump());
    }
    if (!message.contains("op") || !message["op"].is_string()) throw InputError("message has no 'op'");
    const std::string op = message["op"].get<std::string>();
    json body = dispatch(op, message, events);
    response["ok"] = true;
    response["op"] = op;
    response.update(body);
  } catch (const std::exception& e) {
    response["ok"] = false;
    response["error"] = e.what();
  }
  return response;
}

json Service::dispatch(const std::string& op, const json& message, const EventFn& events) {
  if (op == "fetch_scene") return fetchScene(message);
  if (op == "history") {
    std::lock_guard lock(snapshotMutex_);
    return {{"history", (*snapshot_)["history"]}};
  }
  if (op == "fk") return forwardKinematics(message);

  std::lock_guard writer(writer_);
  json out;
  if (op == "pick") {
    out = pick(message);
  } else if (op == "transfer") {
    out = transfer();
  } else if (op == "solve_call") {
    out = solve(message, events);
  } else {
    throw InputError("unknown op '" + op + "'");
  }
  publish();
  return out;
}

json Service::fetchScene(const json& message) const {
  std::shared_ptr<const json> snap;
  {
    std::lock_guard lock(snapshotMutex_);
    snap = snapshot_;
  }
  const bool geometry = message.value("geometry", false);
  json hand = {{"name", scene_.hand.name()},
               {"file", scene_.handFile},
               {"dof_names", scene_.hand.dofNames()},
               {"lower", vec(scene_.hand.lower())},
               {"upper", vec(scene_.hand.upper())},
               {"rest", vec(scene_.hand.rest())}};
  json links = json::array();
  for (const Link& l : scene_.hand.links()) links.push_back(l.name);
  hand["links"] = links;
  json patches = json::array();
  for (const ContactPatch& p : scene_.patches.patches) {
    patches.push_back({{"label", p.label},
                       {"root", p.root},
                       {"boundary", p.boundary.size()},
                       {"interpolation_boundary", p.interpolationBoundary}});
  }
  return {{"object", meshJson(scene_.object, scene_.objectFile, geometry)},
          {"object_pose", poseToJson(scene_.objectPose)},
          {"skin", meshJson(scene_.skin, scene_.skinFile, geometry)},
          {"hand", hand},
          {"patches", patches},
          {"transfers", (*snap)["transfers"]},
          {"state", (*snap)["state"]}};
}

json Service::pick(const json& message) {
  const std::string label = message.value("patch", "");
  if (!scene_.patches.find(label)) throw InputError("pick names unknown patch '" + label + "'");
  const std::string role = message.value("role", "");
  auto it = std::find_if(scene_.transfers.begin(), scene_.transfers.end(),
                         [&](const TransferRequest& r) { return r.patch == label; });
  TransferRequest r = it == scene_.transfers.end() ? TransferRequest{} : *it;
  r.patch = label;
  json registered = {{"patch", label}, {"role", role}};

  // The tangent is the direction from the root toward the picked vertex, in the root's tangent plane.
  auto tangentTo = [&](const TriangleMesh& mesh, int root, int v) {
    if (root < 0) throw InputError("pick the root before the tangent");
    const Vector3 n = mesh.normal(root);
    Vector3 d = mesh.position(v) - mesh.position(root);
    d -= d.dot(n) * n;
    if (!(d.norm() > 1e-12 * mesh.boundingDiagonal())) throw InputError("tangent vertex lies on the root normal");
    return Vector3(d.normalized());
  };

  if (role == "object_root") {
    r.objectRoot = readVertex(message, scene_.object, "object");
    registered["vertex"] = r.objectRoot;
  } else if (role == "skin_root") {
    r.skinRoot = readVertex(message, scene_.skin, "skin");
    registered["vertex"] = r.skinRoot;
  } else if (role == "object_tangent") {
    const int v = readVertex(message, scene_.object, "object");
    const int root = r.objectRoot >= 0 ? r.objectRoot : scene_.patches.find(label)->root;
    r.objectTangent = tangentTo(scene_.object, root, v);
    registered["vertex"] = v;
    registered["tangent"] = vec3(r.objectTangent);
  } else if (role == "skin_tangent") {
    const int v = readVertex(message, scene_.skin, "skin");
    r.skinTangent = tangentTo(scene_.skin, r.skinRoot, v);
    registered["vertex"] = v;
    registered["tangent"] = vec3(r.skinTangent);
  } else if (role == "mirror") {
    if (!message.contains("mirror") || !message["mirror"].is_boolean()) throw InputError("pick needs a boolean 'mirror'");
    r.mirror = message["mirror"].get<bool>();
    registered["mirror"] = r.mirror;
  } else {
    throw InputError("unknown pick role '" + role + "'");
  }
  if (it == scene_.transfers.end()) {
    scene_.transfers.push_back(r);
  } else {
    *it = r;
  }
  return {{"registered", registered}, {"transfer", transferRequestToJson(r)}};
}

json Service::transfer() {
  TransferOutcome t = runTransfers(scene_);
  std::unique_ptr<PreparedScene> prepared = prepareScene(scene_, t.correspondences);
  SolveSession session = prepared->makeSession(scene_.optimizer.solver.backend);
  prepared_ = std::move(prepared);
  session_.emplace(std::move(session));
  return {{"correspondences", correspondencesToJson(t.correspondences)},
          {"pairs", session_->problem().pairs().size()},
          {"times", {{"charts", t.times.charts}, {"transfer", t.times.transfer}}}};
}

json Service::solve(const json& message, const EventFn& events) {
  if (!session_) throw InputError("no correspondences yet; send a transfer message first");
  std::optional<VectorX> override;
  if (message.contains("prior_override") && !message["prior_override"].is_null()) {
    override = readPose(message["prior_override"], session_->problem().dofCount(), "prior_override");
  }
  ProgressFn progress;
  if (events) {
    progress = [&](const ProgressEvent& e) {
      json j = {{"type", "progress"}, {"call", e.call}, {"iteration", e.iteration}, {"value", e.value}};
      if (e.theta) j["theta"] = vec(*e.theta);
      events(j);
    };
  }
  CallRecord rec = solveCall(*session_, override, progress);
  if (!rec.error.empty()) throw NumericalError("solve call " + std::to_string(rec.call) + " failed: " + rec.error);
  TermBreakdown t = session_->problem().terms(session_->theta());
  return {{"record", historyToJson(*session_)["calls"].back()},
          {"theta", vec(session_->theta())},
          {"value", session_->bestValue()},
          {"terms",
           {{"distance", t.distance}, {"normal", t.normal}, {"prior", t.prior}, {"total", t.total}}},
          {"mean_pair_distance", t.meanPairDistance},
          {"distance_threshold", prepared_->distanceThreshold()},
          {"converged", t.meanPairDistance <= prepared_->distanceThreshold()}};
}

json Service::forwardKinematics(const json& message) const {
  const ArticulatedHand& hand = scene_.hand;
  VectorX theta = readPose(message.value("theta", json()), hand.dofCount(), "theta");
  {
    std::lock_guard lock(snapshotMutex_);
    const json& s = (*snapshot_)["state"];
    if (s.contains("lower")) {
      VectorX lo = readPose(s["lower"], hand.dofCount(), "lower");
      VectorX hi = readPose(s["upper"], hand.dofCount(), "upper");
      theta = theta.cwiseMax(lo).cwiseMin(hi);
    } else {
      theta = theta.cwiseMax(hand.lower()).cwiseMin(hand.upper());
    }
  }
  json links = json::array();
  const std::vector<Isometry3> fk = hand.forwardKinematics(theta);
  for (size_t l = 0; l < fk.size(); l++) {
    links.push_back({{"name", hand.links()[l].name}, {"pose", poseToJson(fk[l])}});
  }
  return {{"theta", vec(theta)}, {"links", links}};
}

json Service::stateJson() const {
  json s = {{"transferred", session_.has_value()}};
  if (session_) {
    s["calls"] = session_->calls();
    s["theta"] = vec(session_->theta());
    s["best_value"] = session_->bestValue();
    s["prior"] = vec(session_->problem().prior());
    s["lower"] = vec(session_->problem().lower());
    s["upper"] = vec(session_->problem().upper());
  }
  return s;
}

void Service::publish() {
  json transfers = json::array();
  for (const TransferRequest& r : scene_.transfers) transfers.push_back(transferRequestToJson(r));
  auto snap = std::make_shared<const json>(json{{"state", stateJson()},
                                                {"transfers", transfers},
                                                {"history", session_ ? historyToJson(*session_) : json(nullptr)}});
  std::lock_guard lock(snapshotMutex_);
  snapshot_ = std::move(snap);
}

struct ServiceServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

ServiceServer::ServiceServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  Impl* impl = impl_.get();
  auto parse = [](const httplib::Request& req) {
    json message = json::parse(req.body, nullptr, false);
    if (message.is_discarded()) message = json("malformed JSON");
    return message;
  };
  impl->server.Post("/api", [impl, parse](const httplib::Request& req, httplib::Response& res) {
    res.set_content(impl->service.handle(parse(req)).dump(), "application/json");
  });
  impl->server.Post("/api/stream", [impl, parse](const httplib::Request& req, httplib::Response& res) {
    json message = parse(req);
    res.set_chunked_content_provider("application/x-ndjson", [impl, message](size_t, httplib::DataSink& sink) {
      auto write = [&](const json& j) {
        const std::string line = j.dump() + "\n";
        sink.write(line.data(), line.size());
      };
      json response = impl->service.handle(message, write);
      response["type"] = "response";
      write(response);
      sink.done();
      return true;
    });
  });
  impl->server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"version", kProtocolVersion}, {"ok", true}}.dump(), "application/json");
  });
}

ServiceServer::~ServiceServer() = default;

int ServiceServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void ServiceServer::listen() { impl_->server.listen_after_bind(); }

void ServiceServer::stop() { impl_->server.stop(); }

} // namespace patchgrasp
