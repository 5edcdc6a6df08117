#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <thread>

#include "patchgrasp/commands.h"
#include "patchgrasp/service.h"
#include "patchgrasp/synthetic.h"

#include <httplib.h>

using namespace patchgrasp;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path sceneDir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "patchgrasp_test_service";
    fs::remove_all(d);
    writeSyntheticScene(makeSyntheticGraspScene(), d);
    return d;
  }();
  return dir;
}

json msg(const std::string& op, json extra = json::object()) {
  extra["version"] = kProtocolVersion;
  extra["op"] = op;
  return extra;
}

std::vector<double> toVector(const VectorX& v) { return {v.data(), v.data() + v.size()}; }

int nearestVertex(const TriangleMesh& mesh, const Vector3& p) {
  int best = 0;
  for (size_t v = 1; v < mesh.nVertices(); v++) {
    if ((mesh.position(v) - p).norm() < (mesh.position(best) - p).norm()) best = static_cast<int>(v);
  }
  return best;
}

} // namespace

TEST_CASE("fetch_scene metadata matches the files") {
  const Scene files = loadScene(sceneDir() / "scene.json");
  Service service(loadScene(sceneDir() / "scene.json"));
  json r = service.handle(msg("fetch_scene", {{"id", 7}}));
  REQUIRE(r["ok"] == true);
  CHECK(r["id"] == 7);
  CHECK(r["version"] == kProtocolVersion);
  CHECK(r["object"]["file"] == "object.obj");
  CHECK(r["object"]["vertices"] == files.object.nVertices());
  CHECK(r["object"]["faces"] == files.object.nFaces());
  CHECK(r["skin"]["vertices"] == files.skin.nVertices());
  CHECK(r["hand"]["dof_names"] == files.hand.dofNames());
  CHECK(r["hand"]["links"].size() == files.hand.links().size());
  CHECK(r["hand"]["lower"] == toVector(files.hand.lower()));
  REQUIRE(r["patches"].size() == files.patches.patches.size());
  for (size_t i = 0; i < files.patches.patches.size(); i++) {
    CHECK(r["patches"][i]["label"] == files.patches.patches[i].label);
    CHECK(r["patches"][i]["root"] == files.patches.patches[i].root);
  }
  CHECK(r["transfers"].size() == files.transfers.size());
  CHECK(r["state"]["transferred"] == false);
  CHECK_FALSE(r["object"].contains("positions"));

  r = service.handle(msg("fetch_scene", {{"geometry", true}}));
  CHECK(r["object"]["positions"].size() == files.object.nVertices());
  CHECK(r["skin"]["face_indices"].size() == files.skin.nFaces());
  CHECK(r["object"]["positions"][5][2].get<double>() == files.object.position(5).z());
}

TEST_CASE("malformed messages get errors and leave the session alone") {
  Service service(loadScene(sceneDir() / "scene.json"));
  REQUIRE(service.handle(msg("transfer"))["ok"] == true);
  REQUIRE(service.handle(msg("solve_call"))["ok"] == true);
  const json before = service.handle(msg("history"));
  const VectorX theta = service.session()->theta();

  const std::vector<json> bad = {
      json::array({1, 2}),
      json("text"),
      json{{"version", 1}},
      json{{"version", 2}, {"op", "fetch_scene"}},
      msg("explode"),
      msg("pick", {{"patch", "f9"}, {"role", "object_root"}, {"vertex", 0}}),
      msg("pick", {{"patch", "f1"}, {"role", "elbow"}, {"vertex", 0}}),
      msg("pick", {{"patch", "f1"}, {"role", "object_root"}, {"vertex", -4}}),
      msg("pick", {{"patch", "f1"}, {"role", "object_root"}, {"vertex", "zero"}}),
      msg("pick", {{"patch", "f1"}, {"role", "skin_root"}, {"vertex", 1 << 30}}),
      msg("solve_call", {{"prior_override", {1, 2, 3}}}),
      msg("solve_call", {{"prior_override", "rest"}}),
      msg("fk", {{"theta", json::array()}}),
  };
  for (const json& m : bad) {
    const json r = service.handle(m, [](const json&) { FAIL("no events for a malformed message"); });
    CHECK(r["ok"] == false);
    CHECK_FALSE(r["error"].get<std::string>().empty());
  }
  CHECK(service.handle(msg("history")) == before);
  CHECK(service.session()->theta() == theta);
  CHECK(service.handle(msg("fetch_scene", {{"id", "x"}}))["id"] == "x");
}

TEST_CASE("solve_call before transfer is an error") {
  Service service(loadScene(sceneDir() / "scene.json"));
  const json r = service.handle(msg("solve_call"));
  CHECK(r["ok"] == false);
  CHECK(r["error"].get<std::string>().find("transfer") != std::string::npos);
  CHECK(service.handle(msg("history"))["history"].is_null());
}

TEST_CASE("picks register roots and tangents") {
  Service service(loadScene(sceneDir() / "scene.json"));
  const Scene& scene = service.scene();
  const TransferRequest original = scene.transfers[0];
  const int root = original.objectRoot;

  json r = service.handle(msg("pick", {{"patch", "f1"}, {"role", "object_root"}, {"vertex", root}, {"id", 3}}));
  REQUIRE(r["ok"] == true);
  CHECK(r["id"] == 3);
  CHECK(r["registered"]["vertex"] == root);

  // A vertex a few spacings along +z from the root gives the +z reference direction.
  const Vector3 along = scene.object.position(root) + Vector3(0, 0, 0.012);
  const int target = nearestVertex(scene.object, along);
  r = service.handle(msg("pick", {{"patch", "f1"}, {"role", "object_tangent"}, {"vertex", target}}));
  REQUIRE(r["ok"] == true);
  const std::vector<double> t = r["registered"]["tangent"].get<std::vector<double>>();
  const Vector3 tangent(t[0], t[1], t[2]);
  CHECK(std::acos(std::clamp(tangent.dot(Vector3::UnitZ()), -1.0, 1.0)) < 0.05);
  CHECK(std::abs(tangent.dot(scene.object.normal(root))) < 1e-12);
  CHECK(service.scene().transfers[0].objectTangent.isApprox(tangent));

  r = service.handle(msg("pick", {{"patch", "f1"}, {"role", "skin_root"}, {"vertex", original.skinRoot}}));
  CHECK(r["registered"]["vertex"] == original.skinRoot);
  CHECK(service.handle(msg("pick", {{"patch", "f1"}, {"role", "mirror"}, {"mirror", true}}))["ok"] == true);

  // Picking the root itself as the tangent has no direction.
  r = service.handle(msg("pick", {{"patch", "f1"}, {"role", "object_tangent"}, {"vertex", root}}));
  CHECK(r["ok"] == false);

  const json s = service.handle(msg("fetch_scene"));
  CHECK(s["transfers"][0]["object_root"] == root);
  CHECK(s["transfers"].size() == scene.transfers.size());
}

TEST_CASE("streamed progress ends at the response value") {
  Service service(loadScene(sceneDir() / "scene.json"));
  REQUIRE(service.handle(msg("transfer"))["ok"] == true);
  std::vector<json> events;
  const json r = service.handle(msg("solve_call"), [&](const json& e) { events.push_back(e); });
  REQUIRE(r["ok"] == true);
  REQUIRE_FALSE(events.empty());
  CHECK(events.back()["value"].get<double>() == r["value"].get<double>());
  CHECK(events.back()["iteration"] == r["record"]["iterations"]);
  // The last event repeats the final iteration with the stored result.
  for (size_t i = 1; i + 1 < events.size(); i++) {
    CHECK(events[i]["iteration"].get<int>() > events[i - 1]["iteration"].get<int>());
    CHECK(events[i]["value"].get<double>() <= events[i - 1]["value"].get<double>());
  }
  CHECK(events.back()["value"].get<double>() <= events[events.size() - 2]["value"].get<double>());
  CHECK(events.back()["theta"] == r["theta"]);
  int snapshots = 0;
  for (const json& e : events) snapshots += e.contains("theta");
  CHECK(snapshots >= 1);
  CHECK(r["theta"] == r["record"]["theta"]);
  CHECK(r["terms"]["total"].get<double>() == doctest::Approx(r["value"].get<double>()).epsilon(1e-12));
}

TEST_CASE("prior_override is the prior of that call") {
  Service service(loadScene(sceneDir() / "scene.json"));
  REQUIRE(service.handle(msg("transfer"))["ok"] == true);
  REQUIRE(service.handle(msg("solve_call"))["ok"] == true);
  const Scene& scene = service.scene();
  VectorX edit = service.session()->theta();
  edit[0] += 0.01;
  edit[scene.hand.joints()[scene.hand.jointIndex("f2_distal_joint")].dof] = 0.3;
  json r = service.handle(msg("solve_call", {{"prior_override", toVector(edit)}}));
  REQUIRE(r["ok"] == true);
  CHECK(r["record"]["prior_override"] == true);
  CHECK(r["record"]["prior"] == toVector(edit));

  // Without an override the next prior is the previous result.
  const json previous = r["theta"];
  r = service.handle(msg("solve_call"));
  CHECK(r["record"]["prior_override"] == false);
  CHECK(r["record"]["prior"] == previous);
  const json h = service.handle(msg("history"))["history"];
  REQUIRE(h["calls"].size() == 3);
  CHECK(h["calls"][1]["prior"] == toVector(edit));
}

TEST_CASE("fk echoes clamped link poses") {
  Service service(loadScene(sceneDir() / "scene.json"));
  const ArticulatedHand& hand = service.scene().hand;
  VectorX theta = hand.rest();
  const int dof = hand.joints()[hand.jointIndex("f1_proximal_joint")].dof;
  theta[dof] = 100.0;
  const json r = service.handle(msg("fk", {{"theta", toVector(theta)}}));
  REQUIRE(r["ok"] == true);
  CHECK(r["theta"][dof] == hand.upper()[dof]);
  VectorX clamped = theta;
  clamped[dof] = hand.upper()[dof];
  const std::vector<Isometry3> fk = hand.forwardKinematics(clamped);
  REQUIRE(r["links"].size() == fk.size());
  for (size_t l = 0; l < fk.size(); l++) {
    CHECK(r["links"][l]["name"] == hand.links()[l].name);
    CHECK(poseFromJson(r["links"][l]["pose"]).isApprox(fk[l], 1e-12));
  }
}

TEST_CASE("service and command line agree") {
  Service service(loadScene(sceneDir() / "scene.json"));
  REQUIRE(service.handle(msg("transfer"))["ok"] == true);
  const json s = service.handle(msg("solve_call"));
  REQUIRE(s["ok"] == true);

  const SolveOutcome o = solveScene(loadScene(sceneDir() / "scene.json"), {});
  const json& cli = o.document["results"][0];
  REQUIRE(cli["calls"] == 1);
  CHECK(cli["theta"] == s["theta"]);
  CHECK(cli["value"] == s["value"]);

  // And with a direct call on a fresh session.
  const std::unique_ptr<PreparedScene> prepared =
      prepareScene(loadScene(sceneDir() / "scene.json"), runTransfers(service.scene()).correspondences);
  SolveSession direct = prepared->makeSession(service.scene().optimizer.solver.backend);
  solveCall(direct);
  CHECK(toVector(direct.theta()) == s["theta"].get<std::vector<double>>());
}

TEST_CASE("http loopback") {
  Service service(loadScene(sceneDir() / "scene.json"));
  ServiceServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);
  auto post = [&](const std::string& path, const json& m) {
    auto res = client.Post(path, m.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    return res->body;
  };

  json r = json::parse(post("/api", msg("fetch_scene", {{"id", 1}})));
  CHECK(r["ok"] == true);
  CHECK(r["id"] == 1);
  r = json::parse(post("/api", msg("transfer")));
  CHECK(r["ok"] == true);
  CHECK(json::parse(post("/api", json("not an object")))["ok"] == false);
  auto garbled = client.Post("/api", "{not json", "application/json");
  REQUIRE(garbled);
  CHECK(json::parse(garbled->body)["ok"] == false);

  // Reads stay available while a call streams.
  json during;
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", port);
    auto res = c.Post("/api", msg("fetch_scene").dump(), "application/json");
    if (res) during = json::parse(res->body);
  });
  std::istringstream lines(post("/api/stream", msg("solve_call", {{"id", "s"}})));
  reader.join();
  CHECK(during["ok"] == true);

  std::vector<json> stream;
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) stream.push_back(json::parse(line));
  }
  REQUIRE(stream.size() >= 2);
  const json& last = stream.back();
  CHECK(last["type"] == "response");
  CHECK(last["ok"] == true);
  CHECK(last["id"] == "s");
  CHECK(stream[stream.size() - 2]["type"] == "progress");
  CHECK(stream[stream.size() - 2]["value"] == last["value"]);

  r = json::parse(post("/api", msg("history")));
  CHECK(r["history"]["calls"].size() == 1);
  CHECK(r["history"]["calls"][0]["theta"] == last["theta"]);

  server.stop();
  worker.join();
}
