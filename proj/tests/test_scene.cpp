#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "patchgrasp/commands.h"
#include "patchgrasp/error.h"
#include "patchgrasp/synthetic.h"

using namespace patchgrasp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("patchgrasp_test_scene_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = runCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

nlohmann::json readJson(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// The skin itself as the object, with one patch around the first finger pad
// and a transfer onto the same vertices. At rest every pair coincides.
fs::path writeIdentityScene(const std::string& name) {
  const fs::path dir = scratch(name);
  SyntheticScene syn = makeSyntheticGraspScene();
  Scene& s = syn.scene;
  const int pad = s.transfers[0].skinRoot;
  s.object = s.skin;
  std::vector<double> scalars(s.skin.nVertices(), 0.0);
  for (size_t v = 0; v < s.skin.nVertices(); v++) {
    const bool near = (s.skin.position(v) - s.skin.position(pad)).norm() < 0.012;
    if (near && s.skin.normal(v).dot(s.skin.normal(pad)) > 0.9) scalars[v] = 1.0;
  }
  s.patches.meshId = "skin";
  s.patches.patches = patchesFromContactScalars(s.skin, scalars);
  REQUIRE(s.patches.patches.size() == 1);
  s.patches.patches[0].label = "pad";
  TransferRequest r;
  r.patch = "pad";
  r.objectRoot = s.patches.patches[0].root;
  r.skinRoot = r.objectRoot;
  r.objectTangent = s.skin.tangentX(r.objectRoot);
  r.skinTangent = r.objectTangent;
  s.transfers = {r};
  s.optimizer.weights = Weights{1.0, 0.0, 0.0};
  writeSyntheticScene(syn, dir);
  return dir;
}

} // namespace

TEST_CASE("synthetic scene round trips through its files") {
  const fs::path dir = scratch("roundtrip");
  SyntheticScene syn = makeSyntheticGraspScene();
  syn.scene.seed = 42;
  syn.scene.boundOverrides["f3_proximal_joint"] = {0.0, 1.2};
  writeSyntheticScene(syn, dir);
  const Scene loaded = loadScene(dir / "scene.json");
  CHECK(loaded.object.nVertices() == syn.scene.object.nVertices());
  CHECK(loaded.skin.nVertices() == syn.scene.skin.nVertices());
  CHECK(loaded.hand.dofNames() == syn.scene.hand.dofNames());
  CHECK(loaded.seed == 42);
  REQUIRE(loaded.patches.patches.size() == syn.scene.patches.patches.size());
  for (size_t i = 0; i < loaded.patches.patches.size(); i++) {
    CHECK(loaded.patches.patches[i] == syn.scene.patches.patches[i]);
  }
  CHECK(sceneToJson(loaded) == sceneToJson(syn.scene));
  for (size_t v = 0; v < loaded.object.nVertices(); v++) {
    CHECK((loaded.object.position(v) - syn.scene.object.position(v)).norm() < 1e-9);
  }
}

TEST_CASE("scene errors name the file") {
  const fs::path dir = scratch("missing");
  writeSyntheticScene(makeSyntheticGraspScene(), dir);
  fs::remove(dir / "object.obj");
  CHECK_THROWS_WITH_AS(loadScene(dir / "scene.json"), doctest::Contains("object.obj"), InputError);

  CliRun r = cli({"transfer", "--config", (dir / "scene.json").string()});
  CHECK(r.code == kExitInputError);
  CHECK(r.err.find("object.obj") != std::string::npos);

  nlohmann::json doc = readJson(dir / "scene.json");
  writeSyntheticScene(makeSyntheticGraspScene(), dir);
  doc["optimizer"]["max_iterations"] = 5000;
  std::ofstream(dir / "bad.json") << doc.dump();
  CHECK_THROWS_WITH_AS(loadScene(dir / "bad.json"), doctest::Contains("max_iterations"), InputError);
  doc["optimizer"]["max_iterations"] = 100;
  doc["transfers"][0]["patch"] = "nonexistent";
  std::ofstream(dir / "bad.json") << doc.dump();
  CHECK_THROWS_WITH_AS(loadScene(dir / "bad.json"), doctest::Contains("nonexistent"), InputError);
}

TEST_CASE("identity scene transfers with zero residuals") {
  const fs::path dir = writeIdentityScene("identity");
  CliRun r = cli({"transfer", "--config", (dir / "scene.json").string(), "-o", (dir / "c.json").string()});
  REQUIRE(r.code == kExitOk);
  const std::vector<Correspondence> cs = correspondencesFromJson(readJson(dir / "c.json"));
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].pairs.size() >= 20);
  for (const CorrespondencePair& p : cs[0].pairs) {
    CHECK_FALSE(p.unreachable);
    CHECK(p.objectVertex == p.skinVertex);
    CHECK(p.residual == 0.0);
  }
}

TEST_CASE("pre-solved scene takes one call with value zero") {
  const fs::path dir = writeIdentityScene("presolved");
  const SolveOutcome o = solveScene(loadScene(dir / "scene.json"), {});
  const nlohmann::json& res = o.document["results"][0];
  CHECK(o.converged);
  CHECK(res["calls"] == 1);
  CHECK(res["value"].get<double>() == doctest::Approx(0.0));
  CHECK(res["mean_pair_distance"].get<double>() < 1e-12);
}

TEST_CASE("solve command writes one record per backend") {
  const fs::path dir = scratch("solve");
  writeSyntheticScene(makeSyntheticGraspScene(), dir);
  CliRun r = cli({"solve", "--config", (dir / "scene.json").string(), "--backend", "both", "-o",
                  (dir / "result.json").string()});
  CHECK(r.code == kExitOk);
  const nlohmann::json doc = readJson(dir / "result.json");
  CHECK(doc["format"] == "patchgrasp.solve_result");
  REQUIRE(doc["results"].size() == 2);
  CHECK(doc["results"][0]["backend"] == "mma");
  CHECK(doc["results"][1]["backend"] == "lbfgs");
  for (const auto& res : doc["results"]) {
    CHECK(res["converged"] == true);
    CHECK(res["calls"].get<int>() <= 3);
    CHECK(res["mean_pair_distance"].get<double>() <= doc["distance_threshold"].get<double>());
    CHECK(res["history"]["calls"].size() == res["calls"].get<size_t>());
    CHECK(res["terms"]["total"].get<double>() == doctest::Approx(res["value"].get<double>()).epsilon(1e-12));
  }

  // An unreachable value threshold cannot converge.
  r = cli({"solve", "--config", (dir / "scene.json").string(), "--threshold", "-1", "--max-calls", "1", "-o",
           (dir / "r2.json").string()});
  CHECK(r.code == kExitNotConverged);
  CHECK(readJson(dir / "r2.json")["results"][0]["calls"] == 1);
}

TEST_CASE("solve is deterministic") {
  const fs::path dir = scratch("determinism");
  writeSyntheticScene(makeSyntheticGraspScene(), dir);
  const Scene scene = loadScene(dir / "scene.json");
  SolveRequest req;
  req.backends = {Backend::Mma, Backend::Lbfgs};
  nlohmann::json a = solveScene(scene, req).document;
  nlohmann::json b = solveScene(scene, req).document;
  for (int k = 0; k < 2; k++) {
    CHECK(a["results"][k]["theta"] == b["results"][k]["theta"]);
    for (auto& call : a["results"][k]["history"]["calls"]) call.erase("seconds");
    for (auto& call : b["results"][k]["history"]["calls"]) call.erase("seconds");
    CHECK(a["results"][k]["history"] == b["results"][k]["history"]);
  }
}

TEST_CASE("solve reads a correspondence file") {
  const fs::path dir = scratch("corr");
  writeSyntheticScene(makeSyntheticGraspScene(), dir);
  const std::string scene = (dir / "scene.json").string();
  REQUIRE(cli({"transfer", "--config", scene, "-o", (dir / "c.json").string()}).code == kExitOk);
  REQUIRE(cli({"solve", "--config", scene, "-o", (dir / "a.json").string()}).code == kExitOk);
  REQUIRE(cli({"solve", "--config", scene, "--correspondences", (dir / "c.json").string(), "-o",
               (dir / "b.json").string()})
              .code == kExitOk);
  CHECK(readJson(dir / "a.json")["results"][0]["theta"] == readJson(dir / "b.json")["results"][0]["theta"]);

  std::ofstream(dir / "junk.json") << "{\"correspondences\": 3}";
  CHECK(cli({"solve", "--config", scene, "--correspondences", (dir / "junk.json").string()}).code == kExitInputError);
}

TEST_CASE("config directory variable supplies the default scene") {
  const fs::path dir = scratch("configdir");
  writeSyntheticScene(makeSyntheticGraspScene(), dir);
  setenv(kConfigDirVariable, dir.c_str(), 1);
  CHECK(resolveConfigPath("", "scene.json") == dir / "scene.json");
  CHECK(resolveConfigPath("object.obj", "scene.json") == dir / "object.obj");
  CliRun r = cli({"transfer", "-o", (dir / "c.json").string()});
  CHECK(r.code == kExitOk);
  unsetenv(kConfigDirVariable);
  CHECK_THROWS_AS(resolveConfigPath("", "scene.json"), InputError);
  CHECK(cli({"transfer"}).code == kExitInputError);
}

TEST_CASE("command line errors") {
  CHECK(cli({}).code == kExitInputError);
  CHECK(cli({"frobnicate"}).code == kExitInputError);
  CHECK(cli({"solve", "--backend", "newton", "--config", "x.json"}).code == kExitInputError);
  CHECK(cli({"solve", "--config", "/nonexistent/scene.json"}).code == kExitInputError);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("bench rows") {
  const fs::path dir = writeIdentityScene("bench");
  BenchOptions options;
  options.repetitions = 3;
  const std::vector<BenchRow> rows = runBench({dir / "scene.json"}, options);
  REQUIRE(rows.size() == 3);
  for (const BenchRow& r : rows) {
    CHECK(r.value == rows[0].value);
    CHECK(r.calls == rows[0].calls);
    CHECK(r.placements == 3);
    CHECK(r.patches == 1);
    CHECK(r.dofs == 13);
  }
  const std::string csv = benchCsv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(benchTable(rows).find("mma") != std::string::npos);

  CHECK(runBench({}, options).empty());
  CliRun r = cli({"bench", "--csv", (dir / "empty.csv").string()});
  CHECK(r.code == kExitOk);
  std::ifstream in(dir / "empty.csv");
  std::string header, extra;
  std::getline(in, header);
  CHECK(header.rfind("scene,backend", 0) == 0);
  CHECK_FALSE(std::getline(in, extra));
}

TEST_CASE("bench placements") {
  const Scene scene = makeSyntheticGraspScene().scene;
  CHECK(benchPlacement(scene, 7, 0).isApprox(scene.objectPose));
  const Isometry3 a = benchPlacement(scene, 7, 1);
  CHECK(a.isApprox(benchPlacement(scene, 7, 1)));
  CHECK_FALSE(a.isApprox(benchPlacement(scene, 7, 2)));
  CHECK_FALSE(a.isApprox(benchPlacement(scene, 8, 1)));
  for (int i = 1; i < 20; i++) {
    const Isometry3 p = benchPlacement(scene, 3, i);
    const Eigen::AngleAxisd aa(p.linear() * scene.objectPose.linear().transpose());
    CHECK(aa.angle() <= 0.15 + 1e-12);
  }
}

TEST_CASE("demo and animate commands") {
  const fs::path dir = scratch("animate");
  REQUIRE(cli({"demo", dir.string()}).code == kExitOk);
  CliRun r = cli({"animate", "--config", (dir / "track.json").string(), "--backend", "lbfgs", "-o",
                  (dir / "anim.json").string(), "--result", (dir / "track_result.json").string()});
  CHECK(r.code == kExitOk);
  const nlohmann::json anim = readJson(dir / "anim.json");
  CHECK(anim["format"] == "patchgrasp.animation");
  CHECK(anim["frames"].size() == 10);
  CHECK(readJson(dir / "track_result.json")["frames"].size() == 10);
  CHECK(cli({"animate", "--config", (dir / "track.json").string(), "--backend", "both"}).code == kExitInputError);
}
