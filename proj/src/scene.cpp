#include "patchgrasp/scene.h"

#include <chrono>
#include <fstream>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vector3 vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InputError(what + ": expected an array of 3 numbers");
  return Vector3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json toJson(const Vector3& v) { return {v.x(), v.y(), v.z()}; }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& file) {
  std::filesystem::path p(file);
  return p.is_absolute() ? p : base / p;
}

TriangleMesh loadReferencedMesh(const std::filesystem::path& base, const std::string& file, const std::string& what) {
  std::filesystem::path p = resolve(base, file);
  if (!std::filesystem::exists(p)) throw InputError(what + " mesh file not found: " + p.string());
  return loadMesh(p);
}

} // namespace

Isometry3 poseFromJson(const json& doc) {
  Isometry3 t = Isometry3::Identity();
  if (doc.is_null()) return t;
  if (doc.contains("translation")) t.translation() = vec3(doc["translation"], "pose translation");
  if (doc.contains("rotation")) t.linear() = expMap(vec3(doc["rotation"], "pose rotation"));
  return t;
}

json poseToJson(const Isometry3& pose) {
  Eigen::AngleAxisd aa(pose.linear());
  return {{"translation", toJson(pose.translation())}, {"rotation", toJson(aa.angle() * aa.axis())}};
}

TransferRequest transferRequestFromJson(const json& t, const PatchSet* patches) {
  try {
    TransferRequest r;
    r.patch = t.at("patch").get<std::string>();
    if (patches && !patches->find(r.patch)) throw InputError("transfer references unknown patch '" + r.patch + "'");
    r.objectRoot = t.value("object_root", -1);
    r.skinRoot = t.at("skin_root").get<int>();
    r.objectTangent = vec3(t.at("object_tangent"), "object_tangent");
    r.skinTangent = vec3(t.at("skin_tangent"), "skin_tangent");
    r.searchRadius = t.value("search_radius", 1.5);
    r.mirror = t.value("mirror", false);
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("transfer: ") + e.what());
  }
}

json transferRequestToJson(const TransferRequest& r) {
  return {{"patch", r.patch},
          {"object_root", r.objectRoot},
          {"skin_root", r.skinRoot},
          {"object_tangent", toJson(r.objectTangent)},
          {"skin_tangent", toJson(r.skinTangent)},
          {"search_radius", r.searchRadius},
          {"mirror", r.mirror}};
}

Scene sceneFromJson(const json& doc, const std::filesystem::path& baseDir) {
  if (doc.value("format", "patchgrasp.scene") != "patchgrasp.scene" || doc.value("version", 1) != 1) {
    throw InputError("not a version 1 scene document");
  }
  Scene s;
  s.baseDir = baseDir;
  try {
    const json& object = doc.at("object");
    s.objectFile = object.at("mesh").get<std::string>();
    s.object = loadReferencedMesh(baseDir, s.objectFile, "object");
    s.objectPose = poseFromJson(object.value("pose", json()));

    const json& hand = doc.at("hand");
    s.handFile = hand.at("urdf").get<std::string>();
    s.primitiveSpacing = hand.value("primitive_spacing", 0.0);
    std::filesystem::path handPath = resolve(baseDir, s.handFile);
    if (!std::filesystem::exists(handPath)) throw InputError("hand description not found: " + handPath.string());
    s.hand = loadHand(handPath, {s.primitiveSpacing});
    if (hand.contains("bounds")) {
      for (const auto& [name, b] : hand["bounds"].items()) s.boundOverrides[name] = {b.at(0), b.at(1)};
    }
    if (hand.contains("start")) {
      std::vector<double> v = hand["start"].get<std::vector<double>>();
      s.start = Eigen::Map<VectorX>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

    s.skinFile = doc.at("skin").at("mesh").get<std::string>();
    s.skin = loadReferencedMesh(baseDir, s.skinFile, "skin");

    const json& patches = doc.at("patches");
    if (patches.is_string()) {
      s.patchFile = patches.get<std::string>();
      s.patches = loadPatches(resolve(baseDir, s.patchFile), s.object);
    } else {
      s.patches = patchesFromJson(patches, s.object);
    }

    for (const json& t : doc.value("transfers", json::array())) {
      s.transfers.push_back(transferRequestFromJson(t, &s.patches));
    }

    const json opt = doc.value("optimizer", json::object());
    OptimizerConfig& c = s.optimizer;
    if (opt.contains("weights")) {
      const json& w = opt["weights"];
      c.weights = Weights{w.at("distance").get<double>(), w.at("normal").get<double>(), w.at("prior").get<double>()};
    }
    if (opt.contains("epsilon")) c.epsilon = opt["epsilon"].get<double>();
    c.epsilonFraction = opt.value("epsilon_fraction", c.epsilonFraction);
    c.tScale = opt.value("t_scale", c.tScale);
    c.solver.backend = parseBackend(opt.value("backend", backendName(c.solver.backend)));
    c.solver.maxIterations = opt.value("max_iterations", c.solver.maxIterations);
    c.solver.relativeTolerance = opt.value("relative_tolerance", c.solver.relativeTolerance);
    c.solver.decreaseWindow = opt.value("decrease_window", c.solver.decreaseWindow);
    c.solver.stepTolerance = opt.value("step_tolerance", c.solver.stepTolerance);
    c.solver.snapshotEvery = opt.value("snapshot_every", c.solver.snapshotEvery);
    c.maxCalls = opt.value("max_calls", c.maxCalls);
    c.distanceFraction = opt.value("distance_fraction", c.distanceFraction);
    s.seed = doc.value("seed", uint64_t{0});
  } catch (const json::exception& e) {
    throw InputError(std::string("scene: ") + e.what());
  }

  const OptimizerConfig& c = s.optimizer;
  if (!(c.epsilonFraction > 0) || (c.epsilon && !(*c.epsilon >= 0))) throw InputError("scene: epsilon must be positive");
  if (!(c.tScale > 0)) throw InputError("scene: t_scale must be positive");
  if (c.solver.maxIterations < 1 || c.solver.maxIterations > 1000) {
    throw InputError("scene: max_iterations must be in [1, 1000]");
  }
  if (c.maxCalls < 1) throw InputError("scene: max_calls must be at least 1");
  if (!(c.distanceFraction > 0)) throw InputError("scene: distance_fraction must be positive");
  if (s.start && s.start->size() != s.hand.dofCount()) {
    throw InputError("scene: start pose has " + std::to_string(s.start->size()) + " values, hand has " +
                     std::to_string(s.hand.dofCount()) + " DOFs");
  }
  for (const auto& [name, b] : s.boundOverrides) {
    const auto& names = s.hand.dofNames();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw InputError("scene: bounds given for unknown DOF '" + name + "'");
    }
    if (!(b.first <= b.second)) throw InputError("scene: bounds for '" + name + "' are not ordered");
  }
  return s;
}

Scene loadScene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scene " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  try {
    return sceneFromJson(doc, path.parent_path());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

json sceneToJson(const Scene& s) {
  json transfers = json::array();
  for (const TransferRequest& r : s.transfers) transfers.push_back(transferRequestToJson(r));
  json hand = {{"urdf", s.handFile}, {"primitive_spacing", s.primitiveSpacing}};
  if (!s.boundOverrides.empty()) {
    json b = json::object();
    for (const auto& [name, lim] : s.boundOverrides) b[name] = {lim.first, lim.second};
    hand["bounds"] = b;
  }
  if (s.start) hand["start"] = std::vector<double>(s.start->data(), s.start->data() + s.start->size());
  const OptimizerConfig& c = s.optimizer;
  json opt = {{"epsilon_fraction", c.epsilonFraction},
              {"t_scale", c.tScale},
              {"backend", backendName(c.solver.backend)},
              {"max_iterations", c.solver.maxIterations},
              {"relative_tolerance", c.solver.relativeTolerance},
              {"decrease_window", c.solver.decreaseWindow},
              {"step_tolerance", c.solver.stepTolerance},
              {"snapshot_every", c.solver.snapshotEvery},
              {"max_calls", c.maxCalls},
              {"distance_fraction", c.distanceFraction}};
  if (c.weights) opt["weights"] = {{"distance", c.weights->distance}, {"normal", c.weights->normal}, {"prior", c.weights->prior}};
  if (c.epsilon) opt["epsilon"] = *c.epsilon;
  return {{"format", "patchgrasp.scene"},
          {"version", 1},
          {"object", {{"mesh", s.objectFile}, {"pose", poseToJson(s.objectPose)}}},
          {"hand", hand},
          {"skin", {{"mesh", s.skinFile}}},
          {"patches", s.patchFile.empty() ? patchesToJson(s.patches) : json(s.patchFile)},
          {"transfers", transfers},
          {"optimizer", opt},
          {"seed", s.seed}};
}

void saveScene(const Scene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  writeObj(scene.object, resolve(dir, scene.objectFile));
  writeObj(scene.skin, resolve(dir, scene.skinFile));
  if (!scene.patchFile.empty()) savePatches(scene.patches, resolve(dir, scene.patchFile));
  std::ofstream out(dir / "scene.json");
  if (!out) throw InputError("cannot write " + (dir / "scene.json").string());
  out << sceneToJson(scene).dump(2) << "\n";
}

TransferSpec resolveTransfer(const Scene& scene, const TransferRequest& r) {
  const ContactPatch* patch = scene.patches.find(r.patch);
  if (!patch) throw InputError("transfer references unknown patch '" + r.patch + "'");
  try {
    return makeTransferSpec(scene.object, scene.skin, r.objectRoot >= 0 ? r.objectRoot : patch->root, r.skinRoot,
                            r.objectTangent, r.skinTangent, r.searchRadius, r.mirror);
  } catch (const InputError& e) {
    throw InputError("transfer '" + r.patch + "': " + e.what());
  }
}

TransferOutcome runTransfers(const Scene& scene) { return runTransfers(scene, scene.transfers); }

TransferOutcome runTransfers(const Scene& scene, const std::vector<TransferRequest>& requests) {
  TransferOutcome out;
  if (requests.empty()) return out;
  requireManifold(scene.object, "object mesh");
  requireManifold(scene.skin, "skin mesh");
  auto t0 = Clock::now();
  LogmapOptions options;
  options.tScale = scene.optimizer.tScale;
  LogmapSolver objectSolver(scene.object, options);
  LogmapSolver skinSolver(scene.skin, options);
  std::vector<std::pair<LogmapChart, LogmapChart>> charts;
  std::vector<TransferSpec> specs;
  for (const TransferRequest& r : requests) {
    specs.push_back(resolveTransfer(scene, r));
    charts.emplace_back(objectSolver.compute(specs.back().objectRoot, specs.back().objectTangent),
                        skinSolver.compute(specs.back().skinRoot, specs.back().skinTangent));
  }
  out.times.charts = since(t0);
  t0 = Clock::now();
  for (size_t i = 0; i < specs.size(); i++) {
    out.correspondences.push_back(
        transferPatch(*scene.patches.find(requests[i].patch), specs[i], charts[i].first, charts[i].second));
  }
  out.times.transfer = since(t0);
  return out;
}

json correspondencesToJson(const std::vector<Correspondence>& correspondences) {
  json list = json::array();
  for (const Correspondence& c : correspondences) list.push_back(correspondenceToJson(c));
  return {{"format", "patchgrasp.correspondences"}, {"version", 1}, {"correspondences", list}};
}

std::vector<Correspondence> correspondencesFromJson(const json& doc) {
  if (doc.value("format", "patchgrasp.correspondences") != "patchgrasp.correspondences" ||
      doc.value("version", 1) != 1) {
    throw InputError("not a version 1 correspondence document");
  }
  if (!doc.contains("correspondences") || !doc["correspondences"].is_array()) {
    throw InputError("correspondence document has no 'correspondences' list");
  }
  std::vector<Correspondence> out;
  for (const json& c : doc["correspondences"]) out.push_back(correspondenceFromJson(c));
  return out;
}

void applySceneBounds(const Scene& scene, PoseProblem& problem, const std::optional<Isometry3>& objectPose) {
  const Isometry3 pose = objectPose.value_or(scene.objectPose);
  Eigen::AlignedBox3d box(Vector3::Zero());
  for (const Vector3& p : scene.object.positions()) box.extend(pose * p);
  const double pad = 2.0 * scene.hand.restDiagonal();
  for (int k = 0; k < 3; k++) problem.setBounds(k, box.min()[k] - pad, box.max()[k] + pad);
  const auto& names = scene.hand.dofNames();
  for (const auto& [name, b] : scene.boundOverrides) {
    const int dof = static_cast<int>(std::find(names.begin(), names.end(), name) - names.begin());
    problem.setBounds(dof, b.first, b.second);
  }
}

PoseProblem PreparedScene::makeProblem(const std::optional<Isometry3>& objectPose) const {
  return makeProblem(correspondences, objectPose.value_or(scene.objectPose));
}

PoseProblem PreparedScene::makeProblem(const std::vector<Correspondence>& frame, const Isometry3& pose) const {
  Weights w = scene.optimizer.weights.value_or(defaultWeights(scene.objectDiagonal(), scene.hand.dofCount()));
  PoseProblem problem(scene.hand, binding, buildPairs(scene.object, pose, frame, binding), w, scene.objectDiagonal());
  applySceneBounds(scene, problem, pose);
  return problem;
}

SolveSession PreparedScene::makeSession(Backend backend) const {
  SolverOptions options = scene.optimizer.solver;
  options.backend = backend;
  SolveSession session(makeProblem(), options);
  if (scene.start) session.setStart(*scene.start);
  return session;
}

std::unique_ptr<PreparedScene> prepareScene(Scene scene, std::vector<Correspondence> correspondences) {
  auto p = std::make_unique<PreparedScene>();
  p->scene = std::move(scene);
  const double eps = p->scene.optimizer.epsilon.value_or(p->scene.optimizer.epsilonFraction * p->scene.hand.restDiagonal());
  p->binding = bindSkin(p->scene.hand, p->scene.skin, eps);
  p->correspondences = std::move(correspondences);
  return p;
}

} // namespace patchgrasp
