#include "patchgrasp/sequence.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>

#include "patchgrasp/error.h"

namespace patchgrasp {

using json = nlohmann::json;

namespace {

const Correspondence* findLabel(const std::vector<Correspondence>& set, const std::string& label) {
  for (const Correspondence& c : set) {
    if (c.label == label) return &c;
  }
  return nullptr;
}

void requireUniqueLabels(const std::vector<Correspondence>& set, const std::string& which) {
  std::set<std::string> seen;
  for (const Correspondence& c : set) {
    if (!seen.insert(c.label).second) throw InputError(which + " grasp lists patch '" + c.label + "' twice");
  }
}

// Lazily computed chart about one root, with nearest-vertex snapping in the chart plane.
class ChartSnapper {
public:
  ChartSnapper(const LogmapSolver& solver, int root) : solver_(solver), root_(root) {}

  // Nearest vertex to the interpolated chart point, or -1 if an endpoint is off the chart.
  int snap(int from, int to, double s, double& residual) {
    if (from == to) {
      residual = 0.0;
      return from;
    }
    const LogmapChart& c = chart();
    if (!c.isValid(from) || !c.isValid(to)) return -1;
    const Eigen::Vector2d a = c.planar(from), b = c.planar(to);
    const Eigen::Vector2d target = (1.0 - s) * a + s * b;
    // Far vertices can land anywhere in the plane; only search near the endpoints.
    const double reach = 1.5 * std::max(a.norm(), b.norm()) + 2.0 * solver_.mesh().meanEdgeLength();
    int best = -1;
    double bestD = std::numeric_limits<double>::infinity();
    for (int v = 0; v < static_cast<int>(c.size()); v++) {
      if (!c.valid[v] || c.r[v] > reach) continue;
      const double d = (c.planar(v) - target).squaredNorm();
      if (d < bestD) bestD = d, best = v;
    }
    residual = std::sqrt(bestD);
    return best;
  }

private:
  const LogmapChart& chart() {
    if (!chart_) chart_ = solver_.compute(root_, solver_.frames().extrinsicDirection(root_, 0.0));
    return *chart_;
  }

  const LogmapSolver& solver_;
  int root_;
  std::optional<LogmapChart> chart_;
};

Correspondence interpolateShared(const Correspondence& a, const Correspondence& b, double s, ChartSnapper& object,
                                 ChartSnapper& skin) {
  Correspondence out;
  out.label = a.label;
  for (size_t i = 0; i < a.pairs.size(); i++) {
    const CorrespondencePair& p = a.pairs[i];
    const CorrespondencePair& q = b.pairs[i];
    CorrespondencePair r;
    double objectResidual = 0.0, skinResidual = 0.0;
    r.objectVertex = object.snap(p.objectVertex, q.objectVertex, s, objectResidual);
    if (p.unreachable || q.unreachable || r.objectVertex < 0) {
      r.unreachable = true;
    } else {
      r.skinVertex = skin.snap(p.skinVertex, q.skinVertex, s, skinResidual);
      r.unreachable = r.skinVertex < 0;
    }
    if (r.objectVertex < 0) r.objectVertex = s < 0.5 ? p.objectVertex : q.objectVertex;
    if (r.unreachable) r.skinVertex = -1;
    r.residual = std::max(objectResidual, skinResidual);
    out.pairs.push_back(r);
  }
  return out;
}

} // namespace

PatchFrames interpolatePatches(const std::vector<Correspondence>& initial, const std::vector<Correspondence>& final,
                               int frameCount, const LogmapSolver& objectCharts, const LogmapSolver& skinCharts,
                               const InterpolationOptions& options) {
  if (frameCount < 2) throw InputError("a track needs at least 2 frames");
  requireUniqueLabels(initial, "initial");
  requireUniqueLabels(final, "final");
  for (const auto& [label, f] : options.patchSwitch) {
    if (!findLabel(initial, label) && !findLabel(final, label)) {
      throw InputError("switch point given for patch '" + label + "', which neither grasp contains");
    }
  }
  auto switchFrame = [&](const std::string& label) {
    auto it = options.patchSwitch.find(label);
    const double f = it == options.patchSwitch.end() ? options.switchFraction : it->second;
    if (!(f >= 0.0 && f <= 1.0)) throw InputError("switch fraction for '" + label + "' must be in [0, 1]");
    const int k = static_cast<int>(std::ceil(f * (frameCount - 1)));
    return std::clamp(k, 1, frameCount - 1);
  };

  PatchFrames out;
  out.frames.assign(frameCount, {});
  const int last = frameCount - 1;
  for (const Correspondence& a : initial) {
    const Correspondence* b = findLabel(final, a.label);
    if (!b) {
      const int k = switchFrame(a.label);
      out.windows[a.label] = {0, k - 1};
      for (int t = 0; t < k; t++) out.frames[t].push_back(a);
      continue;
    }
    if (a.pairs.size() != b->pairs.size()) {
      throw InputError("patch '" + a.label + "' has " + std::to_string(a.pairs.size()) + " pairs initially and " +
                       std::to_string(b->pairs.size()) + " finally");
    }
    if (a.pairs.empty()) throw InputError("patch '" + a.label + "' has no pairs");
    out.windows[a.label] = {0, last};
    out.frames[0].push_back(a);
    ChartSnapper object(objectCharts, a.pairs[0].objectVertex);
    ChartSnapper skin(skinCharts, a.pairs[0].skinVertex >= 0 ? a.pairs[0].skinVertex : b->pairs[0].skinVertex);
    for (int t = 1; t < last; t++) {
      out.frames[t].push_back(interpolateShared(a, *b, static_cast<double>(t) / last, object, skin));
    }
    out.frames[last].push_back(*b);
  }
  for (const Correspondence& b : final) {
    if (findLabel(initial, b.label)) continue;
    const int k = switchFrame(b.label);
    out.windows[b.label] = {k, last};
    for (int t = k; t <= last; t++) out.frames[t].push_back(b);
  }
  return out;
}

void solveTrack(ManipulationTrack& track, const PreparedScene& prepared, const TrackOptions& options) {
  const int n = track.frameCount();
  if (n < 1) throw InputError("track has no frames");
  if (static_cast<int>(track.correspondences.size()) != n) {
    throw InputError("track has " + std::to_string(n) + " object poses but " +
                     std::to_string(track.correspondences.size()) + " correspondence frames");
  }
  if (options.frameIterations < 1) throw InputError("frame iteration cap must be positive");
  const Scene& scene = prepared.scene;
  const VectorX start = scene.start.value_or(scene.hand.rest());
  VectorX good = start;

  track.results.assign(n, {});
  for (int t = 0; t < n; t++) {
    FrameResult& r = track.results[t];
    r.frame = t;
    try {
      SolverOptions solver = scene.optimizer.solver;
      solver.backend = options.backend;
      if (t > 0) solver.maxIterations = std::min(solver.maxIterations, options.frameIterations);
      SolveSession session(prepared.makeProblem(track.correspondences[t], track.objectPoses[t]), solver);
      r.pairCount = static_cast<int>(session.problem().pairs().size());
      if (t == 0) {
        session.setStart(start);
        runToAcceptance(session, scene.optimizer.maxCalls, std::numeric_limits<double>::infinity(),
                        prepared.distanceThreshold());
        // Settle: further calls with the previous pose as prior until the pose
        // stops moving, so that unchanged contacts give unchanged poses.
        const double still = 10.0 * solver.stepTolerance;
        for (int k = 0; k < options.settleCalls && session.history().back().error.empty(); k++) {
          const VectorX before = session.theta();
          solveCall(session);
          if ((session.theta() - before).cwiseAbs().maxCoeff() <= still) break;
        }
      } else if (options.warmStart) {
        session.setStart(good);
        solveCall(session, good);
      } else {
        session.setStart(start);
        solveCall(session);
      }
      for (const CallRecord& c : session.history()) {
        r.iterations += c.iterations;
        if (!c.error.empty()) throw NumericalError(c.error);
      }
      r.calls = session.calls();
      r.theta = session.theta();
      r.value = session.bestValue();
      r.meanPairDistance = session.problem().terms(r.theta).meanPairDistance;
      r.ok = true;
      good = r.theta;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
      r.theta = good;
    }
  }
}

TrackConfig trackConfigFromJson(const json& doc, const std::filesystem::path& baseDir) {
  if (doc.value("format", "patchgrasp.track") != "patchgrasp.track" || doc.value("version", 1) != 1) {
    throw InputError("not a version 1 track document");
  }
  TrackConfig c;
  try {
    const std::filesystem::path scene = doc.at("scene").get<std::string>();
    c.scenePath = scene.is_absolute() ? scene : baseDir / scene;
    c.frames = doc.at("frames").get<int>();
    if (c.frames < 2) throw InputError("track: frames must be at least 2");
    if (doc.contains("object_poses")) {
      for (const json& p : doc["object_poses"]) c.objectPoses.push_back(poseFromJson(p));
      if (static_cast<int>(c.objectPoses.size()) != c.frames) {
        throw InputError("track: " + std::to_string(c.objectPoses.size()) + " object poses for " +
                         std::to_string(c.frames) + " frames");
      }
    }
    for (const json& t : doc.value("final_transfers", json::array())) {
      c.finalTransfers.push_back(transferRequestFromJson(t));
    }
    if (doc.contains("object_step")) c.objectStep = poseFromJson(doc["object_step"]);
    c.interpolation.switchFraction = doc.value("switch_fraction", c.interpolation.switchFraction);
    if (doc.contains("patch_switch")) {
      for (const auto& [label, f] : doc["patch_switch"].items()) c.interpolation.patchSwitch[label] = f.get<double>();
    }
    c.frameIterations = doc.value("frame_iterations", c.frameIterations);
    if (c.frameIterations < 1 || c.frameIterations > 1000) {
      throw InputError("track: frame_iterations must be in [1, 1000]");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("track: ") + e.what());
  }
  return c;
}

TrackConfig loadTrackConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open track " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return trackConfigFromJson(doc, path.parent_path());
}

std::vector<Isometry3> trackObjectPoses(const TrackConfig& config, const Isometry3& scenePose) {
  if (!config.objectPoses.empty()) return config.objectPoses;
  std::vector<Isometry3> poses{scenePose};
  for (int t = 1; t < config.frames; t++) poses.push_back(config.objectStep * poses.back());
  return poses;
}

ManipulationTrack buildTrack(const TrackConfig& config, const PreparedScene& prepared) {
  const Scene& scene = prepared.scene;
  std::vector<Correspondence> final = prepared.correspondences;
  if (!config.finalTransfers.empty()) final = runTransfers(scene, config.finalTransfers).correspondences;
  LogmapOptions lo;
  lo.tScale = scene.optimizer.tScale;
  LogmapSolver objectCharts(scene.object, lo);
  LogmapSolver skinCharts(scene.skin, lo);
  PatchFrames frames =
      interpolatePatches(prepared.correspondences, final, config.frames, objectCharts, skinCharts, config.interpolation);
  ManipulationTrack track;
  track.objectPoses = trackObjectPoses(config, scene.objectPose);
  track.correspondences = std::move(frames.frames);
  track.windows = std::move(frames.windows);
  return track;
}

namespace {

json vec(const VectorX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

} // namespace

json trackResultToJson(const ManipulationTrack& track, const ArticulatedHand& hand) {
  json windows = json::object();
  for (const auto& [label, w] : track.windows) windows[label] = {w.on, w.off};
  json frames = json::array();
  int total = 0;
  for (const FrameResult& r : track.results) {
    json active = json::array();
    for (const Correspondence& c : track.correspondences[r.frame]) active.push_back(c.label);
    json f = {{"frame", r.frame},
              {"ok", r.ok},
              {"theta", vec(r.theta)},
              {"value", r.value},
              {"mean_pair_distance", r.meanPairDistance},
              {"calls", r.calls},
              {"iterations", r.iterations},
              {"pairs", r.pairCount},
              {"active", active},
              {"object_pose", poseToJson(track.objectPoses[r.frame])}};
    if (!r.error.empty()) f["error"] = r.error;
    frames.push_back(f);
    total += r.iterations;
  }
  return {{"format", "patchgrasp.track_result"},
          {"version", 1},
          {"dof_names", hand.dofNames()},
          {"windows", windows},
          {"total_iterations", total},
          {"frames", frames}};
}

json animationToJson(const ManipulationTrack& track, const ArticulatedHand& hand) {
  json links = json::array();
  for (const Link& l : hand.links()) links.push_back(l.name);
  json frames = json::array();
  for (int t = 0; t < track.frameCount(); t++) {
    const VectorX theta = t < static_cast<int>(track.results.size()) && track.results[t].theta.size() > 0
                              ? track.results[t].theta
                              : hand.rest();
    json transforms = json::array();
    for (const Isometry3& x : hand.forwardKinematics(theta)) transforms.push_back(poseToJson(x));
    frames.push_back({{"frame", t}, {"object_pose", poseToJson(track.objectPoses[t])}, {"links", transforms}});
  }
  return {{"format", "patchgrasp.animation"}, {"version", 1}, {"links", links}, {"frames", frames}};
}

} // namespace patchgrasp
