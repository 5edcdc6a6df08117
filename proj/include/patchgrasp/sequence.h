#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrasp/scene.h"

namespace patchgrasp {

// Inclusive frame range in which a patch contributes pairs.
struct ActivityWindow {
  int on = 0;
  int off = 0;
  bool contains(int frame) const { return frame >= on && frame <= off; }
};

struct InterpolationOptions {
  // Patches present at one end only switch at this fraction of the track.
  double switchFraction = 0.5;
  std::map<std::string, double> patchSwitch;
};

struct PatchFrames {
  // Per frame, the active patches only.
  std::vector<std::vector<Correspondence>> frames;
  std::map<std::string, ActivityWindow> windows;
};

// Frame 0 and frame N-1 are the endpoint sets. In between, every pair of a
// shared patch moves linearly in the log-map charts rooted at the initial root
// pair and is snapped to the nearest chart vertex. Pair counts of shared patches
// must match; a pair unreachable at either end stays unreachable in between.
PatchFrames interpolatePatches(const std::vector<Correspondence>& initial, const std::vector<Correspondence>& final,
                               int frameCount, const LogmapSolver& objectCharts, const LogmapSolver& skinCharts,
                               const InterpolationOptions& options = {});

struct FrameResult {
  int frame = 0;
  bool ok = false;
  std::string error;
  VectorX theta;
  double value = 0.0;
  double meanPairDistance = 0.0;
  int calls = 0;
  int iterations = 0;
  int pairCount = 0;
};

struct ManipulationTrack {
  std::vector<Isometry3> objectPoses;
  std::vector<std::vector<Correspondence>> correspondences;
  std::map<std::string, ActivityWindow> windows;
  std::vector<FrameResult> results;

  int frameCount() const { return static_cast<int>(objectPoses.size()); }
};

struct TrackOptions {
  Backend backend = Backend::Mma;
  int frameIterations = 200;
  // Start every frame after the first from the previous pose, which is also the prior.
  // Otherwise frames start cold from the scene start pose with the rest prior.
  bool warmStart = true;
  // Extra calls on frame 0 after acceptance, stopping once a call moves the
  // pose by at most 10x the step tolerance.
  int settleCalls = 10;
};

// Frame 0 runs calls to acceptance and then settles; later frames get one call each.
// Failed frames are marked and the next frame starts from the last good pose.
void solveTrack(ManipulationTrack& track, const PreparedScene& prepared, const TrackOptions& options = {});

// Track document, format "patchgrasp.track" version 1.
struct TrackConfig {
  std::filesystem::path scenePath;
  int frames = 2;
  std::vector<Isometry3> objectPoses; // empty: derived from objectStep
  Isometry3 objectStep = Isometry3::Identity();
  std::vector<TransferRequest> finalTransfers; // empty: the scene's transfers
  InterpolationOptions interpolation;
  int frameIterations = 200;
};

TrackConfig trackConfigFromJson(const nlohmann::json& doc, const std::filesystem::path& baseDir);
TrackConfig loadTrackConfig(const std::filesystem::path& path);

// Object pose per frame: explicit poses, or the scene pose followed by repeated steps.
std::vector<Isometry3> trackObjectPoses(const TrackConfig& config, const Isometry3& scenePose);

// Builds the track for a prepared scene: transfers the final grasp, interpolates
// patches and assigns object poses. Does not solve.
ManipulationTrack buildTrack(const TrackConfig& config, const PreparedScene& prepared);

nlohmann::json trackResultToJson(const ManipulationTrack& track, const ArticulatedHand& hand);
// Per-frame object pose and link transforms.
nlohmann::json animationToJson(const ManipulationTrack& track, const ArticulatedHand& hand);

} // namespace patchgrasp
