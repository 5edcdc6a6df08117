#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrasp/hand.h"
#include "patchgrasp/logmap.h"
#include "patchgrasp/objective.h"
#include "patchgrasp/patch.h"
#include "patchgrasp/solver.h"
#include "patchgrasp/transfer.h"

namespace patchgrasp {

// User parameters of one patch transfer; roots and tangents are in the rest
// frames of the object and skin meshes.
struct TransferRequest {
  std::string patch;
  int objectRoot = -1; // -1: the patch root
  int skinRoot = -1;
  Vector3 objectTangent = Vector3::UnitX();
  Vector3 skinTangent = Vector3::UnitX();
  double searchRadius = 1.5;
  bool mirror = false;
};

// Patch names are checked against patches when given.
TransferRequest transferRequestFromJson(const nlohmann::json& doc, const PatchSet* patches = nullptr);
nlohmann::json transferRequestToJson(const TransferRequest& request);

struct OptimizerConfig {
  std::optional<Weights> weights; // default: defaultWeights(object diagonal, J)
  std::optional<double> epsilon;  // default: epsilonFraction * hand diagonal
  double epsilonFraction = 0.02;
  double tScale = 1.0;
  SolverOptions solver;
  int maxCalls = 3;
  // Acceptance: mean pair distance <= distanceFraction * object diagonal.
  double distanceFraction = 0.05;
};

struct Scene {
  std::filesystem::path baseDir; // file references resolve against this
  std::string objectFile, skinFile, handFile, patchFile;
  TriangleMesh object;
  Isometry3 objectPose = Isometry3::Identity();
  ArticulatedHand hand;
  double primitiveSpacing = 0.0;
  TriangleMesh skin;
  PatchSet patches;
  std::vector<TransferRequest> transfers;
  std::map<std::string, std::pair<double, double>> boundOverrides;
  std::optional<VectorX> start;
  OptimizerConfig optimizer;
  uint64_t seed = 0;

  double objectDiagonal() const { return object.boundingDiagonal(); }
};

// Scene document, format "patchgrasp.scene" version 1. See README for the schema.
Scene loadScene(const std::filesystem::path& path);
Scene sceneFromJson(const nlohmann::json& doc, const std::filesystem::path& baseDir);
nlohmann::json sceneToJson(const Scene& scene);
// Writes scene.json plus the object, skin and patch files it references.
// The hand description must already exist at baseDir / handFile.
void saveScene(const Scene& scene, const std::filesystem::path& dir);

struct StageTimes {
  double charts = 0.0;
  double transfer = 0.0;
  double solve = 0.0;
};

struct TransferOutcome {
  std::vector<Correspondence> correspondences;
  StageTimes times;
};

TransferSpec resolveTransfer(const Scene& scene, const TransferRequest& request);
TransferOutcome runTransfers(const Scene& scene);
TransferOutcome runTransfers(const Scene& scene, const std::vector<TransferRequest>& requests);
nlohmann::json correspondencesToJson(const std::vector<Correspondence>& correspondences);
std::vector<Correspondence> correspondencesFromJson(const nlohmann::json& doc);

// Everything a solve needs, with stable addresses for the problem's references.
struct PreparedScene {
  Scene scene;
  SkinBinding binding;
  std::vector<Correspondence> correspondences;

  PoseProblem makeProblem(const std::optional<Isometry3>& objectPose = std::nullopt) const;
  // Same weights and bounds with another correspondence set.
  PoseProblem makeProblem(const std::vector<Correspondence>& frame, const Isometry3& objectPose) const;
  SolveSession makeSession(Backend backend) const;
  double distanceThreshold() const { return scene.optimizer.distanceFraction * scene.objectDiagonal(); }
};

std::unique_ptr<PreparedScene> prepareScene(Scene scene, std::vector<Correspondence> correspondences);

// Root translation box: the origin and the posed object, padded by two hand diagonals.
void applySceneBounds(const Scene& scene, PoseProblem& problem, const std::optional<Isometry3>& objectPose = std::nullopt);

Isometry3 poseFromJson(const nlohmann::json& doc);
nlohmann::json poseToJson(const Isometry3& pose);

} // namespace patchgrasp
