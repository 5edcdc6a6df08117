#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrasp/scene.h"

namespace patchgrasp {

enum ExitCode { kExitOk = 0, kExitNotConverged = 1, kExitInputError = 2 };

inline constexpr const char* kConfigDirVariable = "PATCHGRASP_CONFIG_DIR";

// An explicit path is used as given when it exists; a relative one is otherwise
// looked up in the config directory. No path means configDir / defaultName.
std::filesystem::path resolveConfigPath(const std::string& given, const std::string& defaultName);

struct SolveRequest {
  std::vector<Backend> backends; // empty: the scene's backend
  std::optional<std::vector<Correspondence>> correspondences; // empty: run the transfers
  std::optional<int> maxCalls;
  double valueThreshold = std::numeric_limits<double>::infinity();
};

struct SolveOutcome {
  nlohmann::json document; // "patchgrasp.solve_result"
  bool converged = false;  // every backend
};

SolveOutcome solveScene(const Scene& scene, const SolveRequest& request);

// Placement 0 is the scene pose; later ones rotate the object about its centroid
// by up to 0.15 rad and shift it by up to 5% of its diagonal, drawn from
// (seed, index).
Isometry3 benchPlacement(const Scene& scene, uint64_t seed, int index);

// One row per scene, backend and repetition, averaged over the placements.
struct BenchRow {
  std::string scene;
  std::string backend;
  int repetition = 0;
  uint64_t seed = 0;
  int patches = 0;
  int dofs = 0;
  int placements = 0;
  int converged = 0; // placements
  double chartSeconds = 0.0;
  double transferSeconds = 0.0;
  double solveSeconds = 0.0;
  double calls = 0.0;
  double value = 0.0;
  double meanPairDistance = 0.0;
};

struct BenchOptions {
  int repetitions = 3;
  int placements = 3;
  std::vector<Backend> backends; // empty: each scene's backend
  std::optional<uint64_t> seed;  // empty: each scene's seed
};

std::vector<BenchRow> runBench(const std::vector<std::filesystem::path>& scenes, const BenchOptions& options);
std::string benchCsv(const std::vector<BenchRow>& rows);
// Per scene and backend: means over repetitions.
std::string benchTable(const std::vector<BenchRow>& rows);

// The command line; args excludes the program name. Returns the exit code.
int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace patchgrasp
