#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrasp/objective.h"

namespace patchgrasp {

enum class Backend { Mma, Lbfgs };

std::string backendName(Backend b);
Backend parseBackend(const std::string& name);

struct SolverOptions {
  Backend backend = Backend::Mma;
  int maxIterations = 1000;
  // Stop when the best value drops by less than relativeTolerance (relative)
  // over decreaseWindow iterations, or when a step is below stepTolerance (inf-norm).
  double relativeTolerance = 1e-8;
  int decreaseWindow = 10;
  double stepTolerance = 1e-10;
  // Progress events carry a pose snapshot every this many iterations.
  int snapshotEvery = 10;
};

struct ProgressEvent {
  int call = 0;
  int iteration = 0;
  double value = 0.0; // best value so far in this call
  std::optional<VectorX> theta;
};
using ProgressFn = std::function<void(const ProgressEvent&)>;

struct CallRecord {
  int call = 0;
  int iterations = 0;
  int evaluations = 0;
  double startValue = 0.0;
  double bestValue = 0.0;
  bool priorOverride = false;
  VectorX prior;
  VectorX theta;
  std::string stopReason;
  std::string error;
  double seconds = 0.0;
};

// Minimizes the problem's objective inside its bounds; returns the best point.
struct MinimizeResult {
  VectorX theta;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::string stopReason;
};
MinimizeResult minimize(const PoseProblem& problem, const VectorX& start, const SolverOptions& options,
                        const std::function<void(int, double, const VectorX&)>& onIteration = {});

class SolveSession {
public:
  SolveSession(PoseProblem problem, SolverOptions options);

  PoseProblem& problem() { return problem_; }
  const PoseProblem& problem() const { return problem_; }
  const SolverOptions& options() const { return options_; }
  SolverOptions& options() { return options_; }

  // theta* (theta_0 before the first call).
  const VectorX& theta() const { return theta_; }
  // Before the first call; clamped.
  void setStart(const VectorX& theta);
  double bestValue() const { return bestValue_; }
  int calls() const { return static_cast<int>(history_.size()); }
  const std::vector<CallRecord>& history() const { return history_; }

private:
  friend CallRecord solveCall(SolveSession&, const std::optional<VectorX>&, const ProgressFn&);

  PoseProblem problem_;
  SolverOptions options_;
  VectorX theta_;
  double bestValue_ = 0.0;
  std::vector<CallRecord> history_;
};

// Sets theta_P (override, else previous theta*, else theta_rest), then runs up
// to maxIterations from theta*. Failures are recorded and leave theta* intact.
CallRecord solveCall(SolveSession& session, const std::optional<VectorX>& priorOverride = std::nullopt,
                     const ProgressFn& progress = {});

// Calls until the best value is <= valueThreshold and the mean pair distance is
// <= distanceThreshold, or maxCalls is reached. Always makes at least one call.
void runToAcceptance(SolveSession& session, int maxCalls, double valueThreshold,
                     double distanceThreshold = std::numeric_limits<double>::infinity(),
                     const ProgressFn& progress = {});

nlohmann::json historyToJson(const SolveSession& session);

} // namespace patchgrasp
