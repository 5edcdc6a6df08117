#include "patchgrasp/solver.h"

#include <chrono>
#include <cmath>
#include <deque>

#include "patchgrasp/error.h"

namespace patchgrasp {

std::string backendName(Backend b) { return b == Backend::Mma ? "mma" : "lbfgs"; }

Backend parseBackend(const std::string& name) {
  if (name == "mma") return Backend::Mma;
  if (name == "lbfgs") return Backend::Lbfgs;
  throw InputError("unknown backend '" + name + "' (expected mma or lbfgs)");
}

namespace {

// One accepted move of a backend. f and g are updated in place when it moves.
struct StepResult {
  bool moved = false;
  int evaluations = 0;
};

// Globally convergent MMA for a box-constrained objective: separable convex
// approximations between moving asymptotes, with the conservative inner loop
// that raises rho until the approximation bounds the true value at the candidate.
class Mma {
public:
  Mma(const PoseProblem& problem) : problem_(problem), lo_(problem.lower()), hi_(problem.upper()) {
    range_ = (hi_ - lo_).cwiseMax(1e-5);
  }

  StepResult step(VectorX& x, double& f, VectorX& g) {
    const int n = static_cast<int>(x.size());
    iteration_++;
    if (iteration_ <= 2) {
      L_ = x - 0.5 * range_;
      U_ = x + 0.5 * range_;
    } else {
      for (int j = 0; j < n; j++) {
        const double s = (x[j] - x1_[j]) * (x1_[j] - x2_[j]);
        const double gamma = s > 0 ? 1.2 : (s < 0 ? 0.7 : 1.0);
        L_[j] = x[j] - gamma * (x1_[j] - L_[j]);
        U_[j] = x[j] + gamma * (U_[j] - x1_[j]);
      }
    }
    L_ = L_.cwiseMax(x - 10.0 * range_).cwiseMin(x - 0.01 * range_);
    U_ = U_.cwiseMin(x + 10.0 * range_).cwiseMax(x + 0.01 * range_);

    VectorX alpha(n), beta(n);
    for (int j = 0; j < n; j++) {
      alpha[j] = std::max({lo_[j], L_[j] + 0.1 * (x[j] - L_[j]), x[j] - 0.5 * range_[j]});
      beta[j] = std::min({hi_[j], U_[j] - 0.1 * (U_[j] - x[j]), x[j] + 0.5 * range_[j]});
    }

    double rho = 0.0;
    for (int j = 0; j < n; j++) rho += std::abs(g[j]) * range_[j];
    rho = std::max(0.1 * rho / n, 1e-30);

    StepResult out;
    VectorX xn(n), p(n), q(n);
    for (int inner = 0; inner < 30; inner++) {
      double approx = f;
      for (int j = 0; j < n; j++) {
        const double gp = std::max(g[j], 0.0), gm = std::max(-g[j], 0.0);
        p[j] = (U_[j] - x[j]) * (U_[j] - x[j]) * (1.001 * gp + 0.001 * gm + rho / range_[j]);
        q[j] = (x[j] - L_[j]) * (x[j] - L_[j]) * (0.001 * gp + 1.001 * gm + rho / range_[j]);
        const double sp = std::sqrt(p[j]), sq = std::sqrt(q[j]);
        xn[j] = hi_[j] > lo_[j] ? std::clamp((sp * L_[j] + sq * U_[j]) / (sp + sq), alpha[j], beta[j]) : x[j];
        approx += p[j] / (U_[j] - xn[j]) + q[j] / (xn[j] - L_[j]) - p[j] / (U_[j] - x[j]) - q[j] / (x[j] - L_[j]);
      }
      if ((xn - x).cwiseAbs().maxCoeff() == 0.0) break;
      const double fn = problem_.value(xn);
      out.evaluations++;
      if (fn <= approx + 1e-14 * std::abs(f)) {
        if (fn < f || (fn == f && inner == 0)) {
          x2_ = iteration_ >= 2 ? x1_ : x;
          x1_ = x;
          x = xn;
          f = problem_.valueAndGradient(x, g);
          out.evaluations += 1 + 2 * n;
          out.moved = true;
        }
        break;
      }
      double d = 0.0;
      for (int j = 0; j < n; j++) {
        const double dx = xn[j] - x[j];
        d += (U_[j] - L_[j]) * dx * dx / ((U_[j] - xn[j]) * (xn[j] - L_[j]) * range_[j]);
      }
      const double delta = d > 0.0 ? (fn - approx) / d : 0.0;
      rho = std::min(1.1 * (rho + delta), 10.0 * rho);
    }
    if (!out.moved) {
      x2_ = x1_ = x;
    }
    return out;
  }

private:
  const PoseProblem& problem_;
  VectorX lo_, hi_, range_;
  VectorX L_, U_, x1_, x2_;
  int iteration_ = 0;
};

// Projected L-BFGS: quasi-Newton direction on the free variables, Armijo
// backtracking along the projected path.
class ProjectedLbfgs {
public:
  ProjectedLbfgs(const PoseProblem& problem) : problem_(problem) {
    scale_ = VectorX::Ones(problem.dofCount());
    for (int j = 0; j < problem.dofCount(); j++) {
      if (!problem.hand().isAngular(j)) scale_[j] = problem.lengthScale();
    }
  }

  StepResult step(VectorX& x, double& f, VectorX& g) {
    const int n = static_cast<int>(x.size());
    const VectorX& lo = problem_.lower();
    const VectorX& hi = problem_.upper();
    VectorX mask(n);
    for (int j = 0; j < n; j++) {
      const bool pinned = lo[j] == hi[j] || (x[j] <= lo[j] && g[j] > 0) || (x[j] >= hi[j] && g[j] < 0);
      mask[j] = pinned ? 0.0 : 1.0;
    }
    VectorX gf = g.cwiseProduct(mask);
    StepResult out;
    if (gf.cwiseAbs().maxCoeff() == 0.0) return out;

    // Two-loop recursion on the free variables, in coordinates where lengths are
    // divided by the length scale so that the initial Hessian guess is isotropic.
    VectorX q = gf.cwiseProduct(scale_);
    std::vector<double> a(s_.size()), rho(s_.size());
    for (int k = static_cast<int>(s_.size()) - 1; k >= 0; k--) {
      rho[k] = 1.0 / y_[k].cwiseProduct(mask).dot(s_[k].cwiseProduct(mask));
      if (!std::isfinite(rho[k]) || rho[k] <= 0) continue;
      a[k] = rho[k] * s_[k].cwiseProduct(mask).dot(q);
      q -= a[k] * y_[k].cwiseProduct(mask);
    }
    double alpha0 = 1.0;
    VectorX d;
    if (!s_.empty()) {
      q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
      for (size_t k = 0; k < s_.size(); k++) {
        if (!std::isfinite(rho[k]) || rho[k] <= 0) continue;
        const double b = rho[k] * y_[k].cwiseProduct(mask).dot(q);
        q += (a[k] - b) * s_[k].cwiseProduct(mask);
      }
      d = -q.cwiseProduct(scale_);
    } else {
      // No curvature yet: cap the first trial at a tenth of a radian or of the length scale.
      d = -gf.cwiseProduct(scale_).cwiseProduct(scale_);
      alpha0 = std::min(1.0, 0.1 / d.cwiseQuotient(scale_).cwiseAbs().maxCoeff());
    }
    d = d.cwiseProduct(mask);
    if (!(d.dot(gf) < 0.0)) {
      d = -gf.cwiseProduct(scale_).cwiseProduct(scale_);
      s_.clear();
      y_.clear();
      alpha0 = std::min(1.0, 0.1 / d.cwiseQuotient(scale_).cwiseAbs().maxCoeff());
    }

    double step = alpha0;
    for (int k = 0; k < 50; k++, step *= 0.5) {
      VectorX xn = problem_.clamp(x + step * d);
      if ((xn - x).cwiseAbs().maxCoeff() == 0.0) break;
      const double fn = problem_.value(xn);
      out.evaluations++;
      if (fn <= f + 1e-4 * g.dot(xn - x) && fn < f) {
        VectorX gn;
        problem_.valueAndGradient(xn, gn);
        out.evaluations += 1 + 2 * n;
        VectorX s = (xn - x).cwiseQuotient(scale_), y = (gn - g).cwiseProduct(scale_);
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
          s_.push_back(s);
          y_.push_back(y);
          if (s_.size() > 10) {
            s_.pop_front();
            y_.pop_front();
          }
        }
        x = xn;
        f = fn;
        g = gn;
        out.moved = true;
        return out;
      }
    }
    s_.clear();
    y_.clear();
    return out;
  }

private:
  const PoseProblem& problem_;
  VectorX scale_;
  std::deque<VectorX> s_, y_;
};

template <class Backend>
MinimizeResult run(Backend& backend, const PoseProblem& problem, const VectorX& start, const SolverOptions& options,
                   const std::function<void(int, double, const VectorX&)>& onIteration) {
  MinimizeResult r;
  VectorX x = problem.clamp(start), g;
  double f = problem.valueAndGradient(x, g);
  r.evaluations = 1 + 2 * problem.dofCount();
  if (!std::isfinite(f)) throw NumericalError("objective is not finite at the start pose");
  std::vector<double> best{f};
  r.stopReason = "iteration cap";
  while (r.iterations < options.maxIterations) {
    if (f == 0.0) {
      r.stopReason = "zero objective";
      break;
    }
    const VectorX before = x;
    StepResult s = backend.step(x, f, g);
    r.iterations++;
    r.evaluations += s.evaluations;
    best.push_back(f);
    if (onIteration) onIteration(r.iterations, f, x);
    if ((x - before).cwiseAbs().maxCoeff() < options.stepTolerance) {
      r.stopReason = "step tolerance";
      break;
    }
    const int k = static_cast<int>(best.size()) - 1;
    if (k >= options.decreaseWindow) {
      const double old = best[k - options.decreaseWindow];
      if (old - f <= options.relativeTolerance * std::abs(old)) {
        r.stopReason = "relative decrease";
        break;
      }
    }
  }
  r.theta = x;
  r.value = f;
  return r;
}

} // namespace

MinimizeResult minimize(const PoseProblem& problem, const VectorX& start, const SolverOptions& options,
                        const std::function<void(int, double, const VectorX&)>& onIteration) {
  if (options.maxIterations < 0) throw InputError("iteration cap must be non-negative");
  if (options.backend == Backend::Mma) {
    Mma mma(problem);
    return run(mma, problem, start, options, onIteration);
  }
  ProjectedLbfgs lbfgs(problem);
  return run(lbfgs, problem, start, options, onIteration);
}

SolveSession::SolveSession(PoseProblem problem, SolverOptions options)
    : problem_(std::move(problem)), options_(options) {
  theta_ = problem_.clamp(problem_.hand().rest());
  bestValue_ = problem_.value(theta_);
}

void SolveSession::setStart(const VectorX& theta) {
  if (!history_.empty()) throw InputError("the start pose can only be set before the first call");
  if (theta.size() != problem_.dofCount()) throw InputError("start pose has the wrong size");
  theta_ = problem_.clamp(theta);
  bestValue_ = problem_.value(theta_);
}

CallRecord solveCall(SolveSession& session, const std::optional<VectorX>& priorOverride, const ProgressFn& progress) {
  PoseProblem& problem = session.problem_;
  CallRecord rec;
  rec.call = session.calls() + 1;
  rec.priorOverride = priorOverride.has_value();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (priorOverride) {
      problem.setPrior(*priorOverride);
    } else {
      problem.setPrior(session.history_.empty() ? problem.hand().rest() : session.theta_);
    }
    rec.prior = problem.prior();
    rec.startValue = problem.value(session.theta_);
    if (!std::isfinite(rec.startValue)) throw NumericalError("objective is not finite at the start pose");
    const int every = std::max(1, session.options_.snapshotEvery);
    auto onIteration = [&](int it, double value, const VectorX& theta) {
      if (!progress) return;
      ProgressEvent e{rec.call, it, value, std::nullopt};
      if (it % every == 0) e.theta = theta;
      progress(e);
    };
    MinimizeResult r = minimize(problem, session.theta_, session.options_, onIteration);
    rec.iterations = r.iterations;
    rec.evaluations = r.evaluations;
    rec.bestValue = r.value;
    rec.stopReason = r.stopReason;

    // Keep |omega| <= pi so later calls stay away from the 2 pi singularity.
    VectorX theta = r.theta;
    theta.segment<3>(3) = recenterRotation(theta.segment<3>(3));
    if (problem.clamp(theta) != theta) theta = r.theta;
    session.theta_ = theta;
    session.bestValue_ = r.value;
    rec.theta = theta;
    if (progress) progress({rec.call, rec.iterations, rec.bestValue, theta});
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.theta = session.theta_;
    rec.bestValue = session.bestValue_;
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  session.history_.push_back(rec);
  return rec;
}

void runToAcceptance(SolveSession& session, int maxCalls, double valueThreshold, double distanceThreshold,
                     const ProgressFn& progress) {
  if (maxCalls < 1) throw InputError("max calls must be at least 1");
  for (int call = 0; call < maxCalls; call++) {
    CallRecord rec = solveCall(session, std::nullopt, progress);
    if (!rec.error.empty()) return;
    if (session.bestValue() > valueThreshold) continue;
    if (distanceThreshold == std::numeric_limits<double>::infinity() ||
        session.problem().terms(session.theta()).meanPairDistance <= distanceThreshold) {
      return;
    }
  }
}

namespace {

nlohmann::json vec(const VectorX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

} // namespace

nlohmann::json historyToJson(const SolveSession& session) {
  nlohmann::json calls = nlohmann::json::array();
  for (const CallRecord& r : session.history()) {
    nlohmann::json c = {{"call", r.call},
                        {"iterations", r.iterations},
                        {"evaluations", r.evaluations},
                        {"start_value", r.startValue},
                        {"best_value", r.bestValue},
                        {"prior_override", r.priorOverride},
                        {"prior", vec(r.prior)},
                        {"theta", vec(r.theta)},
                        {"stop_reason", r.stopReason},
                        {"seconds", r.seconds}};
    if (!r.error.empty()) c["error"] = r.error;
    calls.push_back(c);
  }
  return {{"backend", backendName(session.options().backend)}, {"calls", calls}};
}

} // namespace patchgrasp
