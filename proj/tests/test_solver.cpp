#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fixtures.h"
#include "patchgrasp/error.h"
#include "patchgrasp/solver.h"
#include "patchgrasp/synthetic.h"

using namespace patchgrasp;
using namespace fixtures;

namespace {

struct Rig {
  ArticulatedHand hand;
  TriangleMesh skin;
  SkinBinding binding;

  explicit Rig(ArticulatedHand h) : hand(std::move(h)), skin(restSkin(hand)) {
    binding = bindSkin(hand, skin, defaultEpsilon(hand));
  }

  std::vector<int> verticesBeyond(double x, int count) const {
    std::vector<int> out;
    for (int v = 0; v < static_cast<int>(skin.nVertices()) && static_cast<int>(out.size()) < count; v++) {
      if (skin.position(v).x() > x) out.push_back(v);
    }
    return out;
  }
};

VectorX withJoint(const ArticulatedHand& hand, double angle) {
  VectorX t = hand.rest();
  t[kRootDofs] = angle;
  return t;
}

SolverOptions options(Backend b, int maxIterations = 1000) {
  SolverOptions o;
  o.backend = b;
  o.maxIterations = maxIterations;
  return o;
}

double scanArgmin(const PoseProblem& problem, double lo, double hi, int samples) {
  double best = std::numeric_limits<double>::infinity(), arg = lo;
  for (int i = 0; i <= samples; i++) {
    const double a = lo + (hi - lo) * i / samples;
    const double v = problem.value(withJoint(problem.hand(), a));
    if (v < best) best = v, arg = a;
  }
  return arg;
}

} // namespace

TEST_CASE("backend names round trip") {
  CHECK(parseBackend("mma") == Backend::Mma);
  CHECK(parseBackend("lbfgs") == Backend::Lbfgs);
  CHECK(parseBackend(backendName(Backend::Lbfgs)) == Backend::Lbfgs);
  CHECK_THROWS_AS(parseBackend("newton"), InputError);
}

TEST_CASE("a problem minimized at rest stops within two iterations") {
  Rig r(oneJointHand());
  PoseProblem problem(r.hand, r.binding, targetsAt(r.hand, r.binding, r.hand.rest(), r.verticesBeyond(0.5, 6)),
                      {1.0, 0.1, 0.01}, 1.0);
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    MinimizeResult m = minimize(problem, r.hand.rest(), options(b));
    CHECK(m.iterations <= 2);
    CHECK(m.value <= 1e-20);
  }
}

TEST_CASE("one revolute joint matches a dense scan") {
  Rig r(oneJointHand(-2.0, 2.0));
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    PoseProblem problem(r.hand, r.binding, targetsAt(r.hand, r.binding, withJoint(r.hand, 0.7), r.verticesBeyond(0.5, 8)),
                        {1.0, 0.0, 0.0}, 1.0);
    pinRoot(problem);
    MinimizeResult m = minimize(problem, problem.clamp(r.hand.rest()), options(b));
    const double scan = scanArgmin(problem, -2.0, 2.0, 40000);
    CHECK(std::abs(scan - 0.7) <= 1e-4);
    CHECK(std::abs(m.theta[kRootDofs] - scan) <= 1e-3);
    CHECK(m.theta.head<kRootDofs>().isZero(0.0));
  }
}

TEST_CASE("a target beyond the joint limit pins the joint at the limit") {
  Rig r(oneJointHand(-1.0, 1.0));
  VectorX beyond = r.hand.rest();
  beyond[kRootDofs] = 1.3; // the target pose itself is outside the limits
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    PoseProblem problem(r.hand, r.binding, targetsAt(r.hand, r.binding, beyond, r.verticesBeyond(0.5, 8)),
                        {1.0, 0.0, 0.0}, 1.0);
    pinRoot(problem);
    MinimizeResult m = minimize(problem, problem.clamp(r.hand.rest()), options(b));
    CHECK(m.theta[kRootDofs] == 1.0);
    CHECK(std::abs(scanArgmin(problem, -1.0, 1.0, 20000) - 1.0) < 1e-12);
  }
}

TEST_CASE("both backends find the minimizer of a quadratic problem") {
  // Prismatic joints move every point of the last link linearly, so with the
  // root pinned the distance and prior terms are a quadratic with a closed-form minimizer.
  Rig r(sliderHand());
  std::vector<int> verts = r.verticesBeyond(0.5, 10);
  std::mt19937 rng(9);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<PairTarget> pairs;
  Vector3 meanOffset = Vector3::Zero();
  for (int v : verts) {
    const Vector3 offset(g(rng), g(rng), g(rng));
    pairs.push_back({"q", v, v, r.skin.position(v) + offset, -r.skin.normal(v)});
    meanOffset += offset;
  }
  const double m = static_cast<double>(verts.size());
  meanOffset /= m;
  const double lp = 0.5;
  VectorX prior = r.hand.rest();
  prior.tail<3>() = Vector3(0.2, -0.1, 0.4);

  // d/dt [sum |o_i - s_i - t|^2 + lp |t - tp|^2] = 0
  const Vector3 expected = (m * meanOffset + lp * prior.tail<3>()) / (m + lp);

  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    PoseProblem problem(r.hand, r.binding, pairs, {1.0, 0.0, lp}, 1.0);
    pinRoot(problem);
    problem.setPrior(prior);
    MinimizeResult res = minimize(problem, problem.clamp(r.hand.rest()), options(b));
    CAPTURE(backendName(b));
    CHECK((res.theta.tail<3>() - expected).norm() <= 1e-6);
  }
}

namespace {

Rig syntheticRig() { return Rig(parseUrdf(syntheticHandUrdf(), ".", {0.006})); }

// Pairs on random skin vertices aimed at a random perturbed pose.
std::vector<PairTarget> randomPairs(const Rig& r, std::mt19937& rng, int count) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(r.skin.nVertices()) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.01);
  VectorX target = r.hand.rest();
  for (int k = kRootDofs; k < r.hand.dofCount(); k++) {
    target[k] = r.hand.lower()[k] + u(rng) * (r.hand.upper()[k] - r.hand.lower()[k]);
  }
  target.head<3>() = Vector3(g(rng), g(rng), g(rng));
  std::vector<int> verts;
  for (int i = 0; i < count; i++) verts.push_back(pick(rng));
  std::vector<PairTarget> pairs = targetsAt(r.hand, r.binding, target, verts);
  for (PairTarget& p : pairs) p.objectPoint += Vector3(g(rng), g(rng), g(rng));
  return pairs;
}

} // namespace

TEST_CASE("iterates stay inside the box and the objective never increases") {
  Rig r = syntheticRig();
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int problems = 0;
  for (int trial = 0; trial < 50; trial++) {
    for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
      PoseProblem problem(r.hand, r.binding, randomPairs(r, rng, 12), defaultWeights(0.15, r.hand.dofCount()), 0.15);
      // A random sub-box of every DOF's range, some of them collapsed to a point.
      for (int k = 0; k < problem.dofCount(); k++) {
        double lo = k < 3 ? -0.1 : k < kRootDofs ? -1.0 : r.hand.lower()[k];
        double hi = k < 3 ? 0.1 : k < kRootDofs ? 1.0 : r.hand.upper()[k];
        double a = lo + u(rng) * (hi - lo), c = lo + u(rng) * (hi - lo);
        if (u(rng) < 0.1) c = a;
        problem.setBounds(k, std::min(a, c), std::max(a, c));
      }
      VectorX start(problem.dofCount());
      for (int k = 0; k < problem.dofCount(); k++) {
        start[k] = problem.lower()[k] + u(rng) * (problem.upper()[k] - problem.lower()[k]);
      }
      bool inside = true, monotone = true;
      double last = problem.value(problem.clamp(start));
      MinimizeResult m = minimize(problem, start, options(b, 40), [&](int, double value, const VectorX& theta) {
        inside = inside && (theta.array() >= problem.lower().array()).all() &&
                 (theta.array() <= problem.upper().array()).all();
        monotone = monotone && value <= last;
        last = value;
      });
      CHECK(inside);
      CHECK(monotone);
      CHECK(m.value <= problem.value(problem.clamp(start)));
      CHECK(m.value == doctest::Approx(problem.value(m.theta)).epsilon(1e-14));
      problems++;
    }
  }
  CHECK(problems == 100);
}

TEST_CASE("the prior follows the previous result unless overridden") {
  Rig r = syntheticRig();
  std::mt19937 rng(17);
  PoseProblem problem(r.hand, r.binding, randomPairs(r, rng, 10), defaultWeights(0.15, r.hand.dofCount()), 0.15);
  SolveSession session(std::move(problem), options(Backend::Mma, 30));
  const VectorX start = session.theta();

  CallRecord first = solveCall(session);
  CHECK_FALSE(first.priorOverride);
  CHECK(first.prior == session.problem().clamp(r.hand.rest()));
  CHECK(first.error.empty());
  const VectorX afterFirst = session.theta();
  CHECK(afterFirst != start);

  CallRecord second = solveCall(session);
  CHECK(second.prior == afterFirst);
  const VectorX afterSecond = session.theta();

  VectorX user = r.hand.rest();
  user[kRootDofs + 1] = 0.5;
  user[kRootDofs + 2] = 0.25;
  CallRecord third = solveCall(session, user);
  CHECK(third.priorOverride);
  CHECK(third.prior == user);
  CHECK(session.problem().prior() == user);

  CallRecord fourth = solveCall(session);
  CHECK_FALSE(fourth.priorOverride);
  CHECK(fourth.prior == third.theta);
  CHECK(second.theta == afterSecond);
  CHECK(session.calls() == 4);
  CHECK_THROWS_AS(session.setStart(start), InputError);
}

TEST_CASE("a failed call is recorded and leaves the pose alone") {
  Rig r = syntheticRig();
  std::mt19937 rng(4);
  SolveSession session(PoseProblem(r.hand, r.binding, randomPairs(r, rng, 8), {1.0, 0.0, 0.1}, 0.15),
                       options(Backend::Lbfgs, 20));
  solveCall(session);
  const VectorX before = session.theta();
  const double bestBefore = session.bestValue();
  VectorX bad = r.hand.rest();
  bad[7] = std::numeric_limits<double>::quiet_NaN();
  CallRecord rec = solveCall(session, bad);
  CHECK_FALSE(rec.error.empty());
  CHECK(session.theta() == before);
  CHECK(session.bestValue() == bestBefore);
  CHECK(session.calls() == 2);
  CHECK(historyToJson(session)["calls"][1]["error"].get<std::string>() == rec.error);
}

TEST_CASE("calls continue until both acceptance thresholds hold") {
  Rig r = syntheticRig();
  std::mt19937 rng(8);
  std::vector<PairTarget> pairs = randomPairs(r, rng, 10);
  {
    SolveSession s(PoseProblem(r.hand, r.binding, pairs, {1.0, 0.0, 0.1}, 0.15), options(Backend::Mma, 5));
    runToAcceptance(s, 3, std::numeric_limits<double>::infinity());
    CHECK(s.calls() == 1);
  }
  {
    SolveSession s(PoseProblem(r.hand, r.binding, pairs, {1.0, 0.0, 0.1}, 0.15), options(Backend::Mma, 5));
    runToAcceptance(s, 3, -1.0);
    CHECK(s.calls() == 3);
  }
  {
    // The value threshold holds but no pose can bring the mean distance below zero.
    SolveSession s(PoseProblem(r.hand, r.binding, pairs, {1.0, 0.0, 0.1}, 0.15), options(Backend::Mma, 5));
    runToAcceptance(s, 2, std::numeric_limits<double>::infinity(), -1.0);
    CHECK(s.calls() == 2);
  }
  SolveSession s(PoseProblem(r.hand, r.binding, pairs, {1.0, 0.0, 0.1}, 0.15), options(Backend::Mma, 5));
  CHECK_THROWS_AS(runToAcceptance(s, 0, 1.0), InputError);
}

TEST_CASE("progress carries periodic snapshots and a final pose") {
  Rig r = syntheticRig();
  std::mt19937 rng(12);
  SolverOptions o = options(Backend::Lbfgs, 25);
  o.snapshotEvery = 5;
  o.relativeTolerance = 0.0;
  o.stepTolerance = 0.0;
  SolveSession session(PoseProblem(r.hand, r.binding, randomPairs(r, rng, 10), {1.0, 0.0, 0.1}, 0.15), o);
  std::vector<ProgressEvent> events;
  CallRecord rec = solveCall(session, std::nullopt, [&](const ProgressEvent& e) { events.push_back(e); });
  REQUIRE(rec.error.empty());
  REQUIRE(events.size() == static_cast<size_t>(rec.iterations) + 1);
  for (int i = 0; i < rec.iterations; i++) {
    CHECK(events[i].iteration == i + 1);
    CHECK(events[i].call == 1);
    CHECK(events[i].theta.has_value() == ((i + 1) % 5 == 0));
  }
  const ProgressEvent& last = events.back();
  REQUIRE(last.theta.has_value());
  CHECK(*last.theta == session.theta());
  CHECK(last.value == rec.bestValue);
}

TEST_CASE("history document lists every call") {
  Rig r = syntheticRig();
  std::mt19937 rng(21);
  SolveSession session(PoseProblem(r.hand, r.binding, randomPairs(r, rng, 10), {1.0, 0.0, 0.1}, 0.15),
                       options(Backend::Lbfgs, 10));
  solveCall(session);
  VectorX user = r.hand.rest();
  solveCall(session, user);
  nlohmann::json h = historyToJson(session);
  CHECK(h["backend"] == "lbfgs");
  REQUIRE(h["calls"].size() == 2);
  CHECK(h["calls"][0]["call"] == 1);
  CHECK(h["calls"][1]["prior_override"] == true);
  CHECK(h["calls"][0]["theta"].size() == static_cast<size_t>(r.hand.dofCount()));
  CHECK(h["calls"][1]["best_value"].get<double>() == session.history()[1].bestValue);
}
