// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit code 0 only when all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "patchgrasp/primitives.h"
#include "patchgrasp/sequence.h"
#include "patchgrasp/synthetic.h"

using namespace patchgrasp;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Hands and targets.

std::string boxLink(const std::string& name, const std::string& size, const std::string& xyz) {
  return "<link name=\"" + name + "\"><visual><origin xyz=\"" + xyz + "\"/><geometry><box size=\"" + size +
         "\"/></geometry></visual></link>";
}

std::string revolute(const std::string& name, const std::string& parent, const std::string& child,
                     const std::string& xyz, const std::string& axis, double lower, double upper) {
  return "<joint name=\"" + name + "\" type=\"revolute\"><parent link=\"" + parent + "\"/><child link=\"" + child +
         "\"/><origin xyz=\"" + xyz + "\"/><axis xyz=\"" + axis + "\"/><limit lower=\"" + std::to_string(lower) +
         "\" upper=\"" + std::to_string(upper) + "\"/></joint>";
}

ArticulatedHand oneJointHand() {
  return parseUrdf("<robot name=\"one\">" + boxLink("base", "0.2 0.2 0.2", "0 0 0") +
                       boxLink("arm", "0.2 0.2 0.2", "1 0 0") + revolute("hinge", "base", "arm", "0 0 0", "0 0 1", -2, 2) +
                       "</robot>",
                   ".", {0.1});
}

TriangleMesh restSkin(const ArticulatedHand& hand) {
  std::vector<Isometry3> fk = hand.forwardKinematics(hand.rest());
  std::vector<Vector3> pos;
  std::vector<Face> faces;
  for (size_t l = 0; l < hand.links().size(); l++) {
    const TriangleMesh& m = hand.links()[l].mesh;
    const int offset = static_cast<int>(pos.size());
    for (const Vector3& p : m.positions()) pos.push_back(fk[l] * p);
    for (Face f : m.faces()) faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  }
  return TriangleMesh(pos, faces);
}

struct Rig {
  ArticulatedHand hand;
  TriangleMesh skin;
  SkinBinding binding;
  explicit Rig(ArticulatedHand h) : hand(std::move(h)), skin(restSkin(hand)) {
    binding = bindSkin(hand, skin, defaultEpsilon(hand));
  }
};

std::vector<PairTarget> targetsAt(const Rig& r, const VectorX& theta, const std::vector<int>& verts) {
  std::vector<Isometry3> fk = r.hand.forwardKinematics(theta);
  std::vector<PairTarget> out;
  for (int v : verts) {
    SkinSample s = skinPointAndNormal(r.binding, fk, v);
    out.push_back({"a", v, v, s.position, -s.normal});
  }
  return out;
}

std::vector<int> verticesBeyond(const Rig& r, double x, int count) {
  std::vector<int> out;
  for (int v = 0; v < static_cast<int>(r.skin.nVertices()) && static_cast<int>(out.size()) < count; v++) {
    if (r.skin.position(v).x() > x) out.push_back(v);
  }
  return out;
}

VectorX randomPose(const ArticulatedHand& hand, std::mt19937& rng, double rootSpan) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VectorX t(hand.dofCount());
  for (int k = 0; k < hand.dofCount(); k++) {
    t[k] = k < kRootDofs ? rootSpan * (2 * u(rng) - 1) : hand.lower()[k] + u(rng) * (hand.upper()[k] - hand.lower()[k]);
  }
  return t;
}

// Criteria.

Outcome planarLogmap() {
  const int n = 64;
  const TriangleMesh grid = makeGrid(n, n, 1.0 / (n - 1));
  const int root = (n / 2) * n + n / 2;
  const auto t0 = Clock::now();
  const LogmapChart c = computeLogmapHeat(grid, root, Vector3::UnitX());
  const double seconds = since(t0);
  double relR = 0.0, phi = 0.0;
  for (int v = 0; v < static_cast<int>(grid.nVertices()); v++) {
    if (v == root) continue;
    const Vector3 d = grid.position(v) - grid.position(root);
    relR += std::abs(c.r[v] - d.norm()) / d.norm();
    phi += std::abs(wrapAngle(c.phi[v] - std::atan2(d.y(), d.x())));
  }
  relR /= grid.nVertices() - 1;
  phi /= grid.nVertices() - 1;
  return {relR <= 0.01 && phi <= 0.05 && seconds <= 2.0,
          fmt("mean rel r err %.4f%% (<= 1%%), mean phi err %.4f rad (<= 0.05), %.3f s (<= 2)", 100 * relR, phi,
              seconds)};
}

Outcome sphereLogmap() {
  const double radius = 2.0;
  const TriangleMesh sphere = makeIcosphere(5, radius);
  const int root = 0;
  const Vector3 ref = sphere.tangentX(root);
  const LogmapChart c = computeLogmapHeat(sphere, root, ref);
  const Vector3 up = sphere.position(root).normalized();
  double rel = 0.0;
  for (int v = 1; v < static_cast<int>(sphere.nVertices()); v++) {
    const double alpha = std::acos(std::clamp(sphere.position(v).normalized().dot(up), -1.0, 1.0));
    rel += std::abs(c.r[v] - radius * alpha) / (radius * alpha);
  }
  rel /= sphere.nVertices() - 1;

  // phi is undefined at the antipode, so it is compared inside 90% of the largest r.
  const double rMax = *std::max_element(c.r.begin(), c.r.end());
  double worstR = 0.0, worstPhi = 0.0;
  for (double s : {0.1, 1.0, 10.0}) {
    const LogmapChart cs = computeLogmapHeat(sphere.scaled(s), root, ref);
    for (int v = 0; v < static_cast<int>(sphere.nVertices()); v++) {
      worstR = std::max(worstR, std::abs(cs.r[v] - s * c.r[v]) / (s * std::max(c.r[v], 1e-3)));
      if (c.r[v] < 0.9 * rMax) worstPhi = std::max(worstPhi, std::abs(wrapAngle(cs.phi[v] - c.phi[v])));
    }
  }
  return {sphere.nVertices() >= 10000 && rel <= 0.02 && worstR <= 1e-6 && worstPhi <= 1e-6,
          fmt("%zu vertices, mean rel r err %.3f%% (<= 2%%), scale s=0.1/1/10: r %.1e, phi %.1e (<= 1e-6)",
              sphere.nVertices(), 100 * rel, worstR, worstPhi)};
}

ContactPatch ringPatch(const TriangleMesh& m, const Vector3& center, double radius, double width) {
  ContactPatch p;
  p.label = "ring";
  double best = 1e18;
  for (int v = 0; v < static_cast<int>(m.nVertices()); v++) {
    const double d = (m.position(v) - center).norm();
    if (std::abs(d - radius) < width) p.boundary.push_back(v);
    if (d < best) best = d, p.root = v;
  }
  return finalizePatch(p, m);
}

Outcome transfer() {
  // Identity: one grid as both meshes.
  const TriangleMesh grid = makeGrid(31, 31, 0.2);
  const int root = 15 * 31 + 15;
  const ContactPatch patch = ringPatch(grid, grid.position(root), 1.6, 0.12);
  const TransferSpec same = makeTransferSpec(grid, grid, root, root, Vector3::UnitX(), Vector3::UnitX());
  const LogmapChart chart = computeLogmapHeat(grid, root, same.objectTangent);
  const Correspondence id = transferPatch(patch, same, chart, chart);
  double identityMax = 0.0;
  bool identityOk = true;
  for (const CorrespondencePair& p : id.pairs) {
    identityMax = std::max(identityMax, p.residual);
    identityOk = identityOk && !p.unreachable && p.skinVertex == p.objectVertex && p.residual == 0.0;
  }

  // Cross resolution: spacing 1 onto spacing 0.5 over the same square.
  const TriangleMesh coarse = makeGrid(21, 21, 1.0), fine = makeGrid(41, 41, 0.5);
  const int cr = 10 * 21 + 10, fr = 20 * 41 + 20;
  const ContactPatch ring = ringPatch(coarse, coarse.position(cr), 5.0, 0.6);
  const TransferSpec spec = makeTransferSpec(coarse, fine, cr, fr, Vector3::UnitX(), Vector3::UnitX());
  auto run = [&] {
    return transferPatch(ring, spec, computeLogmapHeat(coarse, cr, spec.objectTangent),
                         computeLogmapHeat(fine, fr, spec.skinTangent));
  };
  const Correspondence c = run();
  double crossMax = 0.0;
  bool crossOk = true;
  for (const CorrespondencePair& p : c.pairs) {
    crossMax = std::max(crossMax, p.residual);
    crossOk = crossOk && !p.unreachable;
  }
  bool deterministic = true;
  for (int k = 0; k < 5; k++) {
    const Correspondence again = run();
    deterministic = deterministic && again.pairs.size() == c.pairs.size();
    for (size_t i = 0; deterministic && i < c.pairs.size(); i++) {
      deterministic = again.pairs[i].skinVertex == c.pairs[i].skinVertex && again.pairs[i].residual == c.pairs[i].residual;
    }
  }
  return {identityOk && crossOk && crossMax <= 0.25 && deterministic,
          fmt("identity max residual %g (== 0), cross-resolution max residual %.4f (<= 0.25), 5 runs %s", identityMax,
              crossMax, deterministic ? "identical" : "differ")};
}

Outcome objective() {
  const Vector3 n(0, 0, 1), a(1, 2, 3);
  VectorX t(3), p(3);
  t << 0.1, 0.2, 0.3;
  p = t;
  p[1] += 1.0;
  const bool terms = gammaN(n, -n) == 0.0 && gammaN(n, Vector3::UnitX()) == 1.0 && gammaN(n, n) == 4.0 &&
                     gammaD(a, a) == 0.0 && gammaD(a, a + Vector3::UnitY()) == 1.0 && gammaP(t, t) == 0.0 &&
                     std::abs(gammaP(t, p) - 1.0) <= 1e-15;

  const Rig r(oneJointHand());
  const std::vector<int> arm = verticesBeyond(r, 0.5, 8);
  std::mt19937 rng(11);
  double worst = std::numeric_limits<double>::infinity();
  int samples = 0;
  for (int trial = 0; trial < 200 && samples < 20; trial++) {
    PoseProblem problem(r.hand, r.binding, targetsAt(r, randomPose(r.hand, rng, 0.3), arm), {1.0, 0.5, 0.0}, 1.0);
    const VectorX theta = randomPose(r.hand, rng, 0.3);
    VectorX g1, g2, r1, r2;
    problem.valueAndGradient(theta, g1, 4000.0);
    problem.valueAndGradient(theta, g2, 2000.0);
    problem.valueAndGradient(theta, r1, 400.0);
    problem.valueAndGradient(theta, r2, 200.0);
    const VectorX ref = (4.0 * r2 - r1) / 3.0;
    const double e2 = (g2 - ref).norm();
    if (e2 < 1e-9) continue;
    worst = std::min(worst, (g1 - ref).norm() / e2);
    samples++;
  }
  return {terms && samples == 20 && worst >= 3.5,
          fmt("gamma_n 0/1/4 and gamma_d, gamma_p cases %s; min gradient ratio %.3f over %d samples (>= 3.5)",
              terms ? "exact" : "WRONG", worst, samples)};
}

Outcome solver() {
  // Scan oracle on one revolute joint.
  const Rig one(oneJointHand());
  double scanErr = 0.0;
  VectorX target = one.hand.rest();
  target[kRootDofs] = 0.7;
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    PoseProblem problem(one.hand, one.binding, targetsAt(one, target, verticesBeyond(one, 0.5, 8)), {1, 0, 0}, 1.0);
    for (int k = 0; k < kRootDofs; k++) problem.setBounds(k, 0.0, 0.0);
    SolverOptions o;
    o.backend = b;
    const MinimizeResult m = minimize(problem, problem.clamp(one.hand.rest()), o);
    double best = std::numeric_limits<double>::infinity(), arg = 0.0;
    for (int i = 0; i <= 40000; i++) {
      VectorX x = one.hand.rest();
      x[kRootDofs] = -2.0 + 4.0 * i / 40000;
      const double v = problem.value(x);
      if (v < best) best = v, arg = x[kRootDofs];
    }
    scanErr = std::max(scanErr, std::abs(m.theta[kRootDofs] - arg));
  }

  // Random boxed problems on the synthetic hand.
  const Rig rig(parseUrdf(syntheticHandUrdf(), ".", {0.006}));
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.01);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(rig.skin.nVertices()) - 1);
  int problems = 0, outside = 0, increases = 0;
  for (int trial = 0; trial < 50; trial++) {
    for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
      VectorX goal = randomPose(rig.hand, rng, 0.0);
      goal.head<3>() = Vector3(g(rng), g(rng), g(rng));
      std::vector<int> verts;
      for (int i = 0; i < 12; i++) verts.push_back(pick(rng));
      std::vector<PairTarget> pairs = targetsAt(rig, goal, verts);
      for (PairTarget& p : pairs) p.objectPoint += Vector3(g(rng), g(rng), g(rng));
      PoseProblem problem(rig.hand, rig.binding, pairs, defaultWeights(0.15, rig.hand.dofCount()), 0.15);
      for (int k = 0; k < problem.dofCount(); k++) {
        const double lo = k < 3 ? -0.1 : k < kRootDofs ? -1.0 : rig.hand.lower()[k];
        const double hi = k < 3 ? 0.1 : k < kRootDofs ? 1.0 : rig.hand.upper()[k];
        const double x = lo + u(rng) * (hi - lo), y = lo + u(rng) * (hi - lo);
        problem.setBounds(k, std::min(x, y), std::max(x, y));
      }
      VectorX start(problem.dofCount());
      for (int k = 0; k < problem.dofCount(); k++) {
        start[k] = problem.lower()[k] + u(rng) * (problem.upper()[k] - problem.lower()[k]);
      }
      double last = problem.value(start);
      SolverOptions o;
      o.backend = b;
      o.maxIterations = 40;
      minimize(problem, start, o, [&](int, double value, const VectorX& x) {
        if ((x.array() < problem.lower().array()).any() || (x.array() > problem.upper().array()).any()) outside++;
        if (value > last) increases++;
        last = value;
      });
      problems++;
    }
  }

  // Prior policy audit.
  PoseProblem problem(rig.hand, rig.binding, targetsAt(rig, randomPose(rig.hand, rng, 0.0), {1, 50, 99, 400}),
                      defaultWeights(0.15, rig.hand.dofCount()), 0.15);
  SolverOptions o;
  o.maxIterations = 30;
  SolveSession session(std::move(problem), o);
  const CallRecord first = solveCall(session);
  const VectorX after = session.theta();
  const CallRecord second = solveCall(session);
  VectorX user = rig.hand.rest();
  user[kRootDofs + 1] = 0.5;
  const CallRecord third = solveCall(session, user);
  const CallRecord fourth = solveCall(session);
  const bool policy = first.prior == session.problem().clamp(rig.hand.rest()) && second.prior == after &&
                      third.priorOverride && third.prior == user && !fourth.priorOverride && fourth.prior == third.theta;

  return {scanErr <= 1e-3 && problems == 100 && outside == 0 && increases == 0 && policy,
          fmt("scan error %.2e (<= 1e-3); %d problems: %d iterates outside, %d increases; prior policy %s", scanErr,
              problems, outside, increases, policy ? "bit-exact" : "VIOLATED")};
}

struct GraspRun {
  double distance = 0.0, threshold = 0.0, seconds = 0.0;
  int calls = 0, maxIterations = 0, overrides = 0;
  VectorX theta;
};

GraspRun grasp(Scene scene, Backend backend, int maxCalls) {
  const auto t0 = Clock::now();
  const TransferOutcome t = runTransfers(scene);
  std::unique_ptr<PreparedScene> prepared = prepareScene(std::move(scene), t.correspondences);
  SolveSession session = prepared->makeSession(backend);
  runToAcceptance(session, maxCalls, std::numeric_limits<double>::infinity(), prepared->distanceThreshold());
  GraspRun r;
  r.seconds = since(t0);
  r.distance = session.problem().terms(session.theta()).meanPairDistance;
  r.threshold = prepared->distanceThreshold();
  r.calls = session.calls();
  for (const CallRecord& c : session.history()) {
    r.maxIterations = std::max(r.maxIterations, c.iterations);
    r.overrides += c.priorOverride;
  }
  r.theta = session.theta();
  return r;
}

Outcome endToEnd() {
  Outcome o{true, ""};
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    const GraspRun r = grasp(makeSyntheticGraspScene().scene, b, 3);
    o.pass = o.pass && r.distance <= r.threshold && r.calls <= 3 && r.maxIterations <= 1000 && r.seconds <= 30.0;
    o.detail += fmt("%s%s: distance %.2e (<= %.2e), %d calls (<= 3), max %d iterations, %.2f s (<= 30)",
                    o.detail.empty() ? "" : "; ", backendName(b).c_str(), r.distance, r.threshold, r.calls,
                    r.maxIterations, r.seconds);
  }
  return o;
}

Outcome poorInitialization() {
  SyntheticOptions so;
  so.poorInitialization = true;
  Outcome o{true, ""};
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    const GraspRun r = grasp(makeSyntheticGraspScene(so).scene, b, 4);
    o.pass = o.pass && r.distance <= r.threshold && r.calls <= 4 && r.overrides == 0;
    o.detail += fmt("%s%s: distance %.2e (<= %.2e), %d calls (<= 4), %d overrides", o.detail.empty() ? "" : "; ",
                    backendName(b).c_str(), r.distance, r.threshold, r.calls, r.overrides);
  }
  return o;
}

Outcome jointLimits() {
  const SyntheticScene syn = makeSyntheticGraspScene();
  const ArticulatedHand& hand = syn.scene.hand;
  const int dof = hand.joints()[hand.jointIndex("f3_proximal_joint")].dof;
  const double upper = 1.2, tol = syn.scene.optimizer.solver.stepTolerance;
  Outcome o{true, ""};
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    const GraspRun nominal = grasp(syn.scene, b, 3);
    Scene tight = syn.scene;
    tight.boundOverrides["f3_proximal_joint"] = {0.0, upper};
    const GraspRun altered = grasp(tight, b, 3);
    double change = 0.0;
    for (int k = 0; k < hand.dofCount(); k++) {
      if (k != dof) change = std::max(change, std::abs(nominal.theta[k] - altered.theta[k]));
    }
    const bool inBounds = altered.theta[dof] <= upper && altered.theta[dof] >= 0.0;
    o.pass = o.pass && change > tol && inBounds;
    o.detail += fmt("%s%s: f3 proximal %.4f -> %.4f (<= %.2f), largest change elsewhere %.2e (> %.0e)",
                    o.detail.empty() ? "" : "; ", backendName(b).c_str(), nominal.theta[dof], altered.theta[dof],
                    upper, change, tol);
  }
  return o;
}

Outcome sequence() {
  const SyntheticScene syn = makeSyntheticGraspScene();
  const TransferOutcome t = runTransfers(syn.scene);
  const std::unique_ptr<PreparedScene> prepared = prepareScene(syn.scene, t.correspondences);
  auto track = [&](int frames, const Vector3& step) {
    TrackConfig config;
    config.frames = frames;
    config.objectStep.translation() = step;
    ManipulationTrack tr;
    tr.objectPoses = trackObjectPoses(config, prepared->scene.objectPose);
    tr.correspondences.assign(frames, prepared->correspondences);
    for (const Correspondence& c : prepared->correspondences) tr.windows[c.label] = {0, frames - 1};
    return tr;
  };

  TrackOptions o;
  o.backend = Backend::Lbfgs;
  ManipulationTrack warm = track(10, Vector3(0.002, 0, 0)), cold = warm;
  solveTrack(warm, *prepared, o);
  o.warmStart = false;
  solveTrack(cold, *prepared, o);
  int warmTotal = 0, coldTotal = 0;
  bool ok = true;
  for (int f = 1; f < 10; f++) {
    warmTotal += warm.results[f].iterations;
    coldTotal += cold.results[f].iterations;
    ok = ok && warm.results[f].ok && cold.results[f].ok;
  }

  const double limit = 10.0 * prepared->scene.optimizer.solver.stepTolerance;
  double drift = 0.0;
  for (Backend b : {Backend::Mma, Backend::Lbfgs}) {
    ManipulationTrack still = track(6, Vector3::Zero());
    TrackOptions so;
    so.backend = b;
    solveTrack(still, *prepared, so);
    for (int f = 1; f < 6; f++) {
      ok = ok && still.results[f].ok;
      drift = std::max(drift, (still.results[f].theta - still.results[f - 1].theta).cwiseAbs().maxCoeff());
    }
  }
  return {ok && warmTotal < coldTotal && drift <= limit,
          fmt("rigid follow (lbfgs, 10 frames, 2 mm steps): warm %d < cold %d iterations; static drift %.1e (<= %.0e)",
              warmTotal, coldTotal, drift, limit)};
}

Outcome epsilonBinding() {
  const ArticulatedHand hand = parseUrdf(
      "<robot name=\"chain\">" + boxLink("a", "1 1 1", "0 0 0") + boxLink("b", "1 1 1", "1.5 0 0") +
          boxLink("c", "1 1 1", "1.5 0 0") + revolute("j1", "a", "b", "0 0 0", "0 0 1", -2, 2) +
          revolute("j2", "b", "c", "1.5 0 0", "0 1 0", -2, 2) + "</robot>",
      ".", {0.25});
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 4.0), e(0.05, 0.6);
  std::vector<Vector3> pos;
  std::vector<Face> faces;
  for (int i = 0; i < 10002; i++) pos.emplace_back(u(rng), 0.8 * u(rng) - 1.0, 0.8 * u(rng) - 1.0);
  for (int i = 0; i + 2 < 10002; i += 3) faces.push_back({i, i + 1, i + 2});
  const TriangleMesh skin(pos, faces);
  int violations = 0, bound = 0, total = 0;
  for (int trial = 0; trial < 3; trial++) {
    const double epsilon = e(rng);
    const SkinBinding b = bindSkin(hand, skin, epsilon);
    for (int v = 0; v < static_cast<int>(skin.nVertices()); v++) {
      violations += b.isBound(v) != (b.restDistance[v] <= epsilon);
      bound += b.isBound(v);
      total++;
    }
  }
  return {violations == 0 && bound > 0 && bound < total,
          fmt("%d violations over %d vertex bindings (3 random epsilons, %d bound)", violations, total, bound)};
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"log-map planar oracle", planarLogmap},
      {"log-map sphere oracle", sphereLogmap},
      {"transfer identity and shape preservation", transfer},
      {"objective terms and gradient", objective},
      {"solver correctness", solver},
      {"end-to-end synthetic grasp", endToEnd},
      {"poor-initialization robustness", poorInitialization},
      {"joint-limit alteration", jointLimits},
      {"sequence warm start", sequence},
      {"epsilon binding rule", epsilonBinding},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
