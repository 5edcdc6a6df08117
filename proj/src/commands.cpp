#include "patchgrasp/commands.h"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "patchgrasp/error.h"
#include "patchgrasp/sequence.h"
#include "patchgrasp/service.h"
#include "patchgrasp/synthetic.h"

namespace patchgrasp {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json vec(const VectorX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::vector<Backend> parseBackends(const std::string& name) {
  if (name.empty()) return {};
  if (name == "both") return {Backend::Mma, Backend::Lbfgs};
  return {parseBackend(name)};
}

json readJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void writeDocument(const std::string& text, const std::string& path, std::ostream& out) {
  const char* end = !text.empty() && text.back() == '\n' ? "" : "\n";
  if (path.empty()) {
    out << text << end;
    return;
  }
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << text << end;
}

Vector3 centroid(const TriangleMesh& mesh) {
  Vector3 c = Vector3::Zero();
  for (const Vector3& p : mesh.positions()) c += p;
  return mesh.nVertices() ? Vector3(c / mesh.nVertices()) : c;
}

} // namespace

fs::path resolveConfigPath(const std::string& given, const std::string& defaultName) {
  const char* env = std::getenv(kConfigDirVariable);
  const fs::path dir = env && *env ? fs::path(env) : fs::path();
  if (given.empty()) {
    if (dir.empty()) {
      throw InputError(std::string("no --config given and ") + kConfigDirVariable + " is not set");
    }
    return dir / defaultName;
  }
  const fs::path p(given);
  if (fs::exists(p) || p.is_absolute() || dir.empty()) return p;
  return fs::exists(dir / p) ? dir / p : p;
}

SolveOutcome solveScene(const Scene& scene, const SolveRequest& request) {
  std::vector<Backend> backends = request.backends;
  if (backends.empty()) backends = {scene.optimizer.solver.backend};
  const int maxCalls = request.maxCalls.value_or(scene.optimizer.maxCalls);
  if (maxCalls < 1) throw InputError("max calls must be at least 1");

  TransferOutcome t;
  if (request.correspondences) {
    t.correspondences = *request.correspondences;
  } else {
    t = runTransfers(scene);
  }
  std::unique_ptr<PreparedScene> prepared = prepareScene(scene, t.correspondences);

  SolveOutcome outcome;
  outcome.converged = true;
  json results = json::array();
  for (Backend b : backends) {
    const auto t0 = Clock::now();
    SolveSession session = prepared->makeSession(b);
    runToAcceptance(session, maxCalls, request.valueThreshold, prepared->distanceThreshold());
    const double seconds = secondsSince(t0);
    const TermBreakdown terms = session.problem().terms(session.theta());
    const bool failed = !session.history().back().error.empty();
    const bool converged =
        !failed && session.bestValue() <= request.valueThreshold && terms.meanPairDistance <= prepared->distanceThreshold();
    outcome.converged = outcome.converged && converged;
    results.push_back({{"backend", backendName(b)},
                       {"converged", converged},
                       {"calls", session.calls()},
                       {"theta", vec(session.theta())},
                       {"value", session.bestValue()},
                       {"terms",
                        {{"distance", terms.distance},
                         {"normal", terms.normal},
                         {"prior", terms.prior},
                         {"total", terms.total}}},
                       {"mean_pair_distance", terms.meanPairDistance},
                       {"seconds", seconds},
                       {"history", historyToJson(session)}});
  }
  outcome.document = {{"format", "patchgrasp.solve_result"},
                      {"version", 1},
                      {"seed", scene.seed},
                      {"dof_names", scene.hand.dofNames()},
                      {"distance_threshold", prepared->distanceThreshold()},
                      {"value_threshold", std::isfinite(request.valueThreshold) ? json(request.valueThreshold) : json()},
                      {"pairs", prepared->makeProblem().pairs().size()},
                      {"times", {{"charts", t.times.charts}, {"transfer", t.times.transfer}}},
                      {"results", results}};
  return outcome;
}

Isometry3 benchPlacement(const Scene& scene, uint64_t seed, int index) {
  if (index == 0) return scene.objectPose;
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Vector3 axis = Vector3(normal(rng), normal(rng), normal(rng)).normalized();
  const double angle = 0.15 * unit(rng);
  const Vector3 shift = 0.05 * scene.objectDiagonal() * Vector3(unit(rng), unit(rng), unit(rng)) / std::sqrt(3.0);
  const Vector3 c = scene.objectPose * centroid(scene.object);
  Isometry3 perturb = Isometry3::Identity();
  perturb.translate(c + shift);
  perturb.rotate(Eigen::AngleAxisd(angle, axis));
  perturb.translate(-c);
  return perturb * scene.objectPose;
}

std::vector<BenchRow> runBench(const std::vector<fs::path>& scenes, const BenchOptions& options) {
  if (options.repetitions < 1) throw InputError("bench: repetitions must be at least 1");
  if (options.placements < 1) throw InputError("bench: placements must be at least 1");
  std::vector<BenchRow> rows;
  for (const fs::path& path : scenes) {
    Scene scene = loadScene(path);
    if (options.seed) scene.seed = *options.seed;
    const std::vector<Backend> backends =
        options.backends.empty() ? std::vector<Backend>{scene.optimizer.solver.backend} : options.backends;
    for (Backend b : backends) {
      for (int rep = 0; rep < options.repetitions; rep++) {
        BenchRow row;
        row.scene = path.string();
        row.backend = backendName(b);
        row.repetition = rep;
        row.seed = scene.seed;
        row.patches = static_cast<int>(scene.transfers.size());
        row.dofs = scene.hand.dofCount();
        row.placements = options.placements;
        for (int p = 0; p < options.placements; p++) {
          Scene placed = scene;
          placed.objectPose = benchPlacement(scene, scene.seed, p);
          SolveRequest req;
          req.backends = {b};
          const SolveOutcome o = solveScene(placed, req);
          const json& r = o.document["results"][0];
          row.chartSeconds += o.document["times"]["charts"].get<double>();
          row.transferSeconds += o.document["times"]["transfer"].get<double>();
          row.solveSeconds += r["seconds"].get<double>();
          row.calls += r["calls"].get<int>();
          row.value += r["value"].get<double>();
          row.meanPairDistance += r["mean_pair_distance"].get<double>();
          row.converged += r["converged"].get<bool>() ? 1 : 0;
        }
        const double n = options.placements;
        row.chartSeconds /= n;
        row.transferSeconds /= n;
        row.solveSeconds /= n;
        row.calls /= n;
        row.value /= n;
        row.meanPairDistance /= n;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::string benchCsv(const std::vector<BenchRow>& rows) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "scene,backend,repetition,seed,patches,dofs,placements,converged,chart_s,transfer_s,solve_s,calls,value,"
       "mean_pair_distance\n";
  for (const BenchRow& r : rows) {
    s << r.scene << ',' << r.backend << ',' << r.repetition << ',' << r.seed << ',' << r.patches << ',' << r.dofs << ','
      << r.placements << ',' << r.converged << ',' << r.chartSeconds << ',' << r.transferSeconds << ','
      << r.solveSeconds << ',' << r.calls << ',' << r.value << ',' << r.meanPairDistance << '\n';
  }
  return s.str();
}

std::string benchTable(const std::vector<BenchRow>& rows) {
  struct Acc {
    BenchRow sum;
    int n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const BenchRow& r : rows) {
    auto key = std::make_pair(r.scene, r.backend);
    if (!groups.count(key)) order.push_back(key);
    Acc& a = groups[key];
    if (a.n == 0) a.sum = r;
    else {
      a.sum.chartSeconds += r.chartSeconds;
      a.sum.transferSeconds += r.transferSeconds;
      a.sum.solveSeconds += r.solveSeconds;
      a.sum.calls += r.calls;
      a.sum.value += r.value;
      a.sum.converged += r.converged;
    }
    a.n++;
  }
  std::ostringstream s;
  s << std::left << std::setw(32) << "scene" << std::setw(8) << "backend" << std::right << std::setw(8) << "patches"
    << std::setw(6) << "DOF" << std::setw(11) << "charts s" << std::setw(11) << "transfer s" << std::setw(10)
    << "solve s" << std::setw(7) << "calls" << std::setw(13) << "value" << std::setw(11) << "converged" << "\n";
  for (const auto& key : order) {
    const Acc& a = groups[key];
    const BenchRow& r = a.sum;
    std::ostringstream conv;
    conv << r.converged << "/" << a.n * r.placements;
    s << std::left << std::setw(32) << r.scene << std::setw(8) << r.backend << std::right << std::setw(8) << r.patches
      << std::setw(6) << r.dofs << std::fixed << std::setprecision(3) << std::setw(11) << r.chartSeconds / a.n
      << std::setw(11) << r.transferSeconds / a.n << std::setw(10) << r.solveSeconds / a.n << std::setprecision(2)
      << std::setw(7) << r.calls / a.n << std::scientific << std::setprecision(3) << std::setw(13) << r.value / a.n
      << std::setw(11) << conv.str() << std::defaultfloat << "\n";
  }
  return s.str();
}

int runCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contact patch transfer and grasp synthesis"};
  app.require_subcommand(1);

  std::string config, backend, outPath, correspondencePath, resultPath, csvPath, host = "127.0.0.1";
  std::optional<uint64_t> seed;
  std::optional<int> maxCalls;
  std::optional<double> threshold;
  int repetitions = 3, port = 8765;
  bool poor = false;
  std::vector<std::string> scenes;

  auto common = [&](CLI::App* c, const char* configHelp) {
    c->add_option("--config", config, configHelp);
    c->add_option("--seed", seed, "Override the scene seed");
    c->add_option("--backend", backend, "mma, lbfgs or both")->check(CLI::IsMember({"mma", "lbfgs", "both"}));
  };

  CLI::App* transfer = app.add_subcommand("transfer", "Transfer the scene's patches and write correspondences");
  common(transfer, "Scene file (default $PATCHGRASP_CONFIG_DIR/scene.json)");
  transfer->add_option("-o,--out", outPath, "Correspondence file (default stdout)");

  CLI::App* solve = app.add_subcommand("solve", "Transfer and solve the scene");
  common(solve, "Scene file (default $PATCHGRASP_CONFIG_DIR/scene.json)");
  solve->add_option("--correspondences", correspondencePath, "Use these correspondences instead of transferring");
  solve->add_option("--max-calls", maxCalls, "Solve calls per backend");
  solve->add_option("--threshold", threshold, "Objective value a solution must reach");
  solve->add_option("-o,--out", outPath, "Result file (default stdout)");

  CLI::App* animate = app.add_subcommand("animate", "Solve a manipulation track");
  common(animate, "Track file (default $PATCHGRASP_CONFIG_DIR/track.json)");
  animate->add_option("-o,--out", outPath, "Animation file (default stdout)");
  animate->add_option("--result", resultPath, "Per-frame solve results");

  CLI::App* bench = app.add_subcommand("bench", "Time transfer and solve over scenes and placements");
  common(bench, "Scene file, may repeat (default $PATCHGRASP_CONFIG_DIR/scene.json)");
  bench->add_option("scenes", scenes, "More scene files");
  bench->add_option("--repetitions", repetitions, "Repetitions per scene")->check(CLI::PositiveNumber);
  bench->add_option("--csv", csvPath, "Also write rows as CSV");

  CLI::App* serve = app.add_subcommand("serve", "Serve an interactive session over HTTP");
  common(serve, "Scene file (default $PATCHGRASP_CONFIG_DIR/scene.json)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port, 0 for any free port")->check(CLI::Range(0, 65535));

  CLI::App* demo = app.add_subcommand("demo", "Write the synthetic grasp scene and a track");
  demo->add_option("dir", outPath, "Output directory")->required();
  demo->add_flag("--poor", poor, "Start with the object behind the palm");

  std::vector<std::string> argv{"patchgrasp"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<char*> cargs;
  for (std::string& a : argv) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  auto loadWithSeed = [&](const fs::path& path) {
    Scene s = loadScene(path);
    if (seed) s.seed = *seed;
    return s;
  };

  try {
    if (*transfer) {
      const fs::path path = resolveConfigPath(config, "scene.json");
      const Scene scene = loadWithSeed(path);
      if (!backend.empty()) parseBackends(backend);
      const TransferOutcome t = runTransfers(scene);
      json doc = correspondencesToJson(t.correspondences);
      doc["times"] = {{"charts", t.times.charts}, {"transfer", t.times.transfer}};
      writeDocument(doc.dump(2), outPath, out);
      int unreachable = 0;
      for (const Correspondence& c : t.correspondences) unreachable += int(c.pairs.size()) - c.reachableCount();
      err << "transferred " << t.correspondences.size() << " patches, " << unreachable << " unreachable pairs\n";
      return kExitOk;
    }
    if (*solve) {
      const fs::path path = resolveConfigPath(config, "scene.json");
      SolveRequest req;
      req.backends = parseBackends(backend);
      req.maxCalls = maxCalls;
      if (threshold) req.valueThreshold = *threshold;
      if (!correspondencePath.empty()) req.correspondences = correspondencesFromJson(readJson(correspondencePath));
      const Scene scene = loadWithSeed(path);
      SolveOutcome o = solveScene(scene, req);
      o.document["scene"] = path.string();
      writeDocument(o.document.dump(2), outPath, out);
      for (const json& r : o.document["results"]) {
        err << r["backend"].get<std::string>() << ": " << r["calls"] << " calls, value " << r["value"]
            << ", mean pair distance " << r["mean_pair_distance"] << (r["converged"].get<bool>() ? "" : " (not converged)")
            << "\n";
      }
      return o.converged ? kExitOk : kExitNotConverged;
    }
    if (*animate) {
      const fs::path path = resolveConfigPath(config, "track.json");
      const TrackConfig tc = loadTrackConfig(path);
      Scene scene = loadWithSeed(tc.scenePath);
      TrackOptions options;
      const std::vector<Backend> b = parseBackends(backend);
      if (b.size() > 1) throw InputError("animate takes one backend");
      options.backend = b.empty() ? scene.optimizer.solver.backend : b.front();
      options.frameIterations = tc.frameIterations;
      const TransferOutcome t = runTransfers(scene);
      std::unique_ptr<PreparedScene> prepared = prepareScene(std::move(scene), t.correspondences);
      ManipulationTrack track = buildTrack(tc, *prepared);
      solveTrack(track, *prepared, options);
      writeDocument(animationToJson(track, prepared->scene.hand).dump(2), outPath, out);
      if (!resultPath.empty()) writeDocument(trackResultToJson(track, prepared->scene.hand).dump(2), resultPath, out);
      int bad = 0, iterations = 0;
      for (const FrameResult& r : track.results) {
        iterations += r.iterations;
        if (!r.ok || r.meanPairDistance > prepared->distanceThreshold()) bad++;
      }
      err << track.frameCount() << " frames, " << iterations << " iterations, " << bad << " frames not converged\n";
      return bad == 0 ? kExitOk : kExitNotConverged;
    }
    if (*bench) {
      std::vector<fs::path> list;
      // No scene at all is an empty report.
      const char* env = std::getenv(kConfigDirVariable);
      if (!config.empty() || (scenes.empty() && env && *env)) list.push_back(resolveConfigPath(config, "scene.json"));
      for (const std::string& s : scenes) list.push_back(resolveConfigPath(s, s));
      BenchOptions options;
      options.repetitions = repetitions;
      options.backends = parseBackends(backend);
      options.seed = seed;
      const std::vector<BenchRow> rows = runBench(list, options);
      out << benchTable(rows);
      if (!csvPath.empty()) writeDocument(benchCsv(rows), csvPath, out);
      return kExitOk;
    }
    if (*serve) {
      const fs::path path = resolveConfigPath(config, "scene.json");
      Scene scene = loadWithSeed(path);
      const std::vector<Backend> b = parseBackends(backend);
      if (b.size() > 1) throw InputError("serve takes one backend");
      if (!b.empty()) scene.optimizer.solver.backend = b.front();
      Service service(std::move(scene));
      ServiceServer server(service);
      const int bound = server.bind(host, port);
      if (bound < 0) throw InputError("cannot bind " + host + ":" + std::to_string(port));
      out << "listening on http://" << host << ":" << bound << "/api" << std::endl;
      server.listen();
      return kExitOk;
    }
    if (*demo) {
      SyntheticOptions so;
      so.poorInitialization = poor;
      const SyntheticScene synthetic = makeSyntheticGraspScene(so);
      writeSyntheticScene(synthetic, outPath);
      Isometry3 step = Isometry3::Identity();
      step.translation() = Vector3(0.002, 0.0, 0.0);
      const json track = {{"format", "patchgrasp.track"},
                          {"version", 1},
                          {"scene", "scene.json"},
                          {"frames", 10},
                          {"object_step", poseToJson(step)}};
      writeDocument(track.dump(2), (fs::path(outPath) / "track.json").string(), out);
      out << "wrote " << outPath << "/scene.json and " << outPath << "/track.json\n";
      return kExitOk;
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNotConverged;
  }
  return kExitInputError;
}

} // namespace patchgrasp
