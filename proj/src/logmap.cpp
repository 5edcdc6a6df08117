#include "patchgrasp/logmap.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <queue>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Solver = Eigen::SimplicialLDLT<SparseMatrix>;

double cotan(const Vector3& a, const Vector3& b) {
  double s = a.cross(b).norm();
  return a.dot(b) / std::max(s, 1e-300);
}

std::vector<int> connectedComponents(const TriangleMesh& mesh) {
  std::vector<int> component(mesh.nVertices(), -1);
  int next = 0;
  for (int seed = 0; seed < static_cast<int>(mesh.nVertices()); seed++) {
    if (component[seed] >= 0) continue;
    std::vector<int> stack{seed};
    component[seed] = next;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int n : mesh.ring(v).neighbors) {
        if (component[n] < 0) {
          component[n] = next;
          stack.push_back(n);
        }
      }
    }
    next++;
  }
  return component;
}

} // namespace

double wrapAngle(double angle) {
  double a = std::remainder(angle, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  return a;
}

PolarCoord LogmapChart::at(int v) const {
  if (!isValid(v)) {
    throw InputError("vertex " + std::to_string(v) + " is not valid in log map chart '" + name + "' (root " +
                     std::to_string(root) + ")");
  }
  return {r[v], phi[v]};
}

Eigen::Vector2d LogmapChart::planar(int v) const {
  PolarCoord c = at(v);
  return {c.r * std::cos(c.phi), c.r * std::sin(c.phi)};
}

PolarCoord logmapToPoint(const LogmapChart& chart, int vertex) { return chart.at(vertex); }

nlohmann::json chartToJson(const LogmapChart& chart) {
  nlohmann::json rows = nlohmann::json::array();
  for (size_t v = 0; v < chart.size(); v++) {
    rows.push_back({v, chart.r[v], chart.phi[v], static_cast<bool>(chart.valid[v])});
  }
  return {{"format", "patchgrasp.logmap"},
          {"version", 1},
          {"name", chart.name},
          {"root", chart.root},
          {"reference_direction",
           {chart.referenceDirection.x(), chart.referenceDirection.y(), chart.referenceDirection.z()}},
          {"columns", {"vertex", "r", "phi", "valid"}},
          {"rows", rows}};
}

LogmapChart chartFromJson(const nlohmann::json& doc) {
  if (doc.value("format", "") != "patchgrasp.logmap" || doc.value("version", 0) != 1) {
    throw InputError("not a version 1 log map document");
  }
  LogmapChart chart;
  chart.name = doc.value("name", "");
  chart.root = doc.at("root").get<int>();
  auto dir = doc.at("reference_direction").get<std::vector<double>>();
  if (dir.size() != 3) throw InputError("reference_direction must have 3 components");
  chart.referenceDirection = Vector3(dir[0], dir[1], dir[2]);
  for (const auto& row : doc.at("rows")) {
    size_t v = row.at(0).get<size_t>();
    if (v != chart.r.size()) throw InputError("log map rows must be in vertex order");
    chart.r.push_back(row.at(1).get<double>());
    chart.phi.push_back(row.at(2).get<double>());
    chart.valid.push_back(row.at(3).get<bool>() ? 1 : 0);
  }
  return chart;
}

void requireManifold(const TriangleMesh& mesh, const std::string& what) {
  const MeshDefects& d = mesh.defects();
  if (d.manifold()) return;
  std::string msg = what + " is not manifold: " + std::to_string(d.nonManifoldEdges.size()) +
                    " non-manifold edges, " + std::to_string(d.nonManifoldVertices.size()) +
                    " non-manifold vertices";
  if (!d.nonManifoldEdges.empty()) {
    msg += " (first edge " + std::to_string(d.nonManifoldEdges[0][0]) + "-" +
           std::to_string(d.nonManifoldEdges[0][1]) + ")";
  } else {
    msg += " (first vertex " + std::to_string(d.nonManifoldVertices[0]) + ")";
  }
  throw InputError(msg);
}

// ---------------------------------------------------------------------------
// TangentFrames

TangentFrames::TangentFrames(const TriangleMesh& mesh) : mesh_(&mesh) {
  requireManifold(mesh, "mesh");
  const int nV = static_cast<int>(mesh.nVertices());
  angleAtTail_.assign(mesh.nEdges(), 0.0);
  angleAtHead_.assign(mesh.nEdges(), 0.0);
  ringExtrinsic_.assign(nV, {});
  ringIntrinsic_.assign(nV, {});
  ringEdges_.assign(nV, {});

  auto setAngle = [&](int v, int e, double angle) {
    if (mesh.tail(mesh.edgeHalfedge(e)) == v) angleAtTail_[e] = angle;
    else angleAtHead_[e] = angle;
  };

  for (int v = 0; v < nV; v++) {
    const VertexRing& ring = mesh.ring(v);
    if (ring.faces.empty()) continue;

    // Corner angles at v, one per ring face, and the edge of each spoke.
    std::vector<double> corners;
    std::vector<int> spokeEdges;
    for (size_t k = 0; k < ring.faces.size(); k++) {
      int f = ring.faces[k];
      int h = 3 * f;
      while (mesh.tail(h) != v) h++;
      spokeEdges.push_back(mesh.edge(h));
      int corner = h % 3;
      corners.push_back(mesh.cornerAngle(f, corner));
      if (ring.boundary && k + 1 == ring.faces.size()) spokeEdges.push_back(mesh.edge(mesh.prev(h)));
    }
    double sum = 0.0;
    for (double c : corners) sum += c;
    // Boundary vertices keep their true angles; the wedge never closes there.
    const double scale = ring.boundary ? 1.0 : kTwoPi / sum;

    ringEdges_[v] = spokeEdges;
    std::vector<double>& intrinsic = ringIntrinsic_[v];
    double acc = 0.0;
    for (size_t k = 0; k < spokeEdges.size(); k++) {
      intrinsic.push_back(acc);
      setAngle(v, spokeEdges[k], acc);
      if (k < corners.size()) acc += scale * corners[k];
    }
    if (!ring.boundary) intrinsic.push_back(kTwoPi);

    // Extrinsic angles of the projected spokes in the (tangentX, tangentY) basis.
    std::vector<double>& extrinsic = ringExtrinsic_[v];
    const Vector3& n = mesh.normal(v);
    double prevAngle = 0.0;
    for (size_t k = 0; k < ring.neighbors.size(); k++) {
      Vector3 e = mesh.position(ring.neighbors[k]) - mesh.position(v);
      e -= e.dot(n) * n;
      double a = std::atan2(e.dot(mesh.tangentY(v)), e.dot(mesh.tangentX(v)));
      if (k == 0) {
        a = 0.0;
      } else {
        double step = a - prevAngle;
        while (step < 0.0) step += kTwoPi;
        while (step >= kTwoPi) step -= kTwoPi;
        a = prevAngle + step;
      }
      extrinsic.push_back(a);
      prevAngle = a;
    }
    if (!ring.boundary) extrinsic.push_back(kTwoPi);
  }
}

double TangentFrames::spokeAngle(int v, int e) const {
  return mesh_->tail(mesh_->edgeHalfedge(e)) == v ? angleAtTail_[e] : angleAtHead_[e];
}

double TangentFrames::transportAngle(int from, int to, int e) const {
  return spokeAngle(to, e) + kPi - spokeAngle(from, e);
}

double TangentFrames::intrinsicAngle(int v, const Vector3& direction) const {
  const Vector3& n = mesh_->normal(v);
  Vector3 d = direction - direction.dot(n) * n;
  if (d.norm() <= 1e-9 * direction.norm() || direction.norm() == 0.0) {
    throw InputError("direction at vertex " + std::to_string(v) + " has no component in the tangent plane");
  }
  double a = std::atan2(d.dot(mesh_->tangentY(v)), d.dot(mesh_->tangentX(v)));
  if (a < 0.0) a += kTwoPi;
  const auto& ext = ringExtrinsic_[v];
  const auto& in = ringIntrinsic_[v];
  if (ext.empty()) throw InputError("vertex " + std::to_string(v) + " has no incident faces");
  if (a >= ext.back()) {
    // Only reachable at boundary vertices: direction lies outside the wedge.
    double gapToEnd = a - ext.back();
    double gapToStart = kTwoPi - a;
    return gapToEnd <= gapToStart ? in.back() : in.front();
  }
  for (size_t k = 0; k + 1 < ext.size(); k++) {
    if (a >= ext[k] && a < ext[k + 1]) {
      double span = ext[k + 1] - ext[k];
      double s = span > 0.0 ? (a - ext[k]) / span : 0.0;
      return in[k] + s * (in[k + 1] - in[k]);
    }
  }
  return in.back();
}

Vector3 TangentFrames::extrinsicDirection(int v, double angle) const {
  const auto& ext = ringExtrinsic_[v];
  const auto& in = ringIntrinsic_[v];
  double a = angle;
  if (!mesh_->isBoundaryVertex(v)) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) a += kTwoPi;
  } else {
    a = std::clamp(a, in.front(), in.back());
  }
  double e = ext.back();
  for (size_t k = 0; k + 1 < in.size(); k++) {
    if (a >= in[k] && a <= in[k + 1]) {
      double span = in[k + 1] - in[k];
      double s = span > 0.0 ? (a - in[k]) / span : 0.0;
      e = ext[k] + s * (ext[k + 1] - ext[k]);
      break;
    }
  }
  return std::cos(e) * mesh_->tangentX(v) + std::sin(e) * mesh_->tangentY(v);
}

// ---------------------------------------------------------------------------
// LogmapSolver

struct LogmapSolver::Factorizations {
  Solver heat;       // M + t L
  Solver poisson;    // L with one vertex per component grounded
  std::vector<char> grounded;
  Solver vectorHeat; // M + t L_connection, real 2n x 2n form
  std::vector<double> cotanWeight; // per edge
};

LogmapSolver::~LogmapSolver() = default;
LogmapSolver::LogmapSolver(LogmapSolver&&) noexcept = default;
LogmapSolver& LogmapSolver::operator=(LogmapSolver&&) noexcept = default;

const TangentFrames& LogmapSolver::frames() const { return *frames_; }

LogmapSolver::LogmapSolver(const TriangleMesh& mesh, const LogmapOptions& options) : mesh_(&mesh) {
  if (!(options.tScale > 0.0)) throw InputError("t_scale must be positive");
  frames_ = std::make_unique<TangentFrames>(mesh);
  factors_ = std::make_unique<Factorizations>();
  component_ = connectedComponents(mesh);

  const int n = static_cast<int>(mesh.nVertices());
  const double h = mesh.meanEdgeLength();
  heatTime_ = options.tScale * h * h;

  // Cotan weights and lumped (barycentric) masses.
  auto& weight = factors_->cotanWeight;
  weight.assign(mesh.nEdges(), 0.0);
  std::vector<double> mass(n, 0.0);
  for (int f = 0; f < static_cast<int>(mesh.nFaces()); f++) {
    const Face& t = mesh.face(f);
    double area = mesh.faceArea(f);
    if (!(area > 0.0)) throw NumericalError("face " + std::to_string(f) + " has zero area");
    for (int k = 0; k < 3; k++) {
      mass[t[k]] += area / 3.0;
      // Angle at corner k is opposite the half-edge (k+1 -> k+2).
      const Vector3& p = mesh.position(t[k]);
      double c = cotan(mesh.position(t[(k + 1) % 3]) - p, mesh.position(t[(k + 2) % 3]) - p);
      weight[mesh.edge(3 * f + (k + 1) % 3)] += 0.5 * c;
    }
  }

  std::vector<Triplet> lap, massT;
  lap.reserve(4 * mesh.nEdges());
  for (int e = 0; e < static_cast<int>(mesh.nEdges()); e++) {
    int he = mesh.edgeHalfedge(e);
    int a = mesh.tail(he), b = mesh.head(he);
    double w = weight[e];
    lap.emplace_back(a, a, w);
    lap.emplace_back(b, b, w);
    lap.emplace_back(a, b, -w);
    lap.emplace_back(b, a, -w);
  }
  for (int v = 0; v < n; v++) massT.emplace_back(v, v, mass[v]);
  SparseMatrix L(n, n), M(n, n);
  L.setFromTriplets(lap.begin(), lap.end());
  M.setFromTriplets(massT.begin(), massT.end());

  SparseMatrix heatOp = M + heatTime_ * L;
  factors_->heat.compute(heatOp);
  if (factors_->heat.info() != Eigen::Success) throw NumericalError("heat operator factorization failed");

  // The Neumann Laplacian is singular once per connected component. Grounding
  // the lowest vertex of each component keeps the system well conditioned; the
  // additive constant is fixed per root later.
  auto& grounded = factors_->grounded;
  grounded.assign(n, 0);
  {
    std::vector<char> seen(n + 1, 0);
    for (int v = 0; v < n; v++) {
      if (mesh.isIsolated(v) || !seen[component_[v]]) grounded[v] = 1;
      if (!mesh.isIsolated(v)) seen[component_[v]] = 1;
    }
  }
  std::vector<Triplet> poissonT;
  poissonT.reserve(lap.size() + n);
  for (const Triplet& t : lap) {
    if (!grounded[t.row()] && !grounded[t.col()]) poissonT.push_back(t);
  }
  for (int v = 0; v < n; v++) {
    if (grounded[v]) poissonT.emplace_back(v, v, 1.0);
  }
  SparseMatrix poissonOp(n, n);
  poissonOp.setFromTriplets(poissonT.begin(), poissonT.end());
  factors_->poisson.compute(poissonOp);
  if (factors_->poisson.info() != Eigen::Success) throw NumericalError("Poisson operator factorization failed");

  // Connection Laplacian as a real symmetric 2n x 2n matrix. For edge (a, b)
  // the off-diagonal block of row a is -w * rot(transport b -> a).
  std::vector<Triplet> vec;
  vec.reserve(8 * mesh.nEdges() + 2 * n);
  for (int v = 0; v < n; v++) {
    vec.emplace_back(v, v, mass[v]);
    vec.emplace_back(n + v, n + v, mass[v]);
  }
  for (int e = 0; e < static_cast<int>(mesh.nEdges()); e++) {
    int he = mesh.edgeHalfedge(e);
    int a = mesh.tail(he), b = mesh.head(he);
    double w = heatTime_ * weight[e];
    for (int v : {a, b}) {
      vec.emplace_back(v, v, w);
      vec.emplace_back(n + v, n + v, w);
    }
    for (auto [row, col] : {std::pair{a, b}, std::pair{b, a}}) {
      double angle = frames_->transportAngle(col, row, e);
      double c = -w * std::cos(angle), s = -w * std::sin(angle);
      vec.emplace_back(row, col, c);
      vec.emplace_back(row, n + col, -s);
      vec.emplace_back(n + row, col, s);
      vec.emplace_back(n + row, n + col, c);
    }
  }
  SparseMatrix vectorOp(2 * n, 2 * n);
  vectorOp.setFromTriplets(vec.begin(), vec.end());
  factors_->vectorHeat.compute(vectorOp);
  if (factors_->vectorHeat.info() != Eigen::Success) {
    throw NumericalError("connection Laplacian factorization failed");
  }
}

LogmapChart LogmapSolver::compute(int root, const Vector3& referenceDirection) const {
  const TriangleMesh& mesh = *mesh_;
  const int n = static_cast<int>(mesh.nVertices());
  if (root < 0 || root >= n) throw InputError("root vertex " + std::to_string(root) + " out of range");
  if (mesh.isIsolated(root)) throw InputError("root vertex " + std::to_string(root) + " has no incident faces");
  const double refAngle = frames_->intrinsicAngle(root, referenceDirection);

  LogmapChart chart;
  chart.root = root;
  const Vector3& nr = mesh.normal(root);
  chart.referenceDirection = (referenceDirection - referenceDirection.dot(nr) * nr).normalized();
  chart.r.assign(n, 0.0);
  chart.phi.assign(n, 0.0);
  chart.valid.assign(n, 0);

  // Vector heat: transported reference direction and the radial field.
  Eigen::VectorXd horizontalRhs = Eigen::VectorXd::Zero(2 * n);
  horizontalRhs[root] = std::cos(refAngle);
  horizontalRhs[n + root] = std::sin(refAngle);
  Eigen::VectorXd horizontal = factors_->vectorHeat.solve(horizontalRhs);

  // Radial field: unit vectors pointing away from the root on its one-ring.
  // The same sources diffused as scalars give the magnitude the field would
  // have without cancellation; their ratio is near 1 except at the cut locus.
  Eigen::VectorXd radialRhs = Eigen::VectorXd::Zero(2 * n);
  Eigen::VectorXd magnitudeRhs = Eigen::VectorXd::Zero(n);
  const VertexRing& ring = mesh.ring(root);
  for (size_t k = 0; k < ring.neighbors.size(); k++) {
    int j = ring.neighbors[k];
    int e = frames_->spokeEdges(root)[k];
    double away = frames_->spokeAngle(j, e) + kPi;
    radialRhs[j] += std::cos(away);
    radialRhs[n + j] += std::sin(away);
    magnitudeRhs[j] += 1.0;
  }
  Eigen::VectorXd radial = factors_->vectorHeat.solve(radialRhs);
  Eigen::VectorXd magnitude = factors_->heat.solve(magnitudeRhs);

  // Unit field along the radial direction, integrated by a Poisson solve.
  // Faces touching the root take the exact direction away from the root.
  // Where the diffused field has cancelled (ratio below kMinCoherence) its
  // direction is roundoff, so it is scaled down instead of normalized. The
  // same floor applies to face sums, which cancel across the cut locus.
  constexpr double kMinCoherence = 1e-3;
  std::vector<Vector3> vertexDir(n, Vector3::Zero());
  for (int v = 0; v < n; v++) {
    if (mesh.isIsolated(v) || !(magnitude[v] > 0.0) || (radial[v] == 0.0 && radial[n + v] == 0.0)) continue;
    double ratio = std::hypot(radial[v], radial[n + v]) / magnitude[v];
    vertexDir[v] = std::min(ratio / kMinCoherence, 1.0) * frames_->extrinsicDirection(v, std::atan2(radial[n + v], radial[v]));
  }
  std::vector<Vector3> faceField(mesh.nFaces(), Vector3::Zero());
  for (int f = 0; f < static_cast<int>(mesh.nFaces()); f++) {
    const Face& t = mesh.face(f);
    Vector3 x;
    if (t[0] == root || t[1] == root || t[2] == root) {
      x = (mesh.position(t[0]) + mesh.position(t[1]) + mesh.position(t[2])) / 3.0 - mesh.position(root);
    } else {
      x = vertexDir[t[0]] + vertexDir[t[1]] + vertexDir[t[2]];
    }
    const Vector3 nf = mesh.faceNormal(f);
    x -= x.dot(nf) * nf;
    const double len = x.norm();
    if (t[0] == root || t[1] == root || t[2] == root) faceField[f] = x / len;
    else faceField[f] = x / std::max(len, kMinCoherence);
  }

  Eigen::VectorXd divergence = Eigen::VectorXd::Zero(n);
  for (int f = 0; f < static_cast<int>(mesh.nFaces()); f++) {
    const Face& t = mesh.face(f);
    const Vector3& X = faceField[f];
    for (int k = 0; k < 3; k++) {
      const Vector3& pi = mesh.position(t[k]);
      const Vector3& pj = mesh.position(t[(k + 1) % 3]);
      const Vector3& pk = mesh.position(t[(k + 2) % 3]);
      Vector3 e1 = pj - pi, e2 = pk - pi;
      double cotK = cotan(pi - pk, pj - pk); // opposite e1
      double cotJ = cotan(pi - pj, pk - pj); // opposite e2
      divergence[t[k]] += 0.5 * (cotK * e1.dot(X) + cotJ * e2.dot(X));
    }
  }
  for (int v = 0; v < n; v++) {
    if (factors_->grounded[v]) divergence[v] = 0.0;
  }
  Eigen::VectorXd distance = -factors_->poisson.solve(divergence);
  // Fix the additive constant on the one-ring, where edge lengths are exact
  // geodesic distances. Anchoring on the root alone biases r near the root.
  double offset = 0.0;
  for (size_t k = 0; k < ring.neighbors.size(); k++) {
    offset += distance[ring.neighbors[k]] - mesh.edgeLength(frames_->spokeEdges(root)[k]);
  }
  distance.array() -= offset / static_cast<double>(ring.neighbors.size());

  const int rootComponent = component_[root];
  for (int v = 0; v < n; v++) {
    if (component_[v] != rootComponent || mesh.isIsolated(v)) continue;
    if (v == root) {
      chart.valid[v] = 1;
      continue;
    }
    std::complex<double> H(horizontal[v], horizontal[n + v]);
    std::complex<double> R(radial[v], radial[n + v]);
    double angle = std::arg(R * std::conj(H));
    if (!std::isfinite(distance[v]) || !std::isfinite(angle) || std::abs(H) == 0.0 || std::abs(R) == 0.0) continue;
    chart.r[v] = std::max(distance[v], 0.0);
    chart.phi[v] = wrapAngle(angle);
    chart.valid[v] = 1;
  }
  return chart;
}

LogmapChart computeLogmapHeat(const TriangleMesh& mesh, int root, const Vector3& referenceDirection, double tScale) {
  LogmapSolver solver(mesh, LogmapOptions{tScale});
  return solver.compute(root, referenceDirection);
}

// ---------------------------------------------------------------------------
// Graph oracle

LogmapChart computeLogmapOracle(const TriangleMesh& mesh, int root, const Vector3& referenceDirection) {
  TangentFrames frames(mesh);
  const int n = static_cast<int>(mesh.nVertices());
  if (root < 0 || root >= n) throw InputError("root vertex " + std::to_string(root) + " out of range");
  if (mesh.isIsolated(root)) throw InputError("root vertex " + std::to_string(root) + " has no incident faces");
  const double refAngle = frames.intrinsicAngle(root, referenceDirection);

  // Graph edges: mesh edges plus, for each interior edge whose two triangles
  // unfold to a convex quad, the straight diagonal across it. Each entry
  // carries its length and the spoke angle at the source vertex.
  struct Arc {
    int to;
    double length;
    double angle;
  };
  std::vector<std::vector<Arc>> adjacency(n);
  for (int e = 0; e < static_cast<int>(mesh.nEdges()); e++) {
    int h = mesh.edgeHalfedge(e);
    int a = mesh.tail(h), b = mesh.head(h);
    adjacency[a].push_back({b, mesh.edgeLength(e), frames.spokeAngle(a, e)});
    adjacency[b].push_back({a, mesh.edgeLength(e), frames.spokeAngle(b, e)});
  }
  for (int e = 0; e < static_cast<int>(mesh.nEdges()); e++) {
    int h = mesh.edgeHalfedge(e);
    int t = mesh.twin(h);
    if (t < 0) continue;
    int a = mesh.tail(h), b = mesh.head(h);
    int c = mesh.head(mesh.next(h)), d = mesh.head(mesh.next(t));
    // Unfold: a at the origin, b on the +x axis, c above and d below.
    const Vector3 ab = mesh.position(b) - mesh.position(a);
    const double lab = ab.norm();
    auto planar = [&](int v) {
      Vector3 p = mesh.position(v) - mesh.position(a);
      double x = p.dot(ab) / lab;
      return Eigen::Vector2d(x, std::sqrt(std::max(p.squaredNorm() - x * x, 0.0)));
    };
    Eigen::Vector2d pc = planar(c), pd = planar(d);
    pd.y() = -pd.y();
    // The segment c-d must cross the open edge a-b.
    double s = pc.y() / (pc.y() - pd.y());
    double x = pc.x() + s * (pd.x() - pc.x());
    if (!(x > 0.0 && x < lab)) continue;
    const double length = (pd - pc).norm();
    // Spoke angle at c (resp. d) interpolated across its corner in the shared triangle.
    auto diagonalAngle = [&](int from, Eigen::Vector2d pf, Eigen::Vector2d pt, int face) {
      int hf = 3 * face;
      while (mesh.tail(hf) != from) hf++;
      int e0 = mesh.edge(hf), e1 = mesh.edge(mesh.prev(hf));
      int v0 = mesh.head(hf), v1 = mesh.tail(mesh.prev(hf));
      Eigen::Vector2d p0 = v0 == a ? Eigen::Vector2d::Zero() : Eigen::Vector2d(lab, 0.0);
      Eigen::Vector2d p1 = v1 == a ? Eigen::Vector2d::Zero() : Eigen::Vector2d(lab, 0.0);
      Eigen::Vector2d u0 = p0 - pf, u1 = p1 - pf, ut = pt - pf;
      double corner = std::atan2(std::abs(u0.x() * u1.y() - u0.y() * u1.x()), u0.dot(u1));
      double part = std::atan2(std::abs(u0.x() * ut.y() - u0.y() * ut.x()), u0.dot(ut));
      double a0 = frames.spokeAngle(from, e0), a1 = frames.spokeAngle(from, e1);
      return a0 + part / corner * wrapAngle(a1 - a0);
    };
    adjacency[c].push_back({d, length, diagonalAngle(c, pc, pd, h / 3)});
    adjacency[d].push_back({c, length, diagonalAngle(d, pd, pc, t / 3)});
  }

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<double> firstAngle(n, 0.0);
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[root] = 0.0;
  queue.emplace(0.0, root);
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (const Arc& arc : adjacency[v]) {
      const int w = arc.to;
      double nd = d + arc.length;
      if (nd < dist[w]) {
        dist[w] = nd;
        firstAngle[w] = v == root ? arc.angle : firstAngle[v];
        queue.emplace(nd, w);
      }
    }
  }

  LogmapChart chart;
  chart.name = "oracle";
  chart.root = root;
  const Vector3& nr = mesh.normal(root);
  chart.referenceDirection = (referenceDirection - referenceDirection.dot(nr) * nr).normalized();
  chart.r.assign(n, 0.0);
  chart.phi.assign(n, 0.0);
  chart.valid.assign(n, 0);
  for (int v = 0; v < n; v++) {
    if (!std::isfinite(dist[v])) continue;
    chart.r[v] = dist[v];
    chart.phi[v] = v == root ? 0.0 : wrapAngle(firstAngle[v] - refAngle);
    chart.valid[v] = 1;
  }
  return chart;
}

} // namespace patchgrasp
