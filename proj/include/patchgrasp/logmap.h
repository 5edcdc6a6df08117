#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "patchgrasp/mesh.h"

namespace patchgrasp {

struct PolarCoord {
  double r = 0.0;
  double phi = 0.0;
};

// Discrete logarithmic map about a root vertex. phi is measured from the
// reference direction, counterclockwise about the vertex normal, in (-pi, pi].
// The root itself is stored as (0, 0); its angle carries no information.
struct LogmapChart {
  std::string name;
  int root = -1;
  Vector3 referenceDirection = Vector3::Zero();
  std::vector<double> r;
  std::vector<double> phi;
  std::vector<char> valid;

  size_t size() const { return r.size(); }
  bool isValid(int v) const { return v >= 0 && v < static_cast<int>(r.size()) && valid[v]; }
  // Throws InputError for invalid vertices.
  PolarCoord at(int v) const;
  // Chart-plane Cartesian coordinates r * (cos phi, sin phi).
  Eigen::Vector2d planar(int v) const;
};

PolarCoord logmapToPoint(const LogmapChart& chart, int vertex);

nlohmann::json chartToJson(const LogmapChart& chart);
LogmapChart chartFromJson(const nlohmann::json& doc);

struct LogmapOptions {
  // Heat time is tScale * (mean edge length)^2.
  double tScale = 1.0;
};

// Intrinsic tangent-space bookkeeping shared by both backends: every outgoing
// spoke of a vertex gets an angle from the vertex's first spoke, built from
// corner angles rescaled to sum to 2 pi at interior vertices.
class TangentFrames {
public:
  explicit TangentFrames(const TriangleMesh& mesh);

  // Angle of the spoke from v along edge e, in v's intrinsic frame.
  double spokeAngle(int v, int e) const;
  // Converts a 3D direction at v (projected to the tangent plane) to an
  // intrinsic angle by interpolating within the wedge it falls into.
  double intrinsicAngle(int v, const Vector3& direction) const;
  // Inverse of intrinsicAngle: unit 3D tangent direction for an intrinsic angle.
  Vector3 extrinsicDirection(int v, double angle) const;
  // Rotation (as an angle) taking tangent vectors at the tail of edge e, in the
  // tail frame, to the head frame by parallel transport along the edge.
  double transportAngle(int from, int to, int e) const;

  // Edges of the spokes of v, parallel to mesh.ring(v).neighbors.
  const std::vector<int>& spokeEdges(int v) const { return ringEdges_[v]; }

  const TriangleMesh& mesh() const { return *mesh_; }

private:
  const TriangleMesh* mesh_;
  std::vector<std::vector<int>> ringEdges_;
  // Per edge: spoke angle at the tail / head of edgeHalfedge(e).
  std::vector<double> angleAtTail_;
  std::vector<double> angleAtHead_;
  // Per vertex: extrinsic and intrinsic spoke angles in ring order (unwrapped).
  std::vector<std::vector<double>> ringExtrinsic_;
  std::vector<std::vector<double>> ringIntrinsic_;
};

// Heat-method log maps. Factorizes the scalar heat, connection heat and Poisson
// operators once; compute() is then two vector and two scalar back-substitutions
// per root and may be called concurrently.
// The mesh must outlive the solver.
class LogmapSolver {
public:
  explicit LogmapSolver(const TriangleMesh& mesh, const LogmapOptions& options = {});
  ~LogmapSolver();
  LogmapSolver(LogmapSolver&&) noexcept;
  LogmapSolver& operator=(LogmapSolver&&) noexcept;

  LogmapChart compute(int root, const Vector3& referenceDirection) const;

  const TriangleMesh& mesh() const { return *mesh_; }
  const TangentFrames& frames() const;
  double heatTime() const { return heatTime_; }

private:
  struct Factorizations;
  const TriangleMesh* mesh_;
  double heatTime_ = 0.0;
  std::unique_ptr<TangentFrames> frames_;
  std::unique_ptr<Factorizations> factors_;
  std::vector<int> component_;
};

LogmapChart computeLogmapHeat(const TriangleMesh& mesh, int root, const Vector3& referenceDirection,
                              double tScale = 1.0);

// Slow reference backend: r is the shortest-path distance in the edge graph,
// phi is the intrinsic angle of the first edge on that path.
LogmapChart computeLogmapOracle(const TriangleMesh& mesh, int root, const Vector3& referenceDirection);

// Throws InputError describing the defects if the mesh cannot carry log maps.
void requireManifold(const TriangleMesh& mesh, const std::string& what);

double wrapAngle(double angle);

} // namespace patchgrasp
