#include "patchgrasp/transfer.h"

#include <cmath>
#include <limits>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {

Vector3 tangentAt(const TriangleMesh& mesh, int v, const Vector3& dir, const char* what) {
  if (v < 0 || v >= static_cast<int>(mesh.nVertices())) {
    throw InputError(std::string(what) + " root " + std::to_string(v) + " out of range");
  }
  if (mesh.isIsolated(v)) throw InputError(std::string(what) + " root " + std::to_string(v) + " has no faces");
  const Vector3& n = mesh.normal(v);
  Vector3 t = dir - dir.dot(n) * n;
  if (!(t.norm() > 1e-9 * dir.norm())) {
    throw InputError(std::string(what) + " tangent has no component in the tangent plane at vertex " +
                     std::to_string(v));
  }
  return t.normalized();
}

} // namespace

TransferSpec makeTransferSpec(const TriangleMesh& object, const TriangleMesh& skin, int objectRoot, int skinRoot,
                              const Vector3& objectTangent, const Vector3& skinTangent, double searchRadius,
                              bool mirror) {
  TransferSpec spec;
  spec.objectRoot = objectRoot;
  spec.skinRoot = skinRoot;
  spec.objectTangent = tangentAt(object, objectRoot, objectTangent, "object");
  spec.skinTangent = tangentAt(skin, skinRoot, skinTangent, "skin");
  spec.searchRadius = searchRadius;
  spec.mirror = mirror;
  validateTransferSpec(spec, object, skin);
  return spec;
}

void validateTransferSpec(const TransferSpec& spec, const TriangleMesh& object, const TriangleMesh& skin) {
  for (int side = 0; side < 2; side++) {
    const TriangleMesh& mesh = side ? skin : object;
    const int root = side ? spec.skinRoot : spec.objectRoot;
    const Vector3& t = side ? spec.skinTangent : spec.objectTangent;
    const char* what = side ? "skin" : "object";
    Vector3 projected = tangentAt(mesh, root, t, what);
    if (std::abs(t.norm() - 1.0) > 1e-9 || (projected - t).norm() > 1e-9) {
      throw InputError(std::string(what) + " tangent must be a unit vector in the root tangent plane");
    }
  }
  if (!(spec.searchRadius > 0.0)) throw InputError("search radius multiplier must be positive");
}

int Correspondence::reachableCount() const {
  int n = 0;
  for (const CorrespondencePair& p : pairs) n += p.unreachable ? 0 : 1;
  return n;
}

Correspondence transferPatch(const ContactPatch& patch, const TransferSpec& spec, const LogmapChart& objectChart,
                             const LogmapChart& skinChart) {
  if (objectChart.root != spec.objectRoot || skinChart.root != spec.skinRoot) {
    throw InputError("patch '" + patch.label + "': charts were not computed at the transfer roots");
  }
  if (!(spec.searchRadius > 0.0)) throw InputError("search radius multiplier must be positive");

  Correspondence out;
  out.label = patch.label;
  out.pairs.push_back({spec.objectRoot, spec.skinRoot, 0.0, false});

  double maxR = 0.0;
  for (int v : patch.interpolationBoundary) {
    if (objectChart.isValid(v)) maxR = std::max(maxR, objectChart.r[v]);
  }
  const double radius = spec.searchRadius * maxR;
  std::vector<int> candidates;
  std::vector<Eigen::Vector2d> planar;
  double skinReach = 0.0;
  for (int v = 0; v < static_cast<int>(skinChart.size()); v++) {
    if (!skinChart.isValid(v)) continue;
    skinReach = std::max(skinReach, skinChart.r[v]);
    if (skinChart.r[v] > radius) continue;
    candidates.push_back(v);
    planar.push_back(skinChart.planar(v));
  }

  for (int v : patch.interpolationBoundary) {
    CorrespondencePair pair{v, -1, 0.0, true};
    // The root is always a candidate, so reachability is judged by whether the
    // skin's geodesic disc extends as far as the object point.
    if (objectChart.isValid(v) && objectChart.r[v] <= skinReach) {
      Eigen::Vector2d q = objectChart.planar(v);
      if (spec.mirror) q.y() = -q.y();
      double best = std::numeric_limits<double>::infinity();
      // Candidates are in increasing id order, so strict < keeps the lowest id.
      for (size_t i = 0; i < candidates.size(); i++) {
        double d = (planar[i] - q).squaredNorm();
        if (d < best) {
          best = d;
          pair.skinVertex = candidates[i];
        }
      }
      if (pair.skinVertex >= 0) {
        pair.unreachable = false;
        pair.residual = std::sqrt(best);
      }
    }
    out.pairs.push_back(pair);
  }
  return out;
}

nlohmann::json correspondenceToJson(const Correspondence& c) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const CorrespondencePair& p : c.pairs) {
    pairs.push_back({{"object", p.objectVertex},
                     {"skin", p.skinVertex},
                     {"residual", p.residual},
                     {"unreachable", p.unreachable}});
  }
  return {{"label", c.label}, {"pairs", pairs}};
}

Correspondence correspondenceFromJson(const nlohmann::json& doc) {
  Correspondence c;
  try {
    c.label = doc.value("label", "");
    for (const auto& p : doc.at("pairs")) {
      c.pairs.push_back({p.at("object").get<int>(), p.at("skin").get<int>(), p.value("residual", 0.0),
                         p.value("unreachable", false)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("correspondence '" + c.label + "': " + e.what());
  }
  if (c.pairs.empty()) throw InputError("correspondence '" + c.label + "' has no root pair");
  return c;
}

} // namespace patchgrasp
