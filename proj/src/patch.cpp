#include "patchgrasp/patch.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include <Eigen/Eigenvalues>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {

std::vector<int> sortedUnique(std::span<const int> ids) {
  std::vector<int> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Orders vertices by angle about their centroid, starting at `first`.
std::vector<int> orderByAngle(std::vector<int> ids, int first, const TriangleMesh& mesh) {
  if (ids.size() < 2) return ids;
  Vector3 centroid = Vector3::Zero();
  Vector3 meanNormal = Vector3::Zero();
  for (int v : ids) {
    centroid += mesh.position(v);
    meanNormal += mesh.normal(v);
  }
  centroid /= static_cast<double>(ids.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int v : ids) {
    Vector3 d = mesh.position(v) - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Vector3 axis = eig.eigenvectors().col(0);
  if (axis.dot(meanNormal) < 0.0) axis = -axis;

  Vector3 x = mesh.position(first) - centroid;
  x -= x.dot(axis) * axis;
  if (x.norm() < 1e-300) x = eig.eigenvectors().col(2);
  x.normalize();
  const Vector3 y = axis.cross(x);

  std::vector<std::pair<double, int>> keyed;
  for (int v : ids) {
    Vector3 d = mesh.position(v) - centroid;
    double a = v == first ? 0.0 : std::atan2(d.dot(y), d.dot(x));
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    keyed.emplace_back(a, v);
  }
  std::sort(keyed.begin(), keyed.end());
  for (size_t i = 0; i < ids.size(); i++) ids[i] = keyed[i].second;
  return ids;
}

std::string patchName(const ContactPatch& p, size_t index) {
  return p.label.empty() ? "patch #" + std::to_string(index) : "patch '" + p.label + "'";
}

} // namespace

const ContactPatch* PatchSet::find(const std::string& label) const {
  for (const ContactPatch& p : patches) {
    if (p.label == label) return &p;
  }
  return nullptr;
}

std::vector<int> downsampleBoundary(std::span<const int> boundary, const TriangleMesh& mesh, int k) {
  std::vector<int> ids = sortedUnique(boundary);
  if (ids.empty()) throw InputError("cannot downsample an empty boundary");
  if (k < 1) throw InputError("downsample target must be at least 1");
  const int seed = ids.front();
  if (k >= static_cast<int>(ids.size())) return orderByAngle(ids, seed, mesh);

  // dist[i]: distance from ids[i] to the nearest chosen sample.
  std::vector<double> dist(ids.size(), std::numeric_limits<double>::infinity());
  std::vector<int> chosen;
  size_t next = 0;
  while (static_cast<int>(chosen.size()) < k) {
    chosen.push_back(ids[next]);
    const Vector3& p = mesh.position(ids[next]);
    size_t best = 0;
    double bestDist = -1.0;
    for (size_t i = 0; i < ids.size(); i++) {
      dist[i] = std::min(dist[i], (mesh.position(ids[i]) - p).norm());
      // Strict comparison: ties go to the lowest id.
      if (dist[i] > bestDist) {
        bestDist = dist[i];
        best = i;
      }
    }
    next = best;
  }
  return orderByAngle(chosen, seed, mesh);
}

void validatePatch(const ContactPatch& patch, const TriangleMesh& mesh, const IbSize& size) {
  const std::string name = patch.label.empty() ? "patch" : "patch '" + patch.label + "'";
  const int n = static_cast<int>(mesh.nVertices());
  auto checkId = [&](int v, const char* what) {
    if (v < 0 || v >= n) {
      throw InputError(name + ": " + what + " vertex " + std::to_string(v) + " out of range (mesh has " +
                       std::to_string(n) + " vertices)");
    }
  };
  checkId(patch.root, "root");
  if (patch.boundary.empty()) throw InputError(name + ": empty boundary");
  for (int v : patch.boundary) checkId(v, "boundary");
  for (int v : patch.interpolationBoundary) checkId(v, "interpolation boundary");

  std::set<int> pb(patch.boundary.begin(), patch.boundary.end());
  std::set<int> seen;
  for (int v : patch.interpolationBoundary) {
    if (!pb.count(v)) throw InputError(name + ": IB vertex " + std::to_string(v) + " is not on the boundary");
    if (!seen.insert(v).second) throw InputError(name + ": IB vertex " + std::to_string(v) + " repeated");
  }
  const int ib = static_cast<int>(patch.interpolationBoundary.size());
  const int pbSize = static_cast<int>(pb.size());
  if (pbSize < size.min) {
    if (ib != pbSize) throw InputError(name + ": boundary has fewer than " + std::to_string(size.min) +
                                       " vertices, so IB must equal it");
  } else if (ib < size.min || ib > size.max) {
    throw InputError(name + ": IB has " + std::to_string(ib) + " vertices, expected " + std::to_string(size.min) +
                     " to " + std::to_string(size.max));
  }
}

ContactPatch finalizePatch(ContactPatch patch, const TriangleMesh& mesh, const IbSize& size) {
  if (size.min < 1 || size.min > size.max) throw InputError("invalid IB size bounds");
  patch.boundary = sortedUnique(patch.boundary);
  const bool inRange = std::all_of(patch.boundary.begin(), patch.boundary.end(),
                                   [&](int v) { return v >= 0 && v < static_cast<int>(mesh.nVertices()); });
  // Out-of-range ids are left for validatePatch to report.
  if (patch.interpolationBoundary.empty() && !patch.boundary.empty() && inRange) {
    int k = std::clamp(size.target, size.min, size.max);
    patch.interpolationBoundary = downsampleBoundary(patch.boundary, mesh, k);
  }
  validatePatch(patch, mesh, size);
  return patch;
}

nlohmann::json patchesToJson(const PatchSet& set) {
  nlohmann::json patches = nlohmann::json::array();
  for (const ContactPatch& p : set.patches) {
    patches.push_back({{"label", p.label}, {"pr", p.root}, {"pb", p.boundary}, {"ib", p.interpolationBoundary}});
  }
  return {{"format", "patchgrasp.patches"}, {"version", 1}, {"mesh_id", set.meshId}, {"patches", patches}};
}

PatchSet patchesFromJson(const nlohmann::json& doc, const TriangleMesh& mesh, const IbSize& size) {
  if (doc.value("format", "patchgrasp.patches") != "patchgrasp.patches" || doc.value("version", 1) != 1) {
    throw InputError("not a version 1 patch document");
  }
  PatchSet set;
  set.meshId = doc.value("mesh_id", "");
  if (!doc.contains("patches") || !doc["patches"].is_array()) throw InputError("patch document has no 'patches' list");
  std::set<std::string> labels;
  size_t index = 0;
  for (const auto& item : doc["patches"]) {
    ContactPatch p;
    try {
      p.label = item.value("label", "");
      p.root = item.at("pr").get<int>();
      p.boundary = item.at("pb").get<std::vector<int>>();
      if (item.contains("ib")) p.interpolationBoundary = item["ib"].get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(patchName(p, index) + ": " + e.what());
    }
    if (!p.label.empty() && !labels.insert(p.label).second) throw InputError("duplicate patch label '" + p.label + "'");
    set.patches.push_back(finalizePatch(std::move(p), mesh, size));
    index++;
  }
  return set;
}

PatchSet loadPatches(const std::filesystem::path& path, const TriangleMesh& mesh, const IbSize& size) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open patch file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  try {
    return patchesFromJson(doc, mesh, size);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void savePatches(const PatchSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << patchesToJson(set).dump(2) << "\n";
}

std::vector<ContactPatch> patchesFromContactScalars(const TriangleMesh& mesh, std::span<const double> scalars,
                                                    double threshold, const IbSize& size) {
  const int n = static_cast<int>(mesh.nVertices());
  if (static_cast<int>(scalars.size()) != n) {
    throw InputError("contact scalars: expected " + std::to_string(n) + " values, got " +
                     std::to_string(scalars.size()));
  }
  std::vector<char> inside(n, 0);
  for (int v = 0; v < n; v++) inside[v] = scalars[v] > threshold && !mesh.isIsolated(v);

  std::vector<int> component(n, -1);
  std::vector<ContactPatch> patches;
  for (int seed = 0; seed < n; seed++) {
    if (!inside[seed] || component[seed] >= 0) continue;
    const int id = static_cast<int>(patches.size());
    std::vector<int> members{seed};
    component[seed] = id;
    for (size_t i = 0; i < members.size(); i++) {
      for (int w : mesh.ring(members[i]).neighbors) {
        if (inside[w] && component[w] < 0) {
          component[w] = id;
          members.push_back(w);
        }
      }
    }
    ContactPatch p;
    p.label = "contact_" + std::to_string(id);
    Vector3 centroid = Vector3::Zero();
    for (int v : members) centroid += mesh.position(v);
    centroid /= static_cast<double>(members.size());
    double best = std::numeric_limits<double>::infinity();
    for (int v : members) {
      bool border = mesh.isBoundaryVertex(v);
      for (int w : mesh.ring(v).neighbors) border = border || !inside[w];
      if (border) p.boundary.push_back(v);
      double d = (mesh.position(v) - centroid).squaredNorm();
      if (d < best || (d == best && v < p.root)) best = d, p.root = v;
    }
    // A component covering a whole closed mesh has no border; it is not a patch.
    if (p.boundary.empty()) throw InputError("contact region " + std::to_string(id) + " has no border");
    patches.push_back(finalizePatch(std::move(p), mesh, size));
  }
  return patches;
}

} // namespace patchgrasp
