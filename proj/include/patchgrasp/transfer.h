#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrasp/logmap.h"
#include "patchgrasp/mesh.h"
#include "patchgrasp/patch.h"

namespace patchgrasp {

// The four user parameters of a transfer plus the search radius multiplier.
struct TransferSpec {
  int objectRoot = -1;
  int skinRoot = -1;
  Vector3 objectTangent = Vector3::Zero();
  Vector3 skinTangent = Vector3::Zero();
  double searchRadius = 1.5;
  // Compare skin (r, phi) against object (r, -phi). Charts are counterclockwise
  // about each surface's outward normal, so two surfaces pressed together see
  // each other mirrored; set this to make the transferred patch land where the
  // object contact physically touches.
  bool mirror = false;
};

// Projects the tangents into the root tangent planes and normalizes them.
// Throws InputError for bad roots or tangents along the normal.
TransferSpec makeTransferSpec(const TriangleMesh& object, const TriangleMesh& skin, int objectRoot, int skinRoot,
                              const Vector3& objectTangent, const Vector3& skinTangent, double searchRadius = 1.5,
                              bool mirror = false);
void validateTransferSpec(const TransferSpec& spec, const TriangleMesh& object, const TriangleMesh& skin);

struct CorrespondencePair {
  int objectVertex = -1;
  int skinVertex = -1; // -1 when unreachable
  double residual = 0.0;
  bool unreachable = false;
};

// pairs[0] is the root pair; the rest follow the patch IB order.
struct Correspondence {
  std::string label;
  std::vector<CorrespondencePair> pairs;

  int reachableCount() const;
};

// Nearest skin vertex in the chart plane for every IB member, restricted to
// skin vertices with r <= searchRadius * (largest object IB r). Ties go to the
// lowest skin id. Members outside the object chart, or farther from the object
// root than any valid skin vertex is from the skin root, are flagged unreachable.
Correspondence transferPatch(const ContactPatch& patch, const TransferSpec& spec, const LogmapChart& objectChart,
                             const LogmapChart& skinChart);

nlohmann::json correspondenceToJson(const Correspondence& c);
Correspondence correspondenceFromJson(const nlohmann::json& doc);

} // namespace patchgrasp
