#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchgrasp/mesh.h"

namespace patchgrasp {

// A contact region on one mesh: root PR, boundary PB and the downsampled
// interpolation boundary IB that is actually transferred.
struct ContactPatch {
  std::string label;
  int root = -1;
  std::vector<int> boundary;
  std::vector<int> interpolationBoundary;

  bool operator==(const ContactPatch&) const = default;
};

struct IbSize {
  int min = 20;
  int max = 30;
  int target = 25;
};

struct PatchSet {
  std::string meshId;
  std::vector<ContactPatch> patches;

  const ContactPatch* find(const std::string& label) const;
};

// Farthest-point sampling in Euclidean distance seeded at the lowest boundary
// id, returned ordered by angle about the boundary centroid (counterclockwise
// about the mean vertex normal, starting from the seed). k >= |boundary|
// returns the whole boundary in that order. Duplicates are ignored.
std::vector<int> downsampleBoundary(std::span<const int> boundary, const TriangleMesh& mesh, int k);

// Checks ids, IB membership and the IB size rule. Throws InputError naming the patch.
void validatePatch(const ContactPatch& patch, const TriangleMesh& mesh, const IbSize& size = {});

// Fills in a missing IB and validates. Boundaries are deduplicated and sorted.
ContactPatch finalizePatch(ContactPatch patch, const TriangleMesh& mesh, const IbSize& size = {});

nlohmann::json patchesToJson(const PatchSet& set);
PatchSet patchesFromJson(const nlohmann::json& doc, const TriangleMesh& mesh, const IbSize& size = {});
PatchSet loadPatches(const std::filesystem::path& path, const TriangleMesh& mesh, const IbSize& size = {});
void savePatches(const PatchSet& set, const std::filesystem::path& path);

// ContactDB-style import: vertices with scalar > threshold are grouped into
// connected components; each component becomes a patch whose PB is the
// component's border and whose PR is the component vertex nearest its
// centroid (a convention, the source data carries no root). Patches are
// labelled contact_0, contact_1, ... in order of their lowest vertex id.
std::vector<ContactPatch> patchesFromContactScalars(const TriangleMesh& mesh, std::span<const double> scalars,
                                                    double threshold = 0.5, const IbSize& size = {});

} // namespace patchgrasp
