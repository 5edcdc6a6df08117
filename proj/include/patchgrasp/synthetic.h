#pragma once

#include <filesystem>
#include <string>

#include "patchgrasp/scene.h"

namespace patchgrasp {

// A 13-DOF Barrett-style hand (palm, three two-link fingers, one spread joint)
// and a box whose two opposite faces carry three contact patches. The pose with
// proximal joints at pi/2 and everything else at zero presses each distal pad
// flat onto its patch, so an exactly reaching pose is known.
struct SyntheticOptions {
  // Object rotated half a turn about x and moved behind the palm.
  bool poorInitialization = false;
  double objectSpacing = 0.003;
  double skinSpacing = 0.003;
  double patchRadius = 0.009;
};

struct SyntheticScene {
  Scene scene;
  std::string urdf;
  VectorX reachingPose;
};

SyntheticScene makeSyntheticGraspScene(const SyntheticOptions& options = {});
std::string syntheticHandUrdf();

// Writes hand.urdf and the scene files into dir.
void writeSyntheticScene(const SyntheticScene& synthetic, const std::filesystem::path& dir);

} // namespace patchgrasp
