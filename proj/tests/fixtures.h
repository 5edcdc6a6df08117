#pragma once

#include <random>
#include <string>

#include "patchgrasp/hand.h"
#include "patchgrasp/objective.h"

namespace fixtures {

using namespace patchgrasp;

inline std::string robot(const std::string& body) { return "<robot name=\"fixture\">" + body + "</robot>"; }

inline std::string boxLink(const std::string& name, const std::string& size, const std::string& xyz) {
  return "<link name=\"" + name + "\"><visual><origin xyz=\"" + xyz + "\"/><geometry><box size=\"" + size +
         "\"/></geometry></visual></link>";
}

inline std::string joint(const std::string& name, const std::string& type, const std::string& parent,
                         const std::string& child, const std::string& axis, double lower, double upper) {
  return "<joint name=\"" + name + "\" type=\"" + type + "\"><parent link=\"" + parent + "\"/><child link=\"" + child +
         "\"/><axis xyz=\"" + axis + "\"/><limit lower=\"" + std::to_string(lower) + "\" upper=\"" +
         std::to_string(upper) + "\"/></joint>";
}

// Base link plus a 0.2 box centered at (1, 0, 0) on a revolute joint about z.
inline ArticulatedHand oneJointHand(double lower = -2.0, double upper = 2.0) {
  return parseUrdf(robot(boxLink("base", "0.2 0.2 0.2", "0 0 0") + boxLink("arm", "0.2 0.2 0.2", "1 0 0") +
                         joint("hinge", "revolute", "base", "arm", "0 0 1", lower, upper)),
                   ".", {0.1});
}

// Base link plus a chain of three prismatic joints along x, y, z: points move linearly with theta.
inline ArticulatedHand sliderHand() {
  return parseUrdf(robot(boxLink("base", "0.2 0.2 0.2", "0 0 0") + boxLink("sx", "0.2 0.2 0.2", "0 0 0") +
                         boxLink("sy", "0.2 0.2 0.2", "0 0 0") + boxLink("sz", "0.2 0.2 0.2", "1 0 0") +
                         joint("x", "prismatic", "base", "sx", "1 0 0", -3, 3) +
                         joint("y", "prismatic", "sx", "sy", "0 1 0", -3, 3) +
                         joint("z", "prismatic", "sy", "sz", "0 0 1", -3, 3)),
                   ".", {0.1});
}

// Skin = the link surfaces at rest; every vertex binds to its own link at distance 0.
inline TriangleMesh restSkin(const ArticulatedHand& hand) {
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

// Targets that the skin vertices reach exactly at theta, normals anti-aligned.
inline std::vector<PairTarget> targetsAt(const ArticulatedHand& hand, const SkinBinding& binding, const VectorX& theta,
                                         const std::vector<int>& skinVertices) {
  std::vector<Isometry3> fk = hand.forwardKinematics(theta);
  std::vector<PairTarget> out;
  for (int v : skinVertices) {
    SkinSample s = skinPointAndNormal(binding, fk, v);
    out.push_back({"fixture", v, v, s.position, -s.normal});
  }
  return out;
}

// Root DOFs pinned at zero.
inline void pinRoot(PoseProblem& problem) {
  for (int k = 0; k < kRootDofs; k++) problem.setBounds(k, 0.0, 0.0);
}

} // namespace fixtures
