#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "patchgrasp/mesh.h"
#include "patchgrasp/spatial_index.h"

namespace patchgrasp {

using Isometry3 = Eigen::Isometry3d;
using VectorX = Eigen::VectorXd;

enum class JointType { Fixed, Revolute, Prismatic };

struct Link {
  std::string name;
  int parentJoint = -1; // -1 for the root link
  TriangleMesh mesh;    // articulated geometry in the link frame
};

struct Joint {
  std::string name;
  JointType type = JointType::Fixed;
  int parent = -1;
  int child = -1;
  Isometry3 origin = Isometry3::Identity(); // child joint frame in the parent link frame
  Vector3 axis = Vector3::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
  int dof = -1; // index into the DOF vector, -1 for fixed joints
};

// DOF layout: [root translation xyz, root rotation vector (exponential map),
// movable joints in file order].
constexpr int kRootDofs = 6;

class ArticulatedHand {
public:
  ArticulatedHand() = default;
  // Validates the tree (single root, acyclic), assigns DOFs and orders links
  // parents-first. Links and joints reference each other by index.
  ArticulatedHand(std::string name, std::vector<Link> links, std::vector<Joint> joints);

  const std::string& name() const { return name_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  int rootLink() const { return order_.empty() ? -1 : order_.front(); }
  int linkIndex(const std::string& name) const;
  int jointIndex(const std::string& name) const;

  int dofCount() const { return kRootDofs + movable_; }
  const std::vector<std::string>& dofNames() const { return dofNames_; }
  bool isAngular(int dof) const { return angular_[dof]; }
  // Root translation bounds default to +-10 hand diagonals; rotation to +-2 pi.
  const VectorX& lower() const { return lower_; }
  const VectorX& upper() const { return upper_; }
  const VectorX& rest() const { return rest_; }
  void setBounds(int dof, double lower, double upper);

  // World transform of every link.
  std::vector<Isometry3> forwardKinematics(const VectorX& theta) const;
  Eigen::AlignedBox3d restBounds() const;
  double restDiagonal() const { return restBounds().diagonal().norm(); }

private:
  std::string name_;
  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<int> order_;
  int movable_ = 0;
  std::vector<std::string> dofNames_;
  std::vector<char> angular_;
  VectorX lower_, upper_, rest_;
};

// Rotation matrix of a rotation vector.
Eigen::Matrix3d expMap(const Vector3& omega);
Isometry3 rootTransform(const VectorX& theta);
// Rotation vector with |omega| <= pi describing the same rotation as omega.
Vector3 recenterRotation(const Vector3& omega);

struct HandLoadOptions {
  // Cell size for tessellating <box>, <cylinder> and <sphere> geometry; 0 picks
  // a quarter of the smallest primitive extent.
  double primitiveSpacing = 0.0;
};

// URDF subset: links with mesh (OBJ/PLY) or primitive geometry, revolute,
// prismatic and fixed joints with origins, axes and limits.
ArticulatedHand loadHand(const std::filesystem::path& path, const HandLoadOptions& options = {});
ArticulatedHand parseUrdf(const std::string& xml, const std::filesystem::path& baseDir,
                          const HandLoadOptions& options = {});

struct SkinBinding {
  double epsilon = 0.0;
  std::vector<int> link; // -1 when unbound
  std::vector<Vector3> local;
  std::vector<Vector3> localNormal;
  std::vector<double> restDistance;

  bool isBound(int v) const { return link[v] >= 0; }
  int boundCount() const;
};

double defaultEpsilon(const ArticulatedHand& hand);

// Each skin vertex goes to the link owning its nearest articulated vertex at the
// rest pose, if that vertex lies within epsilon.
SkinBinding bindSkin(const ArticulatedHand& hand, const TriangleMesh& skin, double epsilon);

struct SkinSample {
  Vector3 position;
  Vector3 normal;
};

SkinSample skinPointAndNormal(const SkinBinding& binding, const std::vector<Isometry3>& linkTransforms, int v);
SkinSample skinPointAndNormal(const SkinBinding& binding, const ArticulatedHand& hand, const VectorX& theta, int v);

} // namespace patchgrasp
