#include "patchgrasp/synthetic.h"

#include <fstream>
#include <numbers>
#include <sstream>

#include "patchgrasp/error.h"
#include "patchgrasp/primitives.h"

namespace patchgrasp {

namespace {

constexpr double kPi = std::numbers::pi;

// Metres.
constexpr double kFingerX = 0.060;   // proximal joint offset from the palm center
constexpr double kFingerY = 0.024;   // lateral offset of the two opposing fingers
constexpr double kJointZ = 0.015;    // palm top
constexpr double kProximal = 0.045;
constexpr double kDistal = 0.036;
constexpr double kGap = 0.003;
constexpr double kWidth = 0.024;

struct Finger {
  std::string name;
  Vector3 base;
  double yaw;
};

const Finger kFingers[3] = {{"f1", {-kFingerX, kFingerY, kJointZ}, kPi},
                            {"f2", {-kFingerX, -kFingerY, kJointZ}, kPi},
                            {"f3", {kFingerX, 0.0, kJointZ}, 0.0}};

std::string boxLink(const std::string& name, const Vector3& size, const Vector3& center) {
  std::ostringstream s;
  s.precision(17);
  s << "  <link name=\"" << name << "\">\n    <visual>\n      <origin xyz=\"" << center.x() << ' ' << center.y() << ' '
    << center.z() << "\"/>\n      <geometry><box size=\"" << size.x() << ' ' << size.y() << ' ' << size.z()
    << "\"/></geometry>\n    </visual>\n  </link>\n";
  return s.str();
}

std::string revolute(const std::string& name, const std::string& parent, const std::string& child, const Vector3& xyz,
                     double yaw, const Vector3& axis, double lower, double upper) {
  std::ostringstream s;
  s.precision(17);
  s << "  <joint name=\"" << name << "\" type=\"revolute\">\n    <parent link=\"" << parent
    << "\"/>\n    <child link=\"" << child << "\"/>\n    <origin xyz=\"" << xyz.x() << ' ' << xyz.y() << ' '
    << xyz.z() << "\" rpy=\"0 0 " << yaw << "\"/>\n    <axis xyz=\"" << axis.x() << ' ' << axis.y() << ' '
    << axis.z() << "\"/>\n    <limit lower=\"" << lower << "\" upper=\"" << upper
    << "\" effort=\"1\" velocity=\"1\"/>\n  </joint>\n";
  return s.str();
}

TriangleMesh mergeMeshes(const std::vector<TriangleMesh>& parts) {
  std::vector<Vector3> pos;
  std::vector<Face> faces;
  for (const TriangleMesh& m : parts) {
    const int offset = static_cast<int>(pos.size());
    pos.insert(pos.end(), m.positions().begin(), m.positions().end());
    for (Face f : m.faces()) faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  }
  return TriangleMesh(std::move(pos), std::move(faces));
}

int nearest(const TriangleMesh& mesh, const Vector3& q) {
  int best = -1;
  double bestD = 1e300;
  for (int v = 0; v < static_cast<int>(mesh.nVertices()); v++) {
    double d = (mesh.position(v) - q).squaredNorm();
    if (d < bestD) bestD = d, best = v;
  }
  return best;
}

// Vertices on the face with outward normal n within radius of center.
ContactPatch discPatch(const TriangleMesh& object, const std::string& label, const Vector3& center, const Vector3& n,
                       double radius) {
  std::vector<char> inside(object.nVertices(), 0);
  for (int v = 0; v < static_cast<int>(object.nVertices()); v++) {
    inside[v] = object.normal(v).dot(n) > 0.99 && (object.position(v) - center).norm() <= radius + 1e-12;
  }
  ContactPatch p;
  p.label = label;
  p.root = nearest(object, center);
  for (int v = 0; v < static_cast<int>(object.nVertices()); v++) {
    if (!inside[v]) continue;
    for (int w : object.ring(v).neighbors) {
      if (!inside[w]) {
        p.boundary.push_back(v);
        break;
      }
    }
  }
  return finalizePatch(p, object);
}

} // namespace

std::string syntheticHandUrdf() {
  std::string s = "<?xml version=\"1.0\"?>\n<robot name=\"synthetic_barrett\">\n";
  s += boxLink("palm", {0.09, 0.09, 0.03}, Vector3::Zero());
  s += "  <link name=\"f1_base\"/>\n";
  for (const Finger& f : kFingers) {
    s += boxLink(f.name + "_proximal", {kProximal, kWidth, kWidth}, {kProximal / 2, 0, 0});
    s += boxLink(f.name + "_distal", {kDistal, kWidth, kWidth}, {kDistal / 2, 0, 0});
  }
  const Vector3 bend(0, -1, 0);
  s += revolute("f1_spread", "palm", "f1_base", kFingers[0].base, kFingers[0].yaw, Vector3::UnitZ(), -0.5, 1.5);
  for (const Finger& f : kFingers) {
    const bool spread = f.name == "f1";
    s += revolute(f.name + "_proximal_joint", spread ? "f1_base" : "palm", f.name + "_proximal",
                  spread ? Vector3::Zero() : f.base, spread ? 0.0 : f.yaw, bend, 0.0, 2.44);
    s += revolute(f.name + "_distal_joint", f.name + "_proximal", f.name + "_distal", {kProximal + kGap, 0, 0}, 0.0,
                  bend, 0.0, 0.84);
  }
  s += "</robot>\n";
  return s;
}

SyntheticScene makeSyntheticGraspScene(const SyntheticOptions& options) {
  SyntheticScene out;
  out.urdf = syntheticHandUrdf();
  Scene& s = out.scene;
  s.baseDir = ".";
  s.objectFile = "object.obj";
  s.skinFile = "skin.obj";
  s.handFile = "hand.urdf";
  s.patchFile = "patches.json";
  s.primitiveSpacing = options.skinSpacing;
  s.hand = parseUrdf(out.urdf, ".", {options.skinSpacing});

  VectorX pose = VectorX::Zero(s.hand.dofCount());
  for (const Finger& f : kFingers) pose[s.hand.joints()[s.hand.jointIndex(f.name + "_proximal_joint")].dof] = kPi / 2;

  // Skin: every link surface at rest, as one mesh.
  std::vector<Isometry3> rest = s.hand.forwardKinematics(s.hand.rest());
  std::vector<TriangleMesh> parts;
  for (size_t l = 0; l < s.hand.links().size(); l++) {
    if (s.hand.links()[l].mesh.nVertices() > 0) parts.push_back(s.hand.links()[l].mesh.transformed(rest[l]));
  }
  s.skin = mergeMeshes(parts);

  s.object = makeBox(Vector3(-0.048, -0.042, 0.015), Vector3(0.048, 0.042, 0.105), options.objectSpacing);
  std::vector<Isometry3> reach = s.hand.forwardKinematics(pose);
  PatchSet patches;
  patches.meshId = "object";
  for (const Finger& f : kFingers) {
    const int distal = s.hand.linkIndex(f.name + "_distal");
    const Vector3 padLocal(kDistal / 2, 0, kWidth / 2);
    const Vector3 contact = reach[distal] * padLocal;
    const Vector3 outward = -(reach[distal].linear() * Vector3::UnitZ());
    ContactPatch patch = discPatch(s.object, f.name, contact, outward, options.patchRadius);
    patches.patches.push_back(patch);

    TransferRequest r;
    r.patch = f.name;
    r.objectRoot = patch.root;
    r.skinRoot = nearest(s.skin, rest[distal] * padLocal);
    r.objectTangent = Vector3::UnitZ();
    // The rest-frame direction that the reaching pose turns into world +z.
    r.skinTangent = rest[distal].linear() * reach[distal].linear().transpose() * Vector3::UnitZ();
    r.mirror = true;
    s.transfers.push_back(r);
  }
  s.patches = patches;

  if (options.poorInitialization) {
    s.objectPose = Isometry3::Identity();
    s.objectPose.linear() = Eigen::AngleAxisd(kPi, Vector3::UnitX()).toRotationMatrix();
    s.objectPose.translation() = Vector3(0.02, -0.01, -0.03);
    pose.head<3>() = s.objectPose.translation();
    pose.segment<3>(3) = Vector3(kPi, 0, 0);
  }
  out.reachingPose = pose;
  return out;
}

void writeSyntheticScene(const SyntheticScene& synthetic, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream urdf(dir / synthetic.scene.handFile);
  if (!urdf) throw InputError("cannot write " + (dir / synthetic.scene.handFile).string());
  urdf << synthetic.urdf;
  urdf.close();
  saveScene(synthetic.scene, dir);
}

} // namespace patchgrasp
