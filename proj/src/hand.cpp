#include "patchgrasp/hand.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "patchgrasp/error.h"
#include "patchgrasp/primitives.h"

namespace patchgrasp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Isometry3 jointMotion(const Joint& j, double q) {
  Isometry3 m = Isometry3::Identity();
  if (j.type == JointType::Revolute) m.linear() = Eigen::AngleAxisd(q, j.axis).toRotationMatrix();
  if (j.type == JointType::Prismatic) m.translation() = q * j.axis;
  return m;
}

} // namespace

ArticulatedHand::ArticulatedHand(std::string name, std::vector<Link> links, std::vector<Joint> joints)
    : name_(std::move(name)), links_(std::move(links)), joints_(std::move(joints)) {
  const int nl = static_cast<int>(links_.size());
  if (nl == 0) throw InputError("hand '" + name_ + "' has no links");
  for (Link& l : links_) l.parentJoint = -1;
  std::vector<std::vector<int>> childJoints(nl);
  for (int j = 0; j < static_cast<int>(joints_.size()); j++) {
    Joint& jt = joints_[j];
    if (jt.parent < 0 || jt.parent >= nl || jt.child < 0 || jt.child >= nl) {
      throw InputError("joint '" + jt.name + "' references a missing link");
    }
    if (links_[jt.child].parentJoint >= 0) {
      throw InputError("link '" + links_[jt.child].name + "' has two parent joints");
    }
    links_[jt.child].parentJoint = j;
    childJoints[jt.parent].push_back(j);
    if (jt.type != JointType::Fixed) {
      if (!(jt.axis.norm() > 1e-12)) throw InputError("joint '" + jt.name + "' has a zero axis");
      jt.axis.normalize();
      if (!(jt.lower <= jt.upper)) throw InputError("joint '" + jt.name + "' has lower limit above upper limit");
    }
  }
  int root = -1;
  for (int l = 0; l < nl; l++) {
    if (links_[l].parentJoint >= 0) continue;
    if (root >= 0) throw InputError("hand has more than one root link ('" + links_[root].name + "', '" +
                                    links_[l].name + "')");
    root = l;
  }
  if (root < 0) throw InputError("kinematic tree is cyclic: every link has a parent");
  order_ = {root};
  for (size_t i = 0; i < order_.size(); i++) {
    for (int j : childJoints[order_[i]]) order_.push_back(joints_[j].child);
  }
  if (static_cast<int>(order_.size()) != nl) throw InputError("kinematic tree is cyclic");

  dofNames_ = {"root_x", "root_y", "root_z", "root_wx", "root_wy", "root_wz"};
  angular_ = {0, 0, 0, 1, 1, 1};
  std::vector<double> lo, hi;
  for (Joint& jt : joints_) {
    if (jt.type == JointType::Fixed) continue;
    jt.dof = kRootDofs + movable_++;
    dofNames_.push_back(jt.name);
    angular_.push_back(jt.type == JointType::Revolute);
    lo.push_back(jt.lower);
    hi.push_back(jt.upper);
  }
  const int n = dofCount();
  lower_.resize(n);
  upper_.resize(n);
  double diag = restDiagonal();
  if (!(diag > 0.0) || !std::isfinite(diag)) diag = 1.0;
  for (int k = 0; k < 3; k++) {
    lower_[k] = -10.0 * diag;
    upper_[k] = 10.0 * diag;
    lower_[3 + k] = -kTwoPi;
    upper_[3 + k] = kTwoPi;
  }
  for (int k = 0; k < movable_; k++) {
    lower_[kRootDofs + k] = lo[k];
    upper_[kRootDofs + k] = hi[k];
  }
  rest_ = VectorX::Zero(n).cwiseMax(lower_).cwiseMin(upper_);
}

int ArticulatedHand::linkIndex(const std::string& name) const {
  for (int l = 0; l < static_cast<int>(links_.size()); l++) {
    if (links_[l].name == name) return l;
  }
  return -1;
}

int ArticulatedHand::jointIndex(const std::string& name) const {
  for (int j = 0; j < static_cast<int>(joints_.size()); j++) {
    if (joints_[j].name == name) return j;
  }
  return -1;
}

void ArticulatedHand::setBounds(int dof, double lower, double upper) {
  if (dof < 0 || dof >= dofCount()) throw InputError("DOF index " + std::to_string(dof) + " out of range");
  if (!(lower <= upper)) throw InputError("bounds for '" + dofNames_[dof] + "' are not ordered");
  lower_[dof] = lower;
  upper_[dof] = upper;
  rest_[dof] = std::clamp(rest_[dof], lower, upper);
}

std::vector<Isometry3> ArticulatedHand::forwardKinematics(const VectorX& theta) const {
  if (theta.size() != dofCount()) {
    throw InputError("pose has " + std::to_string(theta.size()) + " values, hand has " +
                     std::to_string(dofCount()) + " DOFs");
  }
  std::vector<Isometry3> out(links_.size());
  for (int l : order_) {
    const int j = links_[l].parentJoint;
    if (j < 0) {
      out[l] = rootTransform(theta);
      continue;
    }
    const Joint& jt = joints_[j];
    out[l] = out[jt.parent] * jt.origin * jointMotion(jt, jt.dof >= 0 ? theta[jt.dof] : 0.0);
  }
  return out;
}

Eigen::AlignedBox3d ArticulatedHand::restBounds() const {
  VectorX theta = rest_.size() == dofCount() ? rest_ : VectorX::Zero(dofCount());
  std::vector<Isometry3> fk = forwardKinematics(theta);
  Eigen::AlignedBox3d box;
  for (size_t l = 0; l < links_.size(); l++) {
    for (const Vector3& p : links_[l].mesh.positions()) box.extend(fk[l] * p);
  }
  if (box.isEmpty()) {
    for (const Isometry3& t : fk) box.extend(t.translation());
  }
  return box;
}

Eigen::Matrix3d expMap(const Vector3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Eigen::Matrix3d k;
    k << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
    return Eigen::Matrix3d::Identity() + k;
  }
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Isometry3 rootTransform(const VectorX& theta) {
  Isometry3 t = Isometry3::Identity();
  t.linear() = expMap(theta.segment<3>(3));
  t.translation() = theta.head<3>();
  return t;
}

Vector3 recenterRotation(const Vector3& omega) {
  Vector3 w = omega;
  double n = w.norm();
  while (n > std::numbers::pi) {
    w *= 1.0 - kTwoPi / n;
    n = w.norm();
  }
  return w;
}

// URDF

namespace {

using boost::property_tree::ptree;

std::vector<double> parseNumbers(const std::string& text, size_t count, const std::string& what) {
  std::istringstream in(text);
  std::vector<double> out;
  double x;
  while (in >> x) out.push_back(x);
  if (out.size() != count || !in.eof()) {
    throw InputError(what + ": expected " + std::to_string(count) + " numbers, got '" + text + "'");
  }
  return out;
}

std::string attr(const ptree& node, const std::string& key, const std::string& what) {
  auto v = node.get_optional<std::string>("<xmlattr>." + key);
  if (!v) throw InputError(what + ": missing attribute '" + key + "'");
  return *v;
}

Isometry3 parseOrigin(const ptree& parent, const std::string& what) {
  Isometry3 t = Isometry3::Identity();
  auto origin = parent.get_child_optional("origin");
  if (!origin) return t;
  auto xyz = parseNumbers(origin->get("<xmlattr>.xyz", "0 0 0"), 3, what + " origin xyz");
  auto rpy = parseNumbers(origin->get("<xmlattr>.rpy", "0 0 0"), 3, what + " origin rpy");
  t.translation() = Vector3(xyz[0], xyz[1], xyz[2]);
  t.linear() = (Eigen::AngleAxisd(rpy[2], Vector3::UnitZ()) * Eigen::AngleAxisd(rpy[1], Vector3::UnitY()) *
                Eigen::AngleAxisd(rpy[0], Vector3::UnitX()))
                   .toRotationMatrix();
  return t;
}

double autoSpacing(double smallestExtent, const HandLoadOptions& options) {
  return options.primitiveSpacing > 0.0 ? options.primitiveSpacing : smallestExtent / 4.0;
}

TriangleMesh parseGeometry(const ptree& geometry, const std::filesystem::path& baseDir, const HandLoadOptions& options,
                           const std::string& what) {
  for (const auto& [tag, node] : geometry) {
    if (tag == "box") {
      auto s = parseNumbers(attr(node, "size", what), 3, what + " box size");
      Vector3 half(s[0] / 2, s[1] / 2, s[2] / 2);
      return makeBox(-half, half, autoSpacing(std::min({s[0], s[1], s[2]}), options));
    }
    if (tag == "cylinder") {
      double r = std::stod(attr(node, "radius", what));
      double len = std::stod(attr(node, "length", what));
      double h = autoSpacing(std::min(2 * r, len), options);
      int segments = std::max(8, static_cast<int>(std::ceil(kTwoPi * r / h)));
      int rings = std::max(1, static_cast<int>(std::ceil(len / h)));
      return makeCylinder(r, -len / 2, len / 2, segments, rings);
    }
    if (tag == "sphere") {
      double r = std::stod(attr(node, "radius", what));
      double h = autoSpacing(2 * r, options);
      int k = std::clamp(static_cast<int>(std::ceil(std::log2(1.05 * r / h))), 0, 5);
      return makeIcosphere(k, r);
    }
    if (tag == "mesh") {
      std::string file = attr(node, "filename", what);
      for (const char* prefix : {"package://", "file://"}) {
        if (file.rfind(prefix, 0) == 0) file = file.substr(std::string(prefix).size());
      }
      std::filesystem::path path = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : baseDir / file;
      if (!std::filesystem::exists(path)) throw InputError(what + ": mesh file not found: " + path.string());
      TriangleMesh mesh = loadMesh(path);
      if (auto scale = node.get_optional<std::string>("<xmlattr>.scale")) {
        auto s = parseNumbers(*scale, 3, what + " mesh scale");
        std::vector<Vector3> pos = mesh.positions();
        for (Vector3& p : pos) p = p.cwiseProduct(Vector3(s[0], s[1], s[2]));
        mesh = TriangleMesh(std::move(pos), mesh.faces());
      }
      return mesh;
    }
  }
  throw InputError(what + ": unsupported or missing geometry");
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

Link parseLink(const ptree& node, const std::filesystem::path& baseDir, const HandLoadOptions& options) {
  Link link;
  link.name = attr(node, "name", "link");
  const std::string what = "link '" + link.name + "'";
  std::vector<TriangleMesh> parts;
  for (const char* kind : {"visual", "collision"}) {
    for (const auto& [tag, child] : node) {
      if (tag != kind) continue;
      auto geometry = child.get_child_optional("geometry");
      if (!geometry) throw InputError(what + ": <" + kind + "> without <geometry>");
      parts.push_back(parseGeometry(*geometry, baseDir, options, what).transformed(parseOrigin(child, what)));
    }
    if (!parts.empty()) break;
  }
  link.mesh = mergeMeshes(parts);
  return link;
}

} // namespace

ArticulatedHand parseUrdf(const std::string& xml, const std::filesystem::path& baseDir,
                          const HandLoadOptions& options) {
  ptree doc;
  try {
    std::istringstream in(xml);
    boost::property_tree::read_xml(in, doc);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw InputError(std::string("URDF parse error: ") + e.what());
  }
  auto robot = doc.get_child_optional("robot");
  if (!robot) throw InputError("URDF has no <robot> element");

  std::vector<Link> links;
  for (const auto& [tag, node] : *robot) {
    if (tag == "transmission") throw InputError("URDF transmissions are not supported");
    if (tag != "link") continue;
    links.push_back(parseLink(node, baseDir, options));
    for (size_t i = 0; i + 1 < links.size(); i++) {
      if (links[i].name == links.back().name) throw InputError("duplicate link '" + links.back().name + "'");
    }
  }
  auto findLink = [&](const std::string& name, const std::string& what) {
    for (int l = 0; l < static_cast<int>(links.size()); l++) {
      if (links[l].name == name) return l;
    }
    throw InputError(what + ": unknown link '" + name + "'");
  };

  std::vector<Joint> joints;
  for (const auto& [tag, node] : *robot) {
    if (tag != "joint") continue;
    Joint j;
    j.name = attr(node, "name", "joint");
    const std::string what = "joint '" + j.name + "'";
    if (node.get_child_optional("mimic")) throw InputError(what + ": mimic joints are not supported");
    const std::string type = attr(node, "type", what);
    if (type == "fixed") j.type = JointType::Fixed;
    else if (type == "revolute") j.type = JointType::Revolute;
    else if (type == "prismatic") j.type = JointType::Prismatic;
    else throw InputError(what + ": unsupported joint type '" + type + "'");
    auto parent = node.get_child_optional("parent");
    auto child = node.get_child_optional("child");
    if (!parent || !child) throw InputError(what + ": needs <parent> and <child>");
    j.parent = findLink(attr(*parent, "link", what), what);
    j.child = findLink(attr(*child, "link", what), what);
    j.origin = parseOrigin(node, what);
    if (auto axis = node.get_child_optional("axis")) {
      auto a = parseNumbers(attr(*axis, "xyz", what), 3, what + " axis");
      j.axis = Vector3(a[0], a[1], a[2]);
    } else {
      j.axis = Vector3::UnitX();
    }
    if (j.type != JointType::Fixed) {
      auto limit = node.get_child_optional("limit");
      if (!limit) throw InputError(what + ": movable joints need <limit lower upper>");
      j.lower = std::stod(limit->get("<xmlattr>.lower", "0"));
      j.upper = std::stod(limit->get("<xmlattr>.upper", "0"));
    }
    joints.push_back(j);
  }
  return ArticulatedHand(robot->get("<xmlattr>.name", ""), std::move(links), std::move(joints));
}

ArticulatedHand loadHand(const std::filesystem::path& path, const HandLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open hand description " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  try {
    return parseUrdf(text.str(), path.parent_path(), options);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

// Skin binding

int SkinBinding::boundCount() const {
  return static_cast<int>(std::count_if(link.begin(), link.end(), [](int l) { return l >= 0; }));
}

double defaultEpsilon(const ArticulatedHand& hand) { return 0.02 * hand.restDiagonal(); }

SkinBinding bindSkin(const ArticulatedHand& hand, const TriangleMesh& skin, double epsilon) {
  if (!(epsilon >= 0.0)) throw InputError("binding threshold must be non-negative");
  std::vector<Isometry3> fk = hand.forwardKinematics(hand.rest());
  std::vector<Vector3> points;
  std::vector<int> owner;
  for (int l = 0; l < static_cast<int>(hand.links().size()); l++) {
    for (const Vector3& p : hand.links()[l].mesh.positions()) {
      points.push_back(fk[l] * p);
      owner.push_back(l);
    }
  }
  if (points.empty()) throw InputError("hand '" + hand.name() + "' has no link geometry to bind against");
  SpatialIndex index(std::move(points));

  const size_t n = skin.nVertices();
  SkinBinding b;
  b.epsilon = epsilon;
  b.link.assign(n, -1);
  b.local.assign(n, Vector3::Zero());
  b.localNormal.assign(n, Vector3::Zero());
  b.restDistance.assign(n, 0.0);
  for (size_t v = 0; v < n; v++) {
    NearestResult hit = index.nearest(skin.position(v));
    b.restDistance[v] = hit.distance;
    if (hit.distance > epsilon) continue;
    const int l = owner[hit.id];
    b.link[v] = l;
    b.local[v] = fk[l].inverse() * skin.position(v);
    b.localNormal[v] = fk[l].linear().transpose() * skin.normal(static_cast<int>(v));
  }
  return b;
}

SkinSample skinPointAndNormal(const SkinBinding& binding, const std::vector<Isometry3>& linkTransforms, int v) {
  if (v < 0 || v >= static_cast<int>(binding.link.size())) {
    throw InputError("skin vertex " + std::to_string(v) + " out of range");
  }
  const int l = binding.link[v];
  if (l < 0) throw InputError("skin vertex " + std::to_string(v) + " is not bound to any link");
  const Isometry3& t = linkTransforms[l];
  return {t * binding.local[v], t.linear() * binding.localNormal[v]};
}

SkinSample skinPointAndNormal(const SkinBinding& binding, const ArticulatedHand& hand, const VectorX& theta, int v) {
  return skinPointAndNormal(binding, hand.forwardKinematics(theta), v);
}

} // namespace patchgrasp
