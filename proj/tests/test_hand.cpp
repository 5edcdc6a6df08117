#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "patchgrasp/error.h"
#include "patchgrasp/hand.h"
#include "patchgrasp/primitives.h"

using namespace patchgrasp;

namespace {

constexpr double kPi = std::numbers::pi;

std::string robot(const std::string& body) { return "<robot name=\"t\">" + body + "</robot>"; }

std::string boxLink(const std::string& name, const std::string& size = "0.1 0.1 0.1", const std::string& xyz = "0 0 0") {
  return "<link name=\"" + name + "\"><visual><origin xyz=\"" + xyz + "\"/><geometry><box size=\"" + size +
         "\"/></geometry></visual></link>";
}

std::string joint(const std::string& name, const std::string& type, const std::string& parent,
                  const std::string& child, const std::string& xyz = "0 0 0", const std::string& axis = "0 0 1",
                  const std::string& limits = "lower=\"-1\" upper=\"1\"") {
  return "<joint name=\"" + name + "\" type=\"" + type + "\"><parent link=\"" + parent + "\"/><child link=\"" + child +
         "\"/><origin xyz=\"" + xyz + "\"/><axis xyz=\"" + axis + "\"/><limit " + limits + "/></joint>";
}

ArticulatedHand parse(const std::string& xml) { return parseUrdf(xml, std::filesystem::temp_directory_path()); }

// Palm plus three two-segment fingers and one spread joint: 7 joints.
std::string barrettStyle() {
  std::string s = boxLink("palm", "0.09 0.09 0.03");
  const char* base[3] = {"-0.05 0.025 0", "-0.05 -0.025 0", "0.05 0 0"};
  for (int f = 1; f <= 3; f++) {
    std::string F = "f" + std::to_string(f);
    std::string mount = "palm";
    if (f == 1) {
      s += boxLink("spread_link", "0.01 0.01 0.01");
      s += joint("spread", "revolute", "palm", "spread_link", base[0], "0 0 1", "lower=\"0\" upper=\"3.14\"");
      mount = "spread_link";
    }
    s += boxLink(F + "_prox", "0.045 0.024 0.024", "0.0225 0 0");
    s += boxLink(F + "_dist", "0.036 0.024 0.024", "0.018 0 0");
    s += joint(F + "_j1", "revolute", mount, F + "_prox", f == 1 ? "0 0 0" : base[f - 1], "0 -1 0",
               "lower=\"0\" upper=\"2.44\"");
    s += joint(F + "_j2", "revolute", F + "_prox", F + "_dist", "0.048 0 0", "0 -1 0", "lower=\"0\" upper=\"0.84\"");
  }
  return robot(s);
}

VectorX randomPose(const ArticulatedHand& hand, std::mt19937& rng) {
  VectorX theta(hand.dofCount());
  for (int i = 0; i < hand.dofCount(); i++) {
    double lo = std::max(hand.lower()[i], -3.0), hi = std::min(hand.upper()[i], 3.0);
    theta[i] = std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return theta;
}

} // namespace

TEST_CASE("DOF counts") {
  CHECK(parse(robot(boxLink("palm"))).dofCount() == 6);
  ArticulatedHand two = parse(robot(boxLink("a") + boxLink("b") + joint("j", "revolute", "a", "b")));
  CHECK(two.dofCount() == 7);
  CHECK(two.dofNames()[6] == "j");
  CHECK(two.joints()[0].dof == 6);
  ArticulatedHand fixed = parse(robot(boxLink("a") + boxLink("b") + joint("j", "fixed", "a", "b")));
  CHECK(fixed.dofCount() == 6);
  ArticulatedHand barrett = parse(barrettStyle());
  CHECK(barrett.joints().size() == 7);
  CHECK(barrett.dofCount() == 13);
  for (int i = 0; i < barrett.dofCount(); i++) CHECK(barrett.lower()[i] <= barrett.upper()[i]);
  CHECK(barrett.lower()[3] == doctest::Approx(-2 * kPi));
  CHECK(barrett.upper()[5] == doctest::Approx(2 * kPi));
  CHECK(barrett.isAngular(3));
  CHECK_FALSE(barrett.isAngular(0));
}

TEST_CASE("URDF errors") {
  CHECK_THROWS_AS(parse("<robot><link"), InputError);
  CHECK_THROWS_AS(parse("<notrobot/>"), InputError);
  // a -> b -> a
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") + joint("j1", "revolute", "a", "b") +
                              joint("j2", "revolute", "b", "a"))),
                  InputError);
  // root plus a detached cycle b -> c -> b
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") + boxLink("c") + joint("j1", "revolute", "b", "c") +
                              joint("j2", "revolute", "c", "b"))),
                  InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b"))), InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") + joint("j", "continuous", "a", "b"))), InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") + joint("j", "floating", "a", "b"))), InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") + joint("j", "revolute", "a", "c"))), InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") +
                              joint("j", "revolute", "a", "b", "0 0 0", "0 0 1", "lower=\"1\" upper=\"-1\""))),
                  InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") + joint("j", "revolute", "a", "b", "0 0 0", "0 0 0"))),
                  InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + boxLink("b") +
                              "<joint name=\"j\" type=\"revolute\"><parent link=\"a\"/><child link=\"b\"/>"
                              "<limit lower=\"0\" upper=\"1\"/><mimic joint=\"k\"/></joint>")),
                  InputError);
  CHECK_THROWS_AS(parse(robot(boxLink("a") + "<transmission name=\"t\"/>")), InputError);
  try {
    parse(robot("<link name=\"a\"><visual><geometry><mesh filename=\"no_such_mesh.obj\"/></geometry></visual></link>"));
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("no_such_mesh.obj") != std::string::npos);
  }
  CHECK_THROWS_AS(loadHand("/nonexistent/hand.urdf"), InputError);
}

TEST_CASE("URDF mesh geometry with scale and origin") {
  auto dir = std::filesystem::temp_directory_path() / "patchgrasp_hand_test";
  std::filesystem::create_directories(dir);
  writeObj(makeGrid(3, 3, 1.0), dir / "plate.obj");
  std::ofstream(dir / "hand.urdf") << robot(
      "<link name=\"a\"><visual><origin xyz=\"1 0 0\" rpy=\"0 0 1.5707963267948966\"/><geometry>"
      "<mesh filename=\"package://plate.obj\" scale=\"2 2 2\"/></geometry></visual></link>");
  ArticulatedHand hand = loadHand(dir / "hand.urdf");
  const TriangleMesh& m = hand.links()[0].mesh;
  REQUIRE(m.nVertices() == 9);
  // Grid vertex (2, 0) scaled to (4, 0), rotated to (0, 4), shifted to (1, 4).
  CHECK((m.position(2) - Vector3(1, 4, 0)).norm() < 1e-12);
}

TEST_CASE("forward kinematics oracles") {
  ArticulatedHand hand =
      parse(robot(boxLink("a") + boxLink("b", "0.1 0.1 0.1", "1 0 0") + joint("j", "revolute", "a", "b")));
  VectorX theta = hand.rest();
  std::vector<Isometry3> rest = hand.forwardKinematics(theta);
  CHECK(rest[1].isApprox(Isometry3::Identity()));

  theta[6] = kPi / 2;
  Vector3 child = hand.forwardKinematics(theta)[1] * Vector3(1, 0, 0);
  CHECK((child - Vector3(0, 1, 0)).norm() <= 1e-12);

  theta.setZero();
  theta.head<3>() = Vector3(1, 2, 3);
  for (const Isometry3& t : hand.forwardKinematics(theta)) CHECK((t.translation() - Vector3(1, 2, 3)).norm() < 1e-15);

  CHECK_THROWS_AS(hand.forwardKinematics(VectorX::Zero(3)), InputError);

  SUBCASE("prismatic joint") {
    ArticulatedHand slider = parse(robot(boxLink("a") + boxLink("b") + joint("j", "prismatic", "a", "b", "0 0 1", "2 0 0")));
    VectorX q = slider.rest();
    q[6] = 0.25;
    CHECK((slider.forwardKinematics(q)[1].translation() - Vector3(0.25, 0, 1)).norm() < 1e-15);
  }
}

TEST_CASE("FK composition: root transform factors out") {
  ArticulatedHand hand = parse(barrettStyle());
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; trial++) {
    VectorX theta = randomPose(hand, rng);
    VectorX local = theta;
    local.head<6>().setZero();
    Isometry3 t0 = rootTransform(theta);
    std::vector<Isometry3> full = hand.forwardKinematics(theta), base = hand.forwardKinematics(local);
    for (size_t l = 0; l < full.size(); l++) {
      CHECK((full[l].matrix() - (t0 * base[l]).matrix()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("rotation re-centering keeps the rotation") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2 * kPi, 2 * kPi);
  for (int trial = 0; trial < 200; trial++) {
    Vector3 w(u(rng), u(rng), u(rng));
    Vector3 c = recenterRotation(w);
    CHECK(c.norm() <= kPi + 1e-12);
    CHECK((expMap(c) - expMap(w)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(recenterRotation(Vector3(0.5, 0, 0)) == Vector3(0.5, 0, 0));
}

TEST_CASE("skin binding") {
  std::string body = boxLink("a", "1 1 1") + boxLink("b", "1 1 1", "1.5 0 0") + boxLink("c", "1 1 1", "1.5 0 0") +
                     joint("j1", "revolute", "a", "b", "0 0 0", "0 0 1") +
                     joint("j2", "revolute", "b", "c", "1.5 0 0", "0 1 0");
  ArticulatedHand hand = parseUrdf(robot(body), ".", {0.25});
  const double eps = 0.05;

  SUBCASE("coincident and far vertices") {
    std::vector<Isometry3> fk = hand.forwardKinematics(hand.rest());
    Vector3 onC = fk[2] * hand.links()[2].mesh.position(5);
    Vector3 far = onC + Vector3(0, 0, 0.5 + 2 * eps + 0.5);
    TriangleMesh skin({onC, onC + Vector3(0.01, 0, 0), far}, {Face{0, 1, 2}});
    SkinBinding b = bindSkin(hand, skin, eps);
    CHECK(b.link[0] == 2);
    CHECK(b.restDistance[0] == 0.0);
    CHECK_FALSE(b.isBound(2));
    CHECK(b.boundCount() == 2);
    CHECK_THROWS_AS(skinPointAndNormal(b, hand, hand.rest(), 2), InputError);
  }

  SUBCASE("chain with a cylinder skin: partition follows the nearest-vertex rule") {
    std::vector<Isometry3> fk = hand.forwardKinematics(hand.rest());
    std::vector<std::pair<Vector3, int>> articulated;
    for (int l = 0; l < 3; l++)
      for (const Vector3& p : hand.links()[l].mesh.positions()) articulated.emplace_back(fk[l] * p, l);
    // Cylinder along x through all three boxes.
    Isometry3 toX = Isometry3::Identity();
    toX.linear() = Eigen::AngleAxisd(kPi / 2, Vector3::UnitY()).toRotationMatrix();
    TriangleMesh skin = makeCylinder(0.55, -0.5, 3.5, 24, 40).transformed(toX);
    SkinBinding b = bindSkin(hand, skin, 0.3);
    int switches = 0;
    for (int v = 0; v < static_cast<int>(skin.nVertices()); v++) {
      double best = 1e18;
      int owner = -1;
      for (const auto& [p, l] : articulated) {
        double d = (p - skin.position(v)).norm();
        if (d < best) best = d, owner = l;
      }
      CHECK(b.restDistance[v] == doctest::Approx(best).epsilon(1e-12));
      CHECK(b.link[v] == (best <= 0.3 ? owner : -1));
      // Boxes span x in [-0.5, 0.5], [1, 2] and [2.5, 3.5]: mid-planes at 0.75 and 2.25.
      const double x = skin.position(v).x();
      if (b.isBound(v) && x < 0.7) CHECK(b.link[v] == 0);
      if (b.isBound(v) && x > 0.8 && x < 2.2) CHECK(b.link[v] == 1);
      if (b.isBound(v) && x > 2.3) CHECK(b.link[v] == 2);
      switches += b.isBound(v) && b.link[v] == 2;
    }
    CHECK(switches > 0);
  }

  SUBCASE("epsilon dichotomy over 10^4 random skin vertices") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 4.0);
    std::vector<Vector3> pos;
    std::vector<Face> faces;
    for (int i = 0; i < 10002; i++) pos.emplace_back(u(rng), 0.8 * u(rng) - 1.0, 0.8 * u(rng) - 1.0);
    for (int i = 0; i + 2 < 10002; i += 3) faces.push_back({i, i + 1, i + 2});
    TriangleMesh skin(pos, faces);
    std::uniform_real_distribution<double> e(0.05, 0.6);
    for (int trial = 0; trial < 3; trial++) {
      const double epsilon = e(rng);
      SkinBinding b = bindSkin(hand, skin, epsilon);
      int violations = 0;
      for (int v = 0; v < static_cast<int>(skin.nVertices()); v++) {
        violations += b.isBound(v) != (b.restDistance[v] <= epsilon);
      }
      CHECK(violations == 0);
      CHECK(b.boundCount() > 0);
      CHECK(b.boundCount() < static_cast<int>(skin.nVertices()));
    }
  }

  SUBCASE("skinning: rest, root translation, joint rotation") {
    TriangleMesh skin = makeBox(Vector3(-0.5, -0.5, -0.5), Vector3(3.5, 0.5, 0.5), 0.25);
    SkinBinding b = bindSkin(hand, skin, 0.2);
    REQUIRE(b.boundCount() > 100);
    VectorX theta = hand.rest();
    std::vector<Isometry3> rest = hand.forwardKinematics(theta);
    VectorX moved = theta;
    moved.head<3>() = Vector3(0.3, -0.2, 1.0);
    VectorX bent = theta;
    bent[7] = 0.7;
    Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Vector3::UnitY()).toRotationMatrix();
    for (int v = 0; v < static_cast<int>(skin.nVertices()); v++) {
      if (!b.isBound(v)) continue;
      SkinSample s = skinPointAndNormal(b, rest, v);
      CHECK((s.position - skin.position(v)).norm() <= 1e-9);
      CHECK((s.normal - skin.normal(v)).norm() <= 1e-12);
      SkinSample t = skinPointAndNormal(b, hand, moved, v);
      CHECK((t.position - s.position - Vector3(0.3, -0.2, 1.0)).norm() <= 1e-12);
      CHECK((t.normal - s.normal).norm() <= 1e-15);
      if (b.link[v] == 2) {
        SkinSample k = skinPointAndNormal(b, hand, bent, v);
        CHECK((k.normal - r * s.normal).norm() <= 1e-12);
      }
    }
  }

  CHECK(defaultEpsilon(hand) == doctest::Approx(0.02 * hand.restDiagonal()));
  CHECK_THROWS_AS(bindSkin(parse(robot("<link name=\"empty\"/>")), makeGrid(2, 2, 1.0), 0.1), InputError);
}

TEST_CASE("skin point central differences converge at second order") {
  ArticulatedHand hand = parse(barrettStyle());
  TriangleMesh skin = makeBox(Vector3(-0.06, -0.06, -0.02), Vector3(0.15, 0.06, 0.02), 0.01);
  SkinBinding b = bindSkin(hand, skin, 0.05);
  std::mt19937 rng(5);
  int checked = 0;
  while (checked < 20) {
    VectorX theta = randomPose(hand, rng);
    int v = std::uniform_int_distribution<int>(0, static_cast<int>(skin.nVertices()) - 1)(rng);
    if (!b.isBound(v)) continue;
    // Translations move points linearly; only rotations have curvature to measure.
    int dof = std::uniform_int_distribution<int>(3, hand.dofCount() - 1)(rng);
    auto cd = [&](double h) {
      VectorX p = theta, m = theta;
      p[dof] += h;
      m[dof] -= h;
      return Vector3((skinPointAndNormal(b, hand, p, v).position - skinPointAndNormal(b, hand, m, v).position) / (2 * h));
    };
    // Richardson extrapolation of two small steps as the reference derivative.
    Vector3 ref = (4.0 * cd(1e-4) - cd(2e-4)) / 3.0;
    double e1 = (cd(0.04) - ref).norm(), e2 = (cd(0.02) - ref).norm();
    if (e1 < 1e-9) continue; // point does not move with this DOF
    CHECK(e1 / e2 >= 3.5);
    checked++;
  }
}
