#include "patchgrasp/primitives.h"

#include <cmath>
#include <map>
#include <numbers>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {

// Two triangles for the cell with corners a (0,0), b (1,0), c (1,1), d (0,1).
void pushCell(std::vector<Face>& faces, int a, int b, int c, int d, bool flipDiagonal) {
  if (flipDiagonal) {
    faces.push_back({a, b, d});
    faces.push_back({b, c, d});
  } else {
    faces.push_back({a, b, c});
    faces.push_back({a, c, d});
  }
}

} // namespace

TriangleMesh makeGrid(int nx, int ny, double spacing, const Vector3& origin, GridDiagonal diagonal) {
  if (nx < 2 || ny < 2) throw InputError("grid needs at least 2x2 vertices");
  std::vector<Vector3> positions;
  positions.reserve(static_cast<size_t>(nx) * ny);
  for (int j = 0; j < ny; j++)
    for (int i = 0; i < nx; i++) positions.push_back(origin + spacing * Vector3(i, j, 0.0));
  std::vector<Face> faces;
  for (int j = 0; j + 1 < ny; j++) {
    for (int i = 0; i + 1 < nx; i++) {
      int a = j * nx + i;
      bool flip = diagonal == GridDiagonal::Alternating && (i + j) % 2 == 1;
      pushCell(faces, a, a + 1, a + 1 + nx, a + nx, flip);
    }
  }
  return TriangleMesh(std::move(positions), std::move(faces));
}

TriangleMesh makeIcosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vector3> positions = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vector3& p : positions) p.normalize();
  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; level++) {
    std::map<std::pair<int, int>, int> midpoints;
    auto midpoint = [&](int a, int b) {
      std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      positions.push_back((positions[a] + positions[b]).normalized());
      int id = static_cast<int>(positions.size()) - 1;
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<Face> refined;
    refined.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      int ab = midpoint(f[0], f[1]);
      int bc = midpoint(f[1], f[2]);
      int ca = midpoint(f[2], f[0]);
      refined.push_back({f[0], ab, ca});
      refined.push_back({f[1], bc, ab});
      refined.push_back({f[2], ca, bc});
      refined.push_back({ab, bc, ca});
    }
    faces = std::move(refined);
  }
  for (Vector3& p : positions) p *= radius;
  return TriangleMesh(std::move(positions), std::move(faces));
}

TriangleMesh makeBox(const Vector3& lo, const Vector3& hi, double spacing) {
  if (!(spacing > 0.0) || !((hi - lo).array() > 0.0).all()) throw InputError("degenerate box");
  std::array<int, 3> cells;
  for (int k = 0; k < 3; k++) cells[k] = std::max(1, static_cast<int>(std::lround((hi[k] - lo[k]) / spacing)));
  auto coord = [&](int axis, int i) { return lo[axis] + (hi[axis] - lo[axis]) * i / cells[axis]; };

  std::vector<Vector3> positions;
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; axis++) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; side++) {
      const int base = static_cast<int>(positions.size());
      const int nu = cells[u] + 1, nv = cells[v] + 1;
      for (int j = 0; j < nv; j++) {
        for (int i = 0; i < nu; i++) {
          Vector3 p;
          p[axis] = side == 1 ? hi[axis] : lo[axis];
          p[u] = coord(u, i);
          p[v] = coord(v, j);
          positions.push_back(p);
        }
      }
      for (int j = 0; j + 1 < nv; j++) {
        for (int i = 0; i + 1 < nu; i++) {
          int a = base + j * nu + i;
          int b = a + 1, c = a + 1 + nu, d = a + nu;
          bool flip = (i + j) % 2 == 1;
          // (u, v, axis) is right-handed, so CCW in (u, v) faces +axis.
          if (side == 1) pushCell(faces, a, b, c, d, flip);
          else pushCell(faces, a, d, c, b, !flip);
        }
      }
    }
  }
  return cleanMesh(std::move(positions), std::move(faces));
}

TriangleMesh makeStrip(int n, double spacing) {
  if (n < 2) throw InputError("strip needs at least 2 columns");
  std::vector<Vector3> positions;
  for (int i = 0; i < n; i++) positions.emplace_back(spacing * i, 0.0, 0.0);
  for (int i = 0; i < n; i++) positions.emplace_back(spacing * i, spacing, 0.0);
  std::vector<Face> faces;
  for (int i = 0; i + 1 < n; i++) pushCell(faces, i, i + 1, n + i + 1, n + i, false);
  return TriangleMesh(std::move(positions), std::move(faces));
}

TriangleMesh makeCylinder(double radius, double z0, double z1, int segments, int rings) {
  if (segments < 3 || rings < 1) throw InputError("cylinder needs >= 3 segments and >= 1 ring");
  std::vector<Vector3> positions;
  std::vector<Face> faces;
  for (int r = 0; r <= rings; r++) {
    double z = z0 + (z1 - z0) * r / rings;
    for (int s = 0; s < segments; s++) {
      double a = 2.0 * std::numbers::pi * s / segments;
      positions.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
    }
  }
  for (int r = 0; r < rings; r++) {
    for (int s = 0; s < segments; s++) {
      int a = r * segments + s;
      int b = r * segments + (s + 1) % segments;
      pushCell(faces, a, b, b + segments, a + segments, false);
    }
  }
  const int bottom = static_cast<int>(positions.size());
  positions.emplace_back(0.0, 0.0, z0);
  const int top = bottom + 1;
  positions.emplace_back(0.0, 0.0, z1);
  for (int s = 0; s < segments; s++) {
    int a = s, b = (s + 1) % segments;
    faces.push_back({bottom, b, a});
    faces.push_back({top, rings * segments + a, rings * segments + b});
  }
  return TriangleMesh(std::move(positions), std::move(faces));
}

} // namespace patchgrasp
