#include "patchgrasp/mesh.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {

uint64_t directedKey(int a, int b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

Vector3 anyOrthogonal(const Vector3& n) {
  Vector3 axis = std::abs(n.x()) < 0.9 ? Vector3::UnitX() : Vector3::UnitY();
  return (axis - axis.dot(n) * n).normalized();
}

} // namespace

TriangleMesh::TriangleMesh(std::vector<Vector3> positions, std::vector<Face> faces)
    : positions_(std::move(positions)), faces_(std::move(faces)) {
  const int nV = static_cast<int>(positions_.size());
  for (size_t f = 0; f < faces_.size(); f++) {
    for (int v : faces_[f]) {
      if (v < 0 || v >= nV) {
        throw InputError("face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                         " outside [0, " + std::to_string(nV) + ")");
      }
    }
  }
  buildConnectivity();
  buildRings();
  computeNormalsAndFrames();
}

void TriangleMesh::buildConnectivity() {
  const size_t nH = nHalfedges();
  twin_.assign(nH, -1);
  halfedgeEdge_.assign(nH, -1);
  edgeHalfedge_.clear();

  std::unordered_map<uint64_t, int> directed;
  std::unordered_map<uint64_t, int> incidence;
  std::unordered_set<uint64_t> badEdges;
  directed.reserve(nH);
  auto undirectedKey = [](int a, int b) { return directedKey(std::min(a, b), std::max(a, b)); };
  for (int h = 0; h < static_cast<int>(nH); h++) {
    uint64_t key = undirectedKey(tail(h), head(h));
    // A repeated directed edge means inconsistent orientation or a fin.
    if (!directed.emplace(directedKey(tail(h), head(h)), h).second) badEdges.insert(key);
    if (++incidence[key] > 2) badEdges.insert(key);
  }

  std::unordered_map<uint64_t, int> edgeIds;
  for (int h = 0; h < static_cast<int>(nH); h++) {
    int a = tail(h), b = head(h);
    uint64_t key = undirectedKey(a, b);
    bool bad = badEdges.count(key) > 0;
    auto [it, inserted] = edgeIds.emplace(key, static_cast<int>(edgeHalfedge_.size()));
    if (inserted) {
      edgeHalfedge_.push_back(h);
      if (bad) defects_.nonManifoldEdges.push_back({std::min(a, b), std::max(a, b)});
    }
    halfedgeEdge_[h] = it->second;
    if (bad) continue;
    auto t = directed.find(directedKey(b, a));
    if (t != directed.end()) twin_[h] = t->second;
  }
}

void TriangleMesh::buildRings() {
  const int nV = static_cast<int>(nVertices());
  rings_.assign(nV, {});
  std::vector<std::vector<int>> outgoing(nV);
  for (int h = 0; h < static_cast<int>(nHalfedges()); h++) outgoing[tail(h)].push_back(h);

  for (int v = 0; v < nV; v++) {
    const auto& out = outgoing[v];
    VertexRing& ring = rings_[v];
    if (out.empty()) {
      defects_.isolatedVertices.push_back(v);
      continue;
    }
    int start = out.front();
    int boundaryStarts = 0;
    for (int h : out) {
      if (twin_[h] < 0) {
        if (boundaryStarts == 0) start = h;
        boundaryStarts++;
      }
    }
    ring.boundary = boundaryStarts > 0;

    int h = start;
    size_t visited = 0;
    while (true) {
      ring.neighbors.push_back(head(h));
      ring.faces.push_back(h / 3);
      visited++;
      int inner = twin_[prev(h)];
      if (inner < 0) {
        ring.neighbors.push_back(tail(prev(h)));
        break;
      }
      if (inner == start || visited > out.size()) break;
      h = inner;
    }
    if (boundaryStarts > 1 || visited != out.size()) defects_.nonManifoldVertices.push_back(v);
  }
}

void TriangleMesh::computeNormalsAndFrames() {
  normals_ = patchgrasp::vertexNormals(*this);
  const int nV = static_cast<int>(nVertices());
  tangentX_.assign(nV, Vector3::Zero());
  tangentY_.assign(nV, Vector3::Zero());
  for (int v = 0; v < nV; v++) {
    const Vector3& n = normals_[v];
    if (n.isZero()) continue;
    Vector3 x = Vector3::Zero();
    if (!rings_[v].neighbors.empty()) {
      Vector3 e = positions_[rings_[v].neighbors.front()] - positions_[v];
      x = e - e.dot(n) * n;
    }
    x = x.norm() > 1e-12 * (1.0 + positions_[v].norm()) ? x.normalized() : anyOrthogonal(n);
    tangentX_[v] = x;
    tangentY_[v] = n.cross(x);
  }
}

int TriangleMesh::boundaryEdgeCount() const {
  int count = 0;
  for (int h : edgeHalfedge_) count += twin_[h] < 0 ? 1 : 0;
  return count;
}

Vector3 TriangleMesh::faceNormal(int f) const {
  const Face& t = faces_[f];
  return (positions_[t[1]] - positions_[t[0]]).cross(positions_[t[2]] - positions_[t[0]]).normalized();
}

double TriangleMesh::faceArea(int f) const {
  const Face& t = faces_[f];
  return 0.5 * (positions_[t[1]] - positions_[t[0]]).cross(positions_[t[2]] - positions_[t[0]]).norm();
}

double TriangleMesh::edgeLength(int e) const {
  int h = edgeHalfedge_[e];
  return (positions_[head(h)] - positions_[tail(h)]).norm();
}

double TriangleMesh::meanEdgeLength() const {
  if (nEdges() == 0) return 0.0;
  double sum = 0.0;
  for (size_t e = 0; e < nEdges(); e++) sum += edgeLength(static_cast<int>(e));
  return sum / static_cast<double>(nEdges());
}

double TriangleMesh::cornerAngle(int f, int corner) const {
  const Face& t = faces_[f];
  Vector3 a = positions_[t[(corner + 1) % 3]] - positions_[t[corner]];
  Vector3 b = positions_[t[(corner + 2) % 3]] - positions_[t[corner]];
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
  Eigen::AlignedBox3d box;
  for (const Vector3& p : positions_) box.extend(p);
  return box;
}

TriangleMesh TriangleMesh::transformed(const Eigen::Isometry3d& transform) const {
  std::vector<Vector3> moved;
  moved.reserve(positions_.size());
  for (const Vector3& p : positions_) moved.push_back(transform * p);
  return TriangleMesh(std::move(moved), faces_);
}

TriangleMesh TriangleMesh::scaled(double factor) const {
  std::vector<Vector3> moved;
  moved.reserve(positions_.size());
  for (const Vector3& p : positions_) moved.push_back(factor * p);
  return TriangleMesh(std::move(moved), faces_);
}

std::vector<Vector3> vertexNormals(const TriangleMesh& mesh) {
  std::vector<Vector3> normals(mesh.nVertices(), Vector3::Zero());
  for (size_t f = 0; f < mesh.nFaces(); f++) {
    const Face& t = mesh.face(static_cast<int>(f));
    // Cross product magnitude is twice the face area.
    Vector3 weighted = (mesh.position(t[1]) - mesh.position(t[0])).cross(mesh.position(t[2]) - mesh.position(t[0]));
    for (int v : t) normals[v] += weighted;
  }
  for (Vector3& n : normals) {
    double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

TriangleMesh cleanMesh(std::vector<Vector3> positions, std::vector<Face> faces, const IngestOptions& options) {
  if (positions.empty() || faces.empty()) throw InputError("mesh is empty");
  for (size_t f = 0; f < faces.size(); f++) {
    for (int v : faces[f]) {
      if (v < 0 || v >= static_cast<int>(positions.size())) {
        throw InputError("face " + std::to_string(f) + " references vertex " + std::to_string(v) + " out of range");
      }
    }
  }

  Eigen::AlignedBox3d box;
  for (const Vector3& p : positions) box.extend(p);
  const double tol = options.weldTolerance * box.diagonal().norm();

  // Spatial hash weld; every vertex maps to the first earlier vertex within tol.
  std::vector<int> remap(positions.size());
  std::vector<int> survivors;
  if (tol > 0.0) {
    struct CellHash {
      size_t operator()(const std::array<int64_t, 3>& c) const {
        return static_cast<size_t>(c[0] * 73856093LL ^ c[1] * 19349663LL ^ c[2] * 83492791LL);
      }
    };
    std::unordered_map<std::array<int64_t, 3>, std::vector<int>, CellHash> grid;
    auto cellOf = [&](const Vector3& p) {
      return std::array<int64_t, 3>{static_cast<int64_t>(std::floor(p.x() / tol)),
                                    static_cast<int64_t>(std::floor(p.y() / tol)),
                                    static_cast<int64_t>(std::floor(p.z() / tol))};
    };
    for (size_t i = 0; i < positions.size(); i++) {
      auto c = cellOf(positions[i]);
      int match = -1;
      for (int dx = -1; dx <= 1 && match < 0; dx++)
        for (int dy = -1; dy <= 1 && match < 0; dy++)
          for (int dz = -1; dz <= 1; dz++) {
            auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
            if (it == grid.end()) continue;
            for (int j : it->second) {
              if ((positions[survivors[j]] - positions[i]).norm() <= tol && (match < 0 || j < match)) match = j;
            }
          }
      if (match >= 0) {
        remap[i] = match;
      } else {
        remap[i] = static_cast<int>(survivors.size());
        grid[c].push_back(remap[i]);
        survivors.push_back(static_cast<int>(i));
      }
    }
  } else {
    for (size_t i = 0; i < positions.size(); i++) {
      remap[i] = static_cast<int>(i);
      survivors.push_back(static_cast<int>(i));
    }
  }

  std::vector<Vector3> welded;
  welded.reserve(survivors.size());
  for (int i : survivors) welded.push_back(positions[i]);

  std::vector<Face> kept;
  kept.reserve(faces.size());
  const double areaTol = 1e-14 * box.diagonal().squaredNorm();
  for (const Face& f : faces) {
    Face g{remap[f[0]], remap[f[1]], remap[f[2]]};
    if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
    double area = 0.5 * (welded[g[1]] - welded[g[0]]).cross(welded[g[2]] - welded[g[0]]).norm();
    if (!(area > areaTol)) continue;
    kept.push_back(g);
  }
  if (kept.empty()) throw InputError("mesh has no non-degenerate faces");
  return TriangleMesh(std::move(welded), std::move(kept));
}

namespace {

// Appends triangles for one polygon; quads split along the shorter diagonal.
void appendPolygon(const std::vector<int>& poly, const std::vector<Vector3>& positions, std::vector<Face>& faces,
                   size_t lineNo) {
  for (int v : poly) {
    if (v < 0 || v >= static_cast<int>(positions.size())) {
      throw InputError("line " + std::to_string(lineNo) + ": vertex index out of range");
    }
  }
  if (poly.size() == 3) {
    faces.push_back({poly[0], poly[1], poly[2]});
  } else if (poly.size() == 4) {
    double ac = (positions[poly[0]] - positions[poly[2]]).squaredNorm();
    double bd = (positions[poly[1]] - positions[poly[3]]).squaredNorm();
    if (ac <= bd) {
      faces.push_back({poly[0], poly[1], poly[2]});
      faces.push_back({poly[0], poly[2], poly[3]});
    } else {
      faces.push_back({poly[0], poly[1], poly[3]});
      faces.push_back({poly[1], poly[2], poly[3]});
    }
  } else {
    throw InputError("line " + std::to_string(lineNo) + ": polygon with " + std::to_string(poly.size()) +
                     " vertices is not supported (triangles and quads only)");
  }
}

} // namespace

MeshSoup readObj(std::istream& in) {
  MeshSoup soup;
  std::string line;
  size_t lineNo = 0;
  while (std::getline(in, line)) {
    lineNo++;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vector3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw InputError("line " + std::to_string(lineNo) + ": bad vertex");
      soup.positions.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        size_t slash = tok.find('/');
        std::string idx = tok.substr(0, slash);
        int i = 0;
        try {
          i = std::stoi(idx);
        } catch (const std::exception&) {
          throw InputError("line " + std::to_string(lineNo) + ": bad face index '" + tok + "'");
        }
        poly.push_back(i < 0 ? static_cast<int>(soup.positions.size()) + i : i - 1);
      }
      appendPolygon(poly, soup.positions, soup.faces, lineNo);
    }
  }
  return soup;
}

namespace {

enum class PlyEncoding { Ascii, BinaryLittle, BinaryBig };

struct PlyProperty {
  std::string name;
  std::string type;
  bool list = false;
  std::string countType;
};

struct PlyElement {
  std::string name;
  size_t count = 0;
  std::vector<PlyProperty> properties;
};

size_t plyTypeSize(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw InputError("unknown PLY property type '" + t + "'");
}

double readBinaryScalar(std::istream& in, const std::string& t, bool bigEndian) {
  size_t n = plyTypeSize(t);
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) throw InputError("truncated PLY body");
  if (bigEndian) std::reverse(buf, buf + n);
  auto as = [&]<typename T>(T) {
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return static_cast<double>(value);
  };
  if (t == "char" || t == "int8") return as(int8_t{});
  if (t == "uchar" || t == "uint8") return as(uint8_t{});
  if (t == "short" || t == "int16") return as(int16_t{});
  if (t == "ushort" || t == "uint16") return as(uint16_t{});
  if (t == "int" || t == "int32") return as(int32_t{});
  if (t == "uint" || t == "uint32") return as(uint32_t{});
  if (t == "float" || t == "float32") return as(float{});
  return as(double{});
}

} // namespace

MeshSoup readPly(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw InputError("not a PLY file");
  PlyEncoding encoding = PlyEncoding::Ascii;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") encoding = PlyEncoding::Ascii;
      else if (fmt == "binary_little_endian") encoding = PlyEncoding::BinaryLittle;
      else if (fmt == "binary_big_endian") encoding = PlyEncoding::BinaryBig;
      else throw InputError("unknown PLY format '" + fmt + "'");
    } else if (tag == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) throw InputError("PLY property before element");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        p.list = true;
        ls >> p.countType >> p.type >> p.name;
      } else {
        p.type = type;
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (tag == "end_header") {
      break;
    }
  }

  MeshSoup soup;
  const bool big = encoding == PlyEncoding::BinaryBig;
  size_t lineNo = 0;
  for (const PlyElement& e : elements) {
    for (size_t i = 0; i < e.count; i++) {
      std::vector<double> scalars;
      std::vector<int> list;
      std::istringstream ls;
      if (encoding == PlyEncoding::Ascii) {
        if (!std::getline(in, line)) throw InputError("truncated PLY body");
        lineNo++;
        ls.str(line);
      }
      Vector3 p = Vector3::Zero();
      for (const PlyProperty& prop : e.properties) {
        if (prop.list) {
          double count = 0.0;
          if (encoding == PlyEncoding::Ascii) {
            if (!(ls >> count)) throw InputError("bad PLY list");
          } else {
            count = readBinaryScalar(in, prop.countType, big);
          }
          std::vector<int> values;
          for (int k = 0; k < static_cast<int>(count); k++) {
            double value = 0.0;
            if (encoding == PlyEncoding::Ascii) {
              if (!(ls >> value)) throw InputError("bad PLY list entry");
            } else {
              value = readBinaryScalar(in, prop.type, big);
            }
            values.push_back(static_cast<int>(value));
          }
          if (prop.name == "vertex_indices" || prop.name == "vertex_index") list = std::move(values);
        } else {
          double value = 0.0;
          if (encoding == PlyEncoding::Ascii) {
            if (!(ls >> value)) throw InputError("bad PLY scalar");
          } else {
            value = readBinaryScalar(in, prop.type, big);
          }
          if (prop.name == "x") p.x() = value;
          else if (prop.name == "y") p.y() = value;
          else if (prop.name == "z") p.z() = value;
        }
      }
      if (e.name == "vertex") soup.positions.push_back(p);
      else if (e.name == "face") appendPolygon(list, soup.positions, soup.faces, lineNo);
    }
  }
  return soup;
}

TriangleMesh loadMesh(const std::filesystem::path& path, MeshFormat format, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open mesh file " + path.string());
  MeshSoup soup;
  try {
    soup = format == MeshFormat::Obj ? readObj(in) : readPly(in);
    return cleanMesh(std::move(soup.positions), std::move(soup.faces), options);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

TriangleMesh loadMesh(const std::filesystem::path& path, const IngestOptions& options) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return loadMesh(path, MeshFormat::Obj, options);
  if (ext == ".ply") return loadMesh(path, MeshFormat::Ply, options);
  throw InputError("unsupported mesh extension '" + ext + "' for " + path.string());
}

void writeObj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  for (const Vector3& p : mesh.positions()) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const Face& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

} // namespace patchgrasp
