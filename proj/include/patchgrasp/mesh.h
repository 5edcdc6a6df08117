#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace patchgrasp {

using Vector3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

// Counterclockwise one-ring of a vertex. For an interior vertex the ring is
// closed and faces[k] lies between neighbors[k] and neighbors[(k+1) % n]. For a
// boundary vertex the ring starts and ends on boundary edges, so there is one
// more neighbor than faces.
struct VertexRing {
  std::vector<int> neighbors;
  std::vector<int> faces;
  bool boundary = false;
};

struct MeshDefects {
  std::vector<std::array<int, 2>> nonManifoldEdges;
  std::vector<int> nonManifoldVertices;
  std::vector<int> isolatedVertices;

  bool manifold() const { return nonManifoldEdges.empty() && nonManifoldVertices.empty(); }
};

// Indexed triangle mesh with half-edge connectivity. Half-edge h belongs to face
// h / 3 and runs from faces[h/3][h%3] to faces[h/3][(h+1)%3]. twin(h) is -1 on
// boundary edges. Immutable after construction.
class TriangleMesh {
public:
  TriangleMesh() = default;
  TriangleMesh(std::vector<Vector3> positions, std::vector<Face> faces);

  size_t nVertices() const { return positions_.size(); }
  size_t nFaces() const { return faces_.size(); }
  size_t nHalfedges() const { return 3 * faces_.size(); }
  size_t nEdges() const { return edgeHalfedge_.size(); }

  const std::vector<Vector3>& positions() const { return positions_; }
  const Vector3& position(int v) const { return positions_[v]; }
  const std::vector<Face>& faces() const { return faces_; }
  const Face& face(int f) const { return faces_[f]; }

  int tail(int h) const { return faces_[h / 3][h % 3]; }
  int head(int h) const { return faces_[h / 3][(h + 1) % 3]; }
  int next(int h) const { return 3 * (h / 3) + (h + 1) % 3; }
  int prev(int h) const { return 3 * (h / 3) + (h + 2) % 3; }
  int twin(int h) const { return twin_[h]; }
  int edge(int h) const { return halfedgeEdge_[h]; }
  // Representative half-edge of an undirected edge (the interior one if any).
  int edgeHalfedge(int e) const { return edgeHalfedge_[e]; }
  int boundaryEdgeCount() const;

  const MeshDefects& defects() const { return defects_; }
  bool isManifold() const { return defects_.manifold(); }
  bool isIsolated(int v) const { return rings_[v].faces.empty(); }
  bool isBoundaryVertex(int v) const { return rings_[v].boundary; }
  // Only meaningful for manifold vertices.
  const VertexRing& ring(int v) const { return rings_[v]; }

  const std::vector<Vector3>& vertexNormals() const { return normals_; }
  const Vector3& normal(int v) const { return normals_[v]; }
  const Vector3& tangentX(int v) const { return tangentX_[v]; }
  const Vector3& tangentY(int v) const { return tangentY_[v]; }

  Vector3 faceNormal(int f) const;
  double faceArea(int f) const;
  double edgeLength(int e) const;
  double meanEdgeLength() const;
  double cornerAngle(int f, int corner) const;
  Eigen::AlignedBox3d bounds() const;
  double boundingDiagonal() const { return bounds().diagonal().norm(); }
  int eulerCharacteristic() const {
    return static_cast<int>(nVertices()) - static_cast<int>(nEdges()) + static_cast<int>(nFaces());
  }

  TriangleMesh transformed(const Eigen::Isometry3d& transform) const;
  TriangleMesh scaled(double factor) const;

private:
  void buildConnectivity();
  void buildRings();
  void computeNormalsAndFrames();

  std::vector<Vector3> positions_;
  std::vector<Face> faces_;
  std::vector<int> twin_;
  std::vector<int> halfedgeEdge_;
  std::vector<int> edgeHalfedge_;
  std::vector<VertexRing> rings_;
  std::vector<Vector3> normals_;
  std::vector<Vector3> tangentX_;
  std::vector<Vector3> tangentY_;
  MeshDefects defects_;
};

// Area-weighted vertex normals. Isolated vertices get a zero vector.
std::vector<Vector3> vertexNormals(const TriangleMesh& mesh);

enum class MeshFormat { Obj, Ply };

struct IngestOptions {
  // Vertices closer than weldTolerance * bbox diagonal are merged.
  double weldTolerance = 1e-8;
};

// Welds duplicate vertices (keeping the first occurrence and the relative order
// of survivors), drops zero-area and collapsed faces, then builds the mesh.
TriangleMesh cleanMesh(std::vector<Vector3> positions, std::vector<Face> faces,
                       const IngestOptions& options = {});

TriangleMesh loadMesh(const std::filesystem::path& path, MeshFormat format,
                      const IngestOptions& options = {});
// Format chosen from the file extension.
TriangleMesh loadMesh(const std::filesystem::path& path, const IngestOptions& options = {});

void writeObj(const TriangleMesh& mesh, const std::filesystem::path& path);

// Polygon soup as read from disk, before cleaning.
struct MeshSoup {
  std::vector<Vector3> positions;
  std::vector<Face> faces;
};
MeshSoup readObj(std::istream& in);
MeshSoup readPly(std::istream& in);

} // namespace patchgrasp
