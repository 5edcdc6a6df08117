#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace patchgrasp {

struct NearestResult {
  int id = -1;
  double distance = 0.0;
};

// Exact nearest-neighbor search over a fixed 3D point set (kd-tree). Ties in
// distance resolve to the lowest point id.
class SpatialIndex {
public:
  SpatialIndex() = default;
  explicit SpatialIndex(std::vector<Eigen::Vector3d> points);

  size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Eigen::Vector3d& point(int id) const { return points_[id]; }

  NearestResult nearest(const Eigen::Vector3d& query) const;

private:
  struct Node {
    int begin = 0, end = 0; // range into order_
    int axis = -1;          // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth);
  void search(int node, const Eigen::Vector3d& query, int& bestId, double& bestSq) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

NearestResult nearestVertex(const SpatialIndex& index, const Eigen::Vector3d& query);

} // namespace patchgrasp
