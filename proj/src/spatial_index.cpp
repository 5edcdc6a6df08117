#include "patchgrasp/spatial_index.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "patchgrasp/error.h"

namespace patchgrasp {

namespace {
constexpr int kLeafSize = 8;
}

SpatialIndex::SpatialIndex(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) build(0, static_cast<int>(points_.size()), 0);
}

int SpatialIndex::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int i = begin; i < end; i++) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] <= lo[axis]) return id; // all points coincide

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  // Left holds coordinates <= split, right holds >= split.
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void SpatialIndex::search(int nodeId, const Eigen::Vector3d& query, int& bestId, double& bestSq) const {
  const Node& node = nodes_[nodeId];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; i++) {
      const int id = order_[i];
      const double d = (points_[id] - query).squaredNorm();
      if (d < bestSq || (d == bestSq && id < bestId)) {
        bestSq = d;
        bestId = id;
      }
    }
    return;
  }
  const double delta = query[node.axis] - node.split;
  const int nearChild = delta <= 0.0 ? node.left : node.right;
  const int farChild = delta <= 0.0 ? node.right : node.left;
  search(nearChild, query, bestId, bestSq);
  // Non-strict comparison keeps equal-distance candidates reachable for the id tie-break.
  if (delta * delta <= bestSq) search(farChild, query, bestId, bestSq);
}

NearestResult SpatialIndex::nearest(const Eigen::Vector3d& query) const {
  if (points_.empty()) throw InputError("nearest-neighbor query on an empty index");
  int bestId = -1;
  double bestSq = std::numeric_limits<double>::infinity();
  search(0, query, bestId, bestSq);
  return {bestId, std::sqrt(bestSq)};
}

NearestResult nearestVertex(const SpatialIndex& index, const Eigen::Vector3d& query) { return index.nearest(query); }

} // namespace patchgrasp
