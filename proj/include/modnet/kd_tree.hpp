#pragma once

#include <vector>

#include "modnet/point_cloud.hpp"
#include "modnet/types.hpp"

namespace modnet {

/// Spatial index over a PointCloud snapshot. Immutable after construction and
/// safe for concurrent read-only queries. Queries return exactly the same
/// index sets as a brute-force scan: radius queries use strict `< r`, kNN
/// breaks distance ties by smaller point index.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud, int leaf_size = 16);

  // Indices with strict distance < r, ascending index order.
  std::vector<int> radius_query(const Vec3& center, double r) const;

  // The k nearest indices, sorted by (distance, index).
  std::vector<int> knn_query(const Vec3& center, int k) const;

  int size() const { return static_cast<int>(pts_.size()); }

 private:
  struct Node {
    int begin = 0, end = 0;      // range into order_
    int axis = -1;               // -1 for leaf
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end);

  std::vector<Vec3> pts_;     // snapshot
  std::vector<int> order_;    // permutation of 0..n-1 grouped by node
  std::vector<Node> nodes_;
  int root_ = -1;
  int leaf_size_;
};

}  // namespace modnet
