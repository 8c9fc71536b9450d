#pragma once

#include <optional>
#include <vector>

#include "modnet/point_cloud.hpp"
#include "modnet/shapes.hpp"
#include "modnet/types.hpp"

namespace modnet {

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance in both
/// directions, summed. Units: squared model units.
double chamfer_distance(const PointCloud& filtered, const PointCloud& gt);

/// Mean over ground-truth points of the mean squared distance to their
/// n_neighbors nearest filtered points.
double mse_metric(const PointCloud& filtered, const PointCloud& gt, int n_neighbors = 10);

/// Exact Euclidean distance from a point to a closed triangle.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
double point_triangle_sqdist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Axis-aligned bounding-volume index over mesh triangles for nearest-face
/// queries. Returns exactly the same minima as an exhaustive scan.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriMesh& mesh, int leaf_size = 4);
  double squared_distance(const Vec3& p) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int begin = 0, end = 0;     // range into order_
    int left = -1, right = -1;  // -1 for leaf
  };
  int build(int begin, int end);
  double aabb_sqdist(const Node& n, const Vec3& p) const;

  const TriMesh* mesh_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int leaf_size_;
};

/// One-sided mean squared point-to-mesh distance (filtered -> mesh).
double p2m_metric(const PointCloud& filtered, const TriMesh& mesh);

struct MetricReport {
  double cd = 0.0;
  double mse = 0.0;
  std::optional<double> p2m;
  std::size_t n_filtered = 0;
  std::size_t n_gt = 0;
};

MetricReport evaluate(const PointCloud& filtered, const PointCloud& gt,
                      const TriMesh* mesh = nullptr);

}  // namespace modnet
