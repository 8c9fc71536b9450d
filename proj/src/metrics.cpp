#include "modnet/metrics.hpp"

#include <algorithm>
#include <stdexcept>

#include "modnet/kd_tree.hpp"

namespace modnet {

double chamfer_distance(const PointCloud& filtered, const PointCloud& gt) {
  if (filtered.empty() || gt.empty())
    throw std::invalid_argument("chamfer distance requires non-empty clouds");
  const KdTree filtered_index(filtered);
  const KdTree gt_index(gt);

  double sum_gt = 0.0;
  for (const Vec3& p : gt.points) {
    const int j = filtered_index.knn_query(p, 1)[0];
    sum_gt += (p - filtered.points[static_cast<std::size_t>(j)]).squaredNorm();
  }
  double sum_filtered = 0.0;
  for (const Vec3& q : filtered.points) {
    const int j = gt_index.knn_query(q, 1)[0];
    sum_filtered += (q - gt.points[static_cast<std::size_t>(j)]).squaredNorm();
  }
  return sum_gt / static_cast<double>(gt.size()) +
         sum_filtered / static_cast<double>(filtered.size());
}

double mse_metric(const PointCloud& filtered, const PointCloud& gt, int n_neighbors) {
  if (filtered.empty() || gt.empty()) throw std::invalid_argument("mse requires non-empty clouds");
  if (static_cast<int>(filtered.size()) < n_neighbors)
    throw std::invalid_argument("filtered cloud smaller than the neighbor count");
  const KdTree index(filtered);
  double total = 0.0;
  for (const Vec3& p : gt.points) {
    double acc = 0.0;
    for (int j : index.knn_query(p, n_neighbors))
      acc += (p - filtered.points[static_cast<std::size_t>(j)]).squaredNorm();
    total += acc / static_cast<double>(n_neighbors);
  }
  return total / static_cast<double>(gt.size());
}

double point_triangle_sqdist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  if (ab.cross(ac).squaredNorm() <= 0.0) throw std::invalid_argument("degenerate triangle");

  // Closest point on a triangle via barycentric region tests
  // (Ericson, Real-Time Collision Detection, section 5.1.5).
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).squaredNorm();

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).squaredNorm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).squaredNorm();
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).squaredNorm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).squaredNorm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).squaredNorm();
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return (p - (a + v * ab + w * ac)).squaredNorm();
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return std::sqrt(point_triangle_sqdist(p, a, b, c));
}

TriangleBvh::TriangleBvh(const TriMesh& mesh, int leaf_size)
    : mesh_(&mesh), leaf_size_(std::max(1, leaf_size)) {
  if (mesh.triangles.empty()) throw std::invalid_argument("empty mesh");
  const int n = static_cast<int>(mesh.triangles.size());
  order_.resize(static_cast<std::size_t>(n));
  centroids_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    order_[static_cast<std::size_t>(i)] = i;
    const auto& t = mesh.triangles[static_cast<std::size_t>(i)];
    centroids_[static_cast<std::size_t>(i)] =
        (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
  }
  root_ = build(0, n);
}

int TriangleBvh::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    const auto& t = mesh_->triangles[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
    for (int v : t) {
      node.lo = node.lo.cwiseMin(mesh_->vertices[static_cast<std::size_t>(v)]);
      node.hi = node.hi.cwiseMax(mesh_->vertices[static_cast<std::size_t>(v)]);
    }
  }
  if (end - begin > leaf_size_) {
    int axis;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int x, int y) {
                       return centroids_[static_cast<std::size_t>(x)][axis] <
                              centroids_[static_cast<std::size_t>(y)][axis];
                     });
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(self)].left = left;
    nodes_[static_cast<std::size_t>(self)].right = right;
    return self;
  }
  nodes_.push_back(node);
  return static_cast<int>(nodes_.size()) - 1;
}

double TriangleBvh::aabb_sqdist(const Node& n, const Vec3& p) const {
  double sq = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = std::max({n.lo[c] - p[c], p[c] - n.hi[c], 0.0});
    sq += d * d;
  }
  return sq;
}

double TriangleBvh::squared_distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  // Descend nearer child first; a subtree whose box cannot beat the current
  // minimum is skipped, so the returned minimum equals the exhaustive one.
  auto visit = [&](auto&& self, int ni) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(ni)];
    if (aabb_sqdist(node, p) >= best) return;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& t =
            mesh_->triangles[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
        best = std::min(best, point_triangle_sqdist(p, mesh_->vertices[t[0]],
                                                    mesh_->vertices[t[1]], mesh_->vertices[t[2]]));
      }
      return;
    }
    const double dl = aabb_sqdist(nodes_[static_cast<std::size_t>(node.left)], p);
    const double dr = aabb_sqdist(nodes_[static_cast<std::size_t>(node.right)], p);
    if (dl <= dr) {
      self(self, node.left);
      self(self, node.right);
    } else {
      self(self, node.right);
      self(self, node.left);
    }
  };
  visit(visit, root_);
  return best;
}

double p2m_metric(const PointCloud& filtered, const TriMesh& mesh) {
  if (filtered.empty()) throw std::invalid_argument("empty point cloud");
  if (mesh.triangles.empty()) throw std::invalid_argument("empty mesh");
  const TriangleBvh bvh(mesh);
  double total = 0.0;
  for (const Vec3& p : filtered.points) total += bvh.squared_distance(p);
  return total / static_cast<double>(filtered.size());
}

MetricReport evaluate(const PointCloud& filtered, const PointCloud& gt, const TriMesh* mesh) {
  MetricReport report;
  report.n_filtered = filtered.size();
  report.n_gt = gt.size();
  report.cd = chamfer_distance(filtered, gt);
  report.mse = mse_metric(filtered, gt);
  if (mesh != nullptr) report.p2m = p2m_metric(filtered, *mesh);
  return report;
}

}  // namespace modnet
