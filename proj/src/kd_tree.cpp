#include "modnet/kd_tree.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace modnet {

KdTree::KdTree(const PointCloud& cloud, int leaf_size)
    : pts_(cloud.points), leaf_size_(std::max(1, leaf_size)) {
  if (pts_.empty()) throw std::invalid_argument("empty point cloud");
  order_.resize(pts_.size());
  for (std::size_t i = 0; i < pts_.size(); ++i) order_[i] = static_cast<int>(i);
  root_ = build(0, static_cast<int>(pts_.size()));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= leaf_size_) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  Vec3 lo = pts_[order_[begin]];
  Vec3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(pts_[order_[i]]);
    hi = hi.cwiseMax(pts_[order_[i]]);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) {  // all points coincide; keep as leaf
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
  node.axis = axis;
  node.split = pts_[order_[mid]][axis];

  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

std::vector<int> KdTree::radius_query(const Vec3& center, double r) const {
  if (!(r > 0.0)) throw std::invalid_argument("radius must be positive");
  const double r2 = r * r;
  std::vector<int> out;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        if ((pts_[idx] - center).squaredNorm() < r2) out.push_back(idx);
      }
      continue;
    }
    const double d = center[node.axis] - node.split;
    // Points at exactly plane distance r are excluded by the strict inequality,
    // so the far side can be pruned when d*d >= r2.
    if (d < 0.0) {
      stack.push_back(node.left);
      if (d * d < r2) stack.push_back(node.right);
    } else {
      stack.push_back(node.right);
      if (d * d < r2) stack.push_back(node.left);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct Cand {
  double d2;
  int idx;
  bool operator<(const Cand& o) const {  // "farther" ordering for max-heap
    if (d2 != o.d2) return d2 < o.d2;
    return idx < o.idx;
  }
};

}  // namespace

std::vector<int> KdTree::knn_query(const Vec3& center, int k) const {
  if (k <= 0) throw std::invalid_argument("k must be positive");
  if (k > size()) throw std::invalid_argument("k exceeds cloud size");

  std::priority_queue<Cand> heap;  // top = worst of the current best k
  auto consider = [&](int idx) {
    Cand c{(pts_[idx] - center).squaredNorm(), idx};
    if (static_cast<int>(heap.size()) < k) {
      heap.push(c);
    } else if (c < heap.top()) {
      heap.pop();
      heap.push(c);
    }
  };

  // Recursive descent, nearer child first. A subtree is pruned only when every
  // point in it must lose against the current worst candidate, including the
  // index tie-break at equal distance (hence strict > below).
  auto visit = [&](auto&& self, int ni) -> void {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) consider(order_[i]);
      return;
    }
    const double d = center[node.axis] - node.split;
    const int near = d < 0.0 ? node.left : node.right;
    const int far = d < 0.0 ? node.right : node.left;
    self(self, near);
    if (static_cast<int>(heap.size()) < k || !(d * d > heap.top().d2)) self(self, far);
  };
  visit(visit, root_);

  std::vector<Cand> best;
  best.reserve(heap.size());
  while (!heap.empty()) {
    best.push_back(heap.top());
    heap.pop();
  }
  std::sort(best.begin(), best.end());
  std::vector<int> out(best.size());
  for (std::size_t i = 0; i < best.size(); ++i) out[i] = best[i].idx;
  return out;
}

}  // namespace modnet
