#include "modnet/patch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace modnet {

namespace {

Mat3 covariance(std::span<const Vec3> points) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  return cov / static_cast<double>(points.size());
}

// Flip v so its largest-magnitude component (lowest index on ties) is >= 0.
Vec3 canonical_sign(const Vec3& v) {
  int arg = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  return v[arg] < 0.0 ? Vec3(-v) : v;
}

}  // namespace

PcaFrame pca_rotation(std::span<const Vec3> points) {
  PcaFrame frame;
  if (points.size() < 3) {
    frame.degenerate = true;
    return frame;
  }
  const Mat3 cov = covariance(points);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 evals = eig.eigenvalues();  // ascending
  // Coincident points (all eigenvalues ~0) or collinear points (second-largest
  // ~0 relative to the largest) leave the frame undefined.
  if (evals[2] <= 0.0 || evals[1] <= 1e-12 * evals[2]) {
    frame.degenerate = true;
    return frame;
  }
  const Vec3 first = canonical_sign(eig.eigenvectors().col(2));
  const Vec3 second = canonical_sign(eig.eigenvectors().col(1));
  const Vec3 third = canonical_sign(eig.eigenvectors().col(0));

  Mat3 rot;
  rot.row(0) = second.transpose();  // second principal axis -> x
  rot.row(1) = first.transpose();   // first principal axis  -> y
  rot.row(2) = third.transpose();   // third principal axis  -> z
  if (rot.determinant() < 0.0) rot.row(2) = -rot.row(2);
  frame.rotation = rot;
  return frame;
}

std::pair<std::vector<Vec3>, int> resample_fixed(std::span<const Vec3> points, int n, Rng& rng) {
  if (n <= 0) throw std::invalid_argument("resample size must be positive");
  const int count = static_cast<int>(points.size());
  std::vector<Vec3> out;
  out.reserve(n);
  if (count > n) {
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(count - i)));
      std::swap(idx[i], idx[j]);
      out.push_back(points[idx[i]]);
    }
    return {std::move(out), 0};
  }
  out.assign(points.begin(), points.end());
  out.resize(n, Vec3::Zero());
  return {std::move(out), n - count};
}

MultiScalePatch extract_multiscale_patch(const PointCloud& cloud, const KdTree& index,
                                         int point_index, const std::array<double, 3>& radii_frac,
                                         int n_patch, Rng& rng) {
  if (point_index < 0 || point_index >= static_cast<int>(cloud.size()))
    throw std::out_of_range("patch center index out of range");
  if (!(radii_frac[0] > 0.0 && radii_frac[0] < radii_frac[1] && radii_frac[1] < radii_frac[2]))
    throw std::invalid_argument("patch radii fractions must be positive and ascending");
  if (n_patch < 1) throw std::invalid_argument("patch size must be at least 1");

  const double diag = cloud.bbox_diag();
  const Vec3 center = cloud.points[point_index];
  const double r_max = radii_frac[2] * diag;

  const std::vector<int> largest = index.radius_query(center, r_max);
  if (largest.empty()) throw std::runtime_error("isolated point");

  // One shared frame for all three scales, from the largest-scale
  // neighborhood before any downsampling.
  std::vector<Vec3> offsets;
  offsets.reserve(largest.size());
  for (int j : largest) offsets.push_back(cloud.points[j] - center);
  const PcaFrame frame = pca_rotation(offsets);

  MultiScalePatch patch;
  patch.center = center;
  patch.scale = r_max;
  patch.rotation = frame.rotation;
  patch.radii_frac = radii_frac;
  patch.degenerate_frame = frame.degenerate;

  for (int k = 0; k < 3; ++k) {
    const std::vector<int> nbrs =
        k == 2 ? largest : index.radius_query(center, radii_frac[k] * diag);
    std::vector<Vec3> aligned;
    aligned.reserve(nbrs.size());
    for (int j : nbrs) aligned.push_back(frame.rotation * ((cloud.points[j] - center) / r_max));
    auto [pts, pad] = resample_fixed(aligned, n_patch, rng);
    patch.scale_points[k] = std::move(pts);
    patch.pad_counts[k] = pad;
  }
  return patch;
}

GroundTruthPatch extract_gt_patch(const PointCloud& clean, const KdTree& clean_index,
                                  const MultiScalePatch& patch, double r_frac, int m_max,
                                  Rng& rng) {
  if (!clean.has_normals()) throw std::invalid_argument("ground-truth cloud has no normals");
  if (!(r_frac > 0.0)) throw std::invalid_argument("ground-truth radius fraction must be positive");
  if (m_max < 1) throw std::invalid_argument("ground-truth cap must be at least 1");

  const double r = r_frac * clean.bbox_diag();
  std::vector<int> nbrs = clean_index.radius_query(patch.center, r);
  if (nbrs.empty()) throw std::runtime_error("no ground truth support");

  if (static_cast<int>(nbrs.size()) > m_max) {
    std::vector<int> keep;
    keep.reserve(m_max);
    for (int i = 0; i < m_max; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(nbrs.size() - i)));
      std::swap(nbrs[i], nbrs[j]);
      keep.push_back(nbrs[i]);
    }
    nbrs = std::move(keep);
  }

  GroundTruthPatch gt;
  gt.m = static_cast<int>(nbrs.size());
  gt.gt_points.reserve(gt.m);
  gt.gt_normals.reserve(gt.m);
  for (int j : nbrs) {
    gt.gt_points.push_back(patch.rotation * ((clean.points[j] - patch.center) / patch.scale));
    gt.gt_normals.push_back(patch.rotation * clean.normals[j]);
  }
  Vec3 lo = gt.gt_points.front();
  Vec3 hi = lo;
  for (const Vec3& p : gt.gt_points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  gt.dobb = (hi - lo).norm();
  return gt;
}

}  // namespace modnet
