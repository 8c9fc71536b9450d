#pragma once

#include <array>
#include <span>
#include <vector>

#include "modnet/kd_tree.hpp"
#include "modnet/point_cloud.hpp"
#include "modnet/rng.hpp"
#include "modnet/types.hpp"

namespace modnet {

/// Three fixed-size normalized, PCA-aligned neighborhoods of one noisy point,
/// plus the shared inverse transform. Aligned coordinates q relate to model
/// coordinates p by q = rotation * (p - center) / scale.
struct MultiScalePatch {
  std::array<std::vector<Vec3>, 3> scale_points;  // each exactly n_patch points
  std::array<int, 3> pad_counts{0, 0, 0};
  Vec3 center = Vec3::Zero();       // the noisy point, model units
  double scale = 0.0;               // r_max, model units
  Mat3 rotation = Mat3::Identity();
  std::array<double, 3> radii_frac{0.03, 0.04, 0.05};
  bool degenerate_frame = false;    // identity fallback was used for the PCA frame
};

/// Clean-surface samples around a patch center, in the patch's aligned and
/// normalized frame. Never padded: m is the true (possibly capped) count.
struct GroundTruthPatch {
  std::vector<Vec3> gt_points;
  std::vector<Vec3> gt_normals;
  int m = 0;
  double dobb = 0.0;  // bounding-box diagonal of gt_points, normalized units
};

struct PcaFrame {
  Mat3 rotation = Mat3::Identity();
  bool degenerate = false;
};

/// Rotation aligning the first/second/third principal axes (by descending
/// eigenvalue of the covariance) with the y/x/z axes. Sign convention: each
/// principal axis is flipped so its largest-magnitude component is
/// nonnegative; the third axis is then flipped if needed so det(R) = +1.
/// Coincident or collinear inputs fall back to the identity with the
/// degenerate flag set.
PcaFrame pca_rotation(std::span<const Vec3> points);

/// Exactly n output points: a seed-deterministic uniform subset when there are
/// more than n inputs, otherwise the input followed by origin padding.
/// Returns the padding count alongside.
std::pair<std::vector<Vec3>, int> resample_fixed(std::span<const Vec3> points, int n, Rng& rng);

MultiScalePatch extract_multiscale_patch(const PointCloud& cloud, const KdTree& index,
                                         int point_index, const std::array<double, 3>& radii_frac,
                                         int n_patch, Rng& rng);

/// Clean points within r_frac * clean bbox diagonal of the patch center,
/// mapped by the patch transform; normals rotated into the aligned frame.
GroundTruthPatch extract_gt_patch(const PointCloud& clean, const KdTree& clean_index,
                                  const MultiScalePatch& patch, double r_frac, int m_max,
                                  Rng& rng);

}  // namespace modnet
