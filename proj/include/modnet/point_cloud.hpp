#pragma once

#include <optional>
#include <string>
#include <vector>

#include "modnet/types.hpp"

namespace modnet {

/// Ordered set of 3D points with optional unit normals. Coordinates are in
/// model units; the bounding-box diagonal is cached on first use.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one unit normal per point

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts) : points(std::move(pts)) {}
  PointCloud(std::vector<Vec3> pts, std::vector<Vec3> nrm)
      : points(std::move(pts)), normals(std::move(nrm)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }

  // Euclidean length of the axis-aligned bounding-box diagonal.
  double bbox_diag() const;
  void invalidate_cache() { diag_cache_.reset(); }

 private:
  mutable std::optional<double> diag_cache_;
};

// Plain-text "XYZ[N]" format: one point per line, 3 or 6 whitespace-separated
// reals (x y z [nx ny nz]); '#' lines are comments. Writes 17 significant
// digits so read/write round-trips exactly.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

}  // namespace modnet
