#include "modnet/point_cloud.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace modnet {

double PointCloud::bbox_diag() const {
  if (diag_cache_) return *diag_cache_;
  if (points.empty()) {
    diag_cache_ = 0.0;
    return 0.0;
  }
  Vec3 lo = points.front();
  Vec3 hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  diag_cache_ = (hi - lo).norm();
  return *diag_cache_;
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open point cloud file: " + path);

  PointCloud cloud;
  std::string line;
  int fields = 0;  // 3 or 6, fixed by the first data line
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream ls(line);
    double v[6];
    int n = 0;
    while (n < 6 && (ls >> v[n])) ++n;
    double extra;
    if (ls >> extra) n = 7;
    if (n != 3 && n != 6)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 3 or 6 reals per line");
    if (fields == 0) fields = n;
    if (n != fields)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": inconsistent field count (file mixes XYZ and XYZN lines)");
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (n == 6) cloud.normals.emplace_back(v[3], v[4], v[5]);
  }
  return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
  if (cloud.has_normals() && cloud.normals.size() != cloud.points.size())
    throw std::runtime_error("normal count does not match point count");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (cloud.has_normals()) {
      const Vec3& n = cloud.normals[i];
      std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", p.x(), p.y(), p.z(), n.x(), n.y(),
                   n.z());
    } else {
      std::fprintf(f, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    }
  }
  std::fclose(f);
}

}  // namespace modnet
