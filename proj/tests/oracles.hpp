#pragma once

// Independent reference implementations used as test oracles. These must not
// share code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "modnet/point_cloud.hpp"
#include "modnet/types.hpp"

namespace oracle {

using modnet::Vec3;

inline std::vector<int> brute_radius(const std::vector<Vec3>& pts, const Vec3& c, double r) {
  std::vector<int> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if ((pts[i] - c).squaredNorm() < r * r) out.push_back(static_cast<int>(i));
  return out;
}

inline std::vector<int> brute_knn(const std::vector<Vec3>& pts, const Vec3& c, int k) {
  std::vector<std::pair<double, int>> all;
  for (std::size_t i = 0; i < pts.size(); ++i)
    all.emplace_back((pts[i] - c).squaredNorm(), static_cast<int>(i));
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(all[static_cast<std::size_t>(i)].second);
  return out;
}

inline modnet::Mat3 covariance_of(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  modnet::Mat3 cov = modnet::Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
  return cov / static_cast<double>(pts.size());
}

// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations,
// independent of Eigen's solver.
inline std::array<double, 3> jacobi_eigenvalues(modnet::Mat3 a) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        modnet::Mat3 rot = modnet::Mat3::Identity();
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
      }
  }
  std::array<double, 3> ev{a(0, 0), a(1, 1), a(2, 2)};
  std::sort(ev.begin(), ev.end(), std::greater<double>());
  return ev;
}

inline double brute_chamfer(const modnet::PointCloud& f, const modnet::PointCloud& g) {
  double sum_g = 0.0;
  for (const Vec3& p : g.points) {
    double best = (p - f.points[0]).squaredNorm();
    for (const Vec3& q : f.points) best = std::min(best, (p - q).squaredNorm());
    sum_g += best;
  }
  double sum_f = 0.0;
  for (const Vec3& q : f.points) {
    double best = (q - g.points[0]).squaredNorm();
    for (const Vec3& p : g.points) best = std::min(best, (q - p).squaredNorm());
    sum_f += best;
  }
  return sum_g / static_cast<double>(g.size()) + sum_f / static_cast<double>(f.size());
}

inline double brute_mse(const modnet::PointCloud& f, const modnet::PointCloud& g, int n) {
  double total = 0.0;
  for (const Vec3& p : g.points) {
    std::vector<std::pair<double, int>> all;
    for (std::size_t i = 0; i < f.points.size(); ++i)
      all.emplace_back((p - f.points[i]).squaredNorm(), static_cast<int>(i));
    std::sort(all.begin(), all.end());
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += all[static_cast<std::size_t>(i)].first;
    total += acc / static_cast<double>(n);
  }
  return total / static_cast<double>(g.size());
}

}  // namespace oracle
