#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "modnet/metrics.hpp"
#include "modnet/rng.hpp"
#include "oracles.hpp"

using namespace modnet;

namespace {

PointCloud random_cloud(int n, Rng& rng, double extent = 1.0) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i)
    cloud.points.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                              rng.uniform(-extent, extent));
  return cloud;
}

}  // namespace

TEST_CASE("chamfer distance basics") {
  const PointCloud a({{0, 0, 0}});
  const PointCloud b({{1, 0, 0}});
  CHECK(chamfer_distance(a, b) == 2.0);  // 1 + 1, exactly
  CHECK(chamfer_distance(a, a) == 0.0);

  Rng rng(1);
  const PointCloud c = random_cloud(100, rng);
  CHECK(chamfer_distance(c, c) == 0.0);
  CHECK_THROWS(chamfer_distance(PointCloud{}, a));
}

TEST_CASE("chamfer matches brute force and is symmetric") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud a = random_cloud(50 + static_cast<int>(rng.below(450)), rng);
    const PointCloud b = random_cloud(50 + static_cast<int>(rng.below(450)), rng);
    const double cd = chamfer_distance(a, b);
    CHECK(std::abs(cd - oracle::brute_chamfer(a, b)) <= 1e-12);
    CHECK(std::abs(cd - chamfer_distance(b, a)) <= 1e-15);
  }
}

TEST_CASE("mse metric") {
  // Ten coincident filtered points at the single ground-truth point.
  PointCloud filtered;
  for (int i = 0; i < 10; ++i) filtered.points.emplace_back(0.5, 0.5, 0.5);
  const PointCloud gt({{0.5, 0.5, 0.5}});
  CHECK(mse_metric(filtered, gt) == 0.0);

  CHECK_THROWS(mse_metric(gt, gt));  // fewer filtered points than neighbors

  Rng rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const PointCloud f = random_cloud(200, rng);
    const PointCloud g = random_cloud(300, rng);
    CHECK(std::abs(mse_metric(f, g) - oracle::brute_mse(f, g, 10)) <= 1e-12);
  }
}

TEST_CASE("point-triangle distance exact cases") {
  const Vec3 a(-1, -1, 0), b(3, -1, 0), c(-1, 3, 0);
  CHECK(point_triangle_distance({0, 0, 1}, a, b, c) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(point_triangle_distance(a, a, b, c) == 0.0);
  CHECK(point_triangle_distance(b, a, b, c) == 0.0);
  // Closest to an edge and to a vertex.
  CHECK(point_triangle_distance({-2, -1, 0}, a, b, c) == doctest::Approx(1.0));
  CHECK(point_triangle_distance({-1, -2, 3}, a, b, c) ==
        doctest::Approx(std::sqrt(1.0 + 9.0)));
  CHECK_THROWS(point_triangle_distance({0, 0, 0}, a, a, b));  // degenerate
}

namespace {

// Barycentric sampling oracle: a 100x100 grid refined around its own minimum
// five times (the distance to a convex set has a single basin, so zooming
// cannot lose the global minimum). Well over 1e5 samples per query.
double sampled_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  double u_lo = 0.0, u_hi = 1.0, v_lo = 0.0, v_hi = 1.0;
  double best = std::numeric_limits<double>::infinity();
  double bu = 0.0, bv = 0.0;
  constexpr int kGrid = 100;
  for (int level = 0; level < 6; ++level) {
    for (int i = 0; i <= kGrid; ++i)
      for (int j = 0; j <= kGrid; ++j) {
        double u = u_lo + (u_hi - u_lo) * i / kGrid;
        double v = v_lo + (v_hi - v_lo) * j / kGrid;
        if (u < 0 || v < 0 || u + v > 1.0) continue;
        const double d = (p - (a + u * (b - a) + v * (c - a))).norm();
        if (d < best) {
          best = d;
          bu = u;
          bv = v;
        }
      }
    const double su = 2.0 * (u_hi - u_lo) / kGrid;
    const double sv = 2.0 * (v_hi - v_lo) / kGrid;
    u_lo = std::max(0.0, bu - su);
    u_hi = std::min(1.0, bu + su);
    v_lo = std::max(0.0, bv - sv);
    v_hi = std::min(1.0, bv + sv);
  }
  return best;
}

}  // namespace

TEST_CASE("point-triangle distance matches a dense sampling oracle") {
  Rng rng(11);
  int checked = 0;
  while (checked < 1000) {
    Vec3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Vec3 b(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    Vec3 c(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if ((b - a).cross(c - a).norm() < 1e-6) continue;
    const Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const double fast = point_triangle_distance(p, a, b, c);
    const double sampled = sampled_triangle_distance(p, a, b, c);
    CHECK(fast <= sampled + 1e-12);  // sampling can only overestimate
    CHECK(std::abs(fast - sampled) < 1e-6);
    ++checked;
  }
}

TEST_CASE("p2m basics and brute-force equivalence") {
  const TriMesh plane = [] {
    TriMesh m;
    m.vertices = {{-5, -5, 0}, {5, -5, 0}, {5, 5, 0}, {-5, 5, 0}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    m.face_normals = {{0, 0, 1}, {0, 0, 1}};
    return m;
  }();

  // Points sampled on the mesh -> 0; unit-offset points above it -> 1.
  Rng rng(13);
  PointCloud on, above;
  for (int i = 0; i < 100; ++i) {
    on.points.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4), 0.0);
    above.points.emplace_back(rng.uniform(-4, 4), rng.uniform(-4, 4), 1.0);
  }
  CHECK(p2m_metric(on, plane) <= 1e-12);
  CHECK(p2m_metric(above, plane) == doctest::Approx(1.0).epsilon(1e-12));

  const TriMesh blob = gen_shape(ShapeKind::kTorus, {1.0, 0.4}, 5);
  for (int trial = 0; trial < 6; ++trial) {
    const PointCloud cloud = random_cloud(300, rng, 1.6);
    const TriangleBvh bvh(blob);
    double brute_total = 0.0;
    for (const Vec3& p : cloud.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& t : blob.triangles)
        best = std::min(best, point_triangle_sqdist(p, blob.vertices[t[0]], blob.vertices[t[1]],
                                                    blob.vertices[t[2]]));
      CHECK(bvh.squared_distance(p) == best);  // identical arithmetic either way
      brute_total += best;
    }
    CHECK(std::abs(p2m_metric(cloud, blob) - brute_total / cloud.size()) <= 1e-12);
  }
  CHECK_THROWS(p2m_metric(PointCloud{}, blob));
  CHECK_THROWS(p2m_metric(on, TriMesh{}));
}

TEST_CASE("metrics are invariant under rigid motion") {
  Rng rng(17);
  const PointCloud a = random_cloud(400, rng);
  const PointCloud b = random_cloud(500, rng);
  TriMesh mesh = gen_shape(ShapeKind::kCube, {1.5, 0}, 1);

  Mat3 rot = Eigen::AngleAxisd(0.7, Vec3(1, 1, 2).normalized()).toRotationMatrix();
  const Vec3 shift(0.3, -0.7, 1.9);
  auto move_cloud = [&](const PointCloud& c) {
    PointCloud out;
    for (const Vec3& p : c.points) out.points.push_back(rot * p + shift);
    return out;
  };
  TriMesh moved_mesh = mesh;
  for (Vec3& v : moved_mesh.vertices) v = rot * v + shift;

  const double cd0 = chamfer_distance(a, b);
  const double cd1 = chamfer_distance(move_cloud(a), move_cloud(b));
  CHECK(std::abs(cd1 - cd0) / cd0 < 1e-9);

  const double mse0 = mse_metric(a, b);
  const double mse1 = mse_metric(move_cloud(a), move_cloud(b));
  CHECK(std::abs(mse1 - mse0) / mse0 < 1e-9);

  const double p0 = p2m_metric(a, mesh);
  const double p1 = p2m_metric(move_cloud(a), moved_mesh);
  CHECK(std::abs(p1 - p0) / p0 < 1e-9);
}

TEST_CASE("chamfer grows with noise level in expectation") {
  const TriMesh mesh = gen_shape(ShapeKind::kSphere, {1.0, 0.0}, 16);
  Rng rng(21);
  const PointCloud clean = sample_surface(mesh, 1500, rng);
  PointCloud bare;
  bare.points = clean.points;

  std::array<double, 3> means{};
  const std::array<double, 3> sigmas{0.005, 0.01, 0.015};
  for (int level = 0; level < 3; ++level) {
    double total = 0.0;
    for (int seed = 0; seed < 10; ++seed) {
      const PointCloud noisy =
          add_noise(bare, {NoiseModel::kGaussian, sigmas[static_cast<std::size_t>(level)],
                           static_cast<std::uint64_t>(seed)});
      total += chamfer_distance(noisy, bare);
    }
    means[static_cast<std::size_t>(level)] = total / 10.0;
  }
  CHECK(means[0] < means[1]);
  CHECK(means[1] < means[2]);
}

TEST_CASE("evaluate bundles the metrics") {
  Rng rng(23);
  const TriMesh mesh = gen_shape(ShapeKind::kCube, {2.0, 0}, 1);
  const PointCloud cloud = sample_surface(mesh, 300, rng);
  PointCloud bare;
  bare.points = cloud.points;
  const MetricReport rep = evaluate(bare, bare, &mesh);
  CHECK(rep.cd == 0.0);
  REQUIRE(rep.p2m.has_value());
  CHECK(*rep.p2m <= 1e-12);
  CHECK(rep.n_filtered == 300);
  const MetricReport no_mesh = evaluate(bare, bare);
  CHECK_FALSE(no_mesh.p2m.has_value());
}
