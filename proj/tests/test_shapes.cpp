#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "modnet/rng.hpp"
#include "modnet/shapes.hpp"

using namespace modnet;

namespace {

int euler_characteristic(const TriMesh& m) {
  std::set<std::pair<int, int>> edges;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[static_cast<std::size_t>(e)];
      const int b = t[static_cast<std::size_t>((e + 1) % 3)];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  return static_cast<int>(m.vertices.size()) - static_cast<int>(edges.size()) +
         static_cast<int>(m.triangles.size());
}

// Watertight: every directed edge appears once and its reverse exists.
bool watertight(const TriMesh& m) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[static_cast<std::size_t>(e)];
      const int b = t[static_cast<std::size_t>((e + 1) % 3)];
      ++directed[{a, b}];
    }
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    if (directed.find({edge.second, edge.first}) == directed.end()) return false;
  }
  return true;
}

Vec3 centroid(const TriMesh& m, std::size_t f) {
  const auto& t = m.triangles[f];
  return (m.vertices[static_cast<std::size_t>(t[0])] + m.vertices[static_cast<std::size_t>(t[1])] +
          m.vertices[static_cast<std::size_t>(t[2])]) /
         3.0;
}

}  // namespace

TEST_CASE("cube has 12 triangles and analytic area") {
  const TriMesh cube = gen_shape(ShapeKind::kCube, {2.0, 0.0}, 1);
  CHECK(cube.triangles.size() == 12);
  CHECK(cube.surface_area() == doctest::Approx(24.0));
  CHECK(watertight(cube));
  CHECK(euler_characteristic(cube) == 2);
  for (std::size_t f = 0; f < cube.triangles.size(); ++f) {
    CHECK(cube.face_normals[f].norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cube.face_normals[f].dot(centroid(cube, f)) > 0.0);  // outward
  }
}

TEST_CASE("sphere area converges to 4 pi r^2") {
  const double r = 1.0;
  const TriMesh coarse = gen_shape(ShapeKind::kSphere, {r, 0.0}, 8);
  const TriMesh fine = gen_shape(ShapeKind::kSphere, {r, 0.0}, 48);
  const double target = 4.0 * M_PI * r * r;
  CHECK(std::abs(fine.surface_area() - target) / target < 0.01);
  CHECK(fine.surface_area() > coarse.surface_area());  // inscribed areas increase
  CHECK(watertight(fine));
  CHECK(euler_characteristic(fine) == 2);
  for (std::size_t f = 0; f < fine.triangles.size(); ++f)
    CHECK(fine.face_normals[f].dot(centroid(fine, f)) > 0.0);
}

TEST_CASE("torus is a genus-1 surface") {
  const TriMesh torus = gen_shape(ShapeKind::kTorus, {2.0, 0.5}, 16);
  CHECK(euler_characteristic(torus) == 0);
  CHECK(watertight(torus));
  for (std::size_t f = 0; f < torus.triangles.size(); ++f) {
    const Vec3 c = centroid(torus, f);
    const Vec3 tube_center = Vec3(c.x(), c.y(), 0).normalized() * 2.0;
    CHECK(torus.face_normals[f].dot(c - tube_center) > 0.0);
  }
}

TEST_CASE("cylinder and icosahedron are closed and outward") {
  const TriMesh cyl = gen_shape(ShapeKind::kCylinder, {0.7, 2.0}, 12);
  CHECK(watertight(cyl));
  CHECK(euler_characteristic(cyl) == 2);
  for (std::size_t f = 0; f < cyl.triangles.size(); ++f)
    CHECK(cyl.face_normals[f].dot(centroid(cyl, f)) > 0.0);

  const TriMesh ico = gen_shape(ShapeKind::kIcosahedron, {1.2, 0.0}, 1);
  CHECK(ico.vertices.size() == 12);
  CHECK(ico.triangles.size() == 20);
  CHECK(watertight(ico));
  for (const Vec3& v : ico.vertices) CHECK(v.norm() == doctest::Approx(1.2));
  for (std::size_t f = 0; f < ico.triangles.size(); ++f)
    CHECK(ico.face_normals[f].dot(centroid(ico, f)) > 0.0);
}

TEST_CASE("shape errors") {
  CHECK_THROWS(gen_shape(ShapeKind::kCube, {-1.0, 0.0}, 1));
  CHECK_THROWS(gen_shape(ShapeKind::kSphere, {1.0, 0.0}, 0));
  CHECK_THROWS(gen_shape(ShapeKind::kTorus, {0.5, 0.9}, 8));
  CHECK_THROWS(parse_shape_kind("dodecahedron"));
}

TEST_CASE("surface sampling stays on the surface") {
  TriMesh square;
  square.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  square.triangles = {{0, 1, 2}, {0, 2, 3}};
  square.face_normals = {{0, 0, 1}, {0, 0, 1}};

  Rng rng(1);
  const PointCloud cloud = sample_surface(square, 1000, rng);
  REQUIRE(cloud.size() == 1000);
  REQUIRE(cloud.has_normals());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    CHECK(p.z() == 0.0);
    CHECK(p.x() >= 0.0);
    CHECK(p.x() <= 1.0);
    CHECK(p.y() >= 0.0);
    CHECK(p.y() <= 1.0);
    CHECK(cloud.normals[i].norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("triangle choice is proportional to area") {
  // Areas 1 and 3; the larger should receive 75% of samples.
  TriMesh two;
  two.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {10, 0, 0}, {16, 0, 0}, {10, 1, 0}};
  two.triangles = {{0, 1, 2}, {3, 4, 5}};
  two.face_normals = {{0, 0, 1}, {0, 0, 1}};
  REQUIRE(two.surface_area() == doctest::Approx(4.0));

  Rng rng(9);
  const PointCloud cloud = sample_surface(two, 10000, rng);
  int on_large = 0;
  for (const Vec3& p : cloud.points)
    if (p.x() >= 10.0) ++on_large;
  const double frac = on_large / 10000.0;
  CHECK(std::abs(frac - 0.75) < 0.05);
}

TEST_CASE("area uniformity chi-square over 10 triangles") {
  // Ten side-by-side triangles with areas proportional to i+1; the triangle
  // id is recoverable from floor(x).
  TriMesh strip;
  for (int i = 0; i < 10; ++i) {
    const int base = static_cast<int>(strip.vertices.size());
    strip.vertices.emplace_back(i, 0.0, 0.0);
    strip.vertices.emplace_back(i + 0.999, 0.0, 0.0);
    strip.vertices.emplace_back(i, 2.0 * (i + 1) / 0.999, 0.0);
    strip.triangles.push_back({base, base + 1, base + 2});
    strip.face_normals.emplace_back(0, 0, 1);
  }
  const double total = strip.surface_area();

  Rng rng(5);
  const int n = 50000;
  const PointCloud cloud = sample_surface(strip, n, rng);
  std::array<int, 10> counts{};
  for (const Vec3& p : cloud.points) {
    const int id = std::min(9, std::max(0, static_cast<int>(std::floor(p.x()))));
    ++counts[static_cast<std::size_t>(id)];
  }
  double chi2 = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double area = 0.999 * (2.0 * (i + 1) / 0.999) / 2.0;
    const double expected = n * area / total;
    const double d = counts[static_cast<std::size_t>(i)] - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 27.877);  // chi-square critical value, df = 9, p = 0.001
}

TEST_CASE("sampling determinism") {
  const TriMesh mesh = gen_shape(ShapeKind::kSphere, {1.0, 0.0}, 12);
  Rng a(123), b(123);
  const PointCloud ca = sample_surface(mesh, 500, a);
  const PointCloud cb = sample_surface(mesh, 500, b);
  for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca.points[i] == cb.points[i]);
}

TEST_CASE("zero noise is the identity") {
  const TriMesh mesh = gen_shape(ShapeKind::kCube, {2.0, 0.0}, 1);
  Rng rng(3);
  const PointCloud clean = sample_surface(mesh, 200, rng);
  const PointCloud noisy = add_noise(clean, {NoiseModel::kGaussian, 0.0, 99});
  REQUIRE(noisy.size() == clean.size());
  CHECK_FALSE(noisy.has_normals());  // noisy clouds carry no normals
  for (std::size_t i = 0; i < clean.size(); ++i) CHECK(noisy.points[i] == clean.points[i]);
}

TEST_CASE("noise models hit the requested per-coordinate deviation") {
  // A 50k cloud; sigma is measured against the actual bbox diagonal.
  Rng rng(17);
  PointCloud cloud;
  const double side = 1.0 / std::sqrt(3.0);
  for (int i = 0; i < 50000; ++i)
    cloud.points.emplace_back(rng.uniform(0, side), rng.uniform(0, side), rng.uniform(0, side));
  const double sigma = 0.01 * cloud.bbox_diag();

  for (const NoiseModel model : {NoiseModel::kGaussian, NoiseModel::kLaplace,
                                 NoiseModel::kUniform, NoiseModel::kDiscrete}) {
    const PointCloud noisy = add_noise(cloud, {model, 0.01, 7});
    double sq = 0.0, mean = 0.0;
    const double n = 3.0 * static_cast<double>(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
      for (int c = 0; c < 3; ++c) {
        const double d = noisy.points[i][c] - cloud.points[i][c];
        mean += d / n;
        sq += d * d / n;
      }
    const double var = sq - mean * mean;
    INFO("model ", noise_model_name(model));
    CHECK(std::abs(var - sigma * sigma) < 0.10 * sigma * sigma);
    if (model == NoiseModel::kGaussian)
      CHECK(std::abs(std::sqrt(var) - sigma) < 0.05 * sigma);
    if (model == NoiseModel::kDiscrete) {
      const double step = std::sqrt(1.5) * sigma;
      for (std::size_t i = 0; i < 100; ++i)
        for (int c = 0; c < 3; ++c) {
          const double d = std::abs(noisy.points[i][c] - cloud.points[i][c]);
          CHECK((d == 0.0 || std::abs(d - step) < 1e-15));
        }
    }
  }
}

TEST_CASE("noise determinism is bit-exact") {
  const TriMesh mesh = gen_shape(ShapeKind::kTorus, {1.0, 0.3}, 10);
  Rng rng(4);
  const PointCloud clean = sample_surface(mesh, 1000, rng);
  const NoiseSpec spec{NoiseModel::kLaplace, 0.015, 42};
  const PointCloud a = add_noise(clean, spec);
  const PointCloud b = add_noise(clean, spec);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.points[i] == b.points[i]);
}

TEST_CASE("off round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "modnet_shapes_test";
  fs::create_directories(dir);
  const TriMesh mesh = gen_shape(ShapeKind::kIcosahedron, {1.0, 0.0}, 1);
  const std::string path = (dir / "ico.off").string();
  write_off(path, mesh);
  const TriMesh back = read_off(path);
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  REQUIRE(back.triangles.size() == mesh.triangles.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    CHECK(back.vertices[i] == mesh.vertices[i]);
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
    CHECK(back.triangles[i] == mesh.triangles[i]);
  fs::remove_all(dir);
}
