#include "modnet/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace modnet {

namespace {

Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  if (len <= 0.0) throw std::runtime_error("zero-area triangle in generated mesh");
  return n / len;
}

void finalize_normals(TriMesh& mesh) {
  mesh.face_normals.clear();
  mesh.face_normals.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles)
    mesh.face_normals.push_back(
        triangle_normal(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]));
}

TriMesh make_cube(double edge) {
  const double h = edge / 2.0;
  TriMesh m;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        m.vertices.emplace_back(x ? h : -h, y ? h : -h, z ? h : -h);
  // Quads with outward winding, split into two triangles each.
  const int quads[6][4] = {
      {0, 2, 3, 1},  // z = -h
      {4, 5, 7, 6},  // z = +h
      {0, 1, 5, 4},  // y = -h
      {2, 6, 7, 3},  // y = +h
      {0, 4, 6, 2},  // x = -h
      {1, 3, 7, 5},  // x = +h
  };
  for (const auto& q : quads) {
    m.triangles.push_back({q[0], q[1], q[2]});
    m.triangles.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriMesh make_sphere(double radius, int resolution) {
  const int stacks = std::max(3, resolution);
  const int slices = std::max(3, 2 * resolution);
  TriMesh m;
  m.vertices.emplace_back(0.0, 0.0, radius);  // north pole
  for (int i = 1; i < stacks; ++i) {
    const double phi = M_PI * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double theta = 2.0 * M_PI * j / slices;
      m.vertices.emplace_back(radius * std::sin(phi) * std::cos(theta),
                              radius * std::sin(phi) * std::sin(theta), radius * std::cos(phi));
    }
  }
  m.vertices.emplace_back(0.0, 0.0, -radius);  // south pole
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) m.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i < stacks - 1; ++i)
    for (int j = 0; j < slices; ++j) {
      m.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  for (int j = 0; j < slices; ++j)
    m.triangles.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return m;
}

TriMesh make_cylinder(double radius, double height, int resolution) {
  const int slices = std::max(3, 4 * resolution);
  const double h = height / 2.0;
  TriMesh m;
  for (int j = 0; j < slices; ++j) {
    const double theta = 2.0 * M_PI * j / slices;
    m.vertices.emplace_back(radius * std::cos(theta), radius * std::sin(theta), -h);
  }
  for (int j = 0; j < slices; ++j) {
    const double theta = 2.0 * M_PI * j / slices;
    m.vertices.emplace_back(radius * std::cos(theta), radius * std::sin(theta), h);
  }
  const int bot_center = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -h);
  const int top_center = bot_center + 1;
  m.vertices.emplace_back(0.0, 0.0, h);
  auto lo = [&](int j) { return j % slices; };
  auto hi = [&](int j) { return slices + j % slices; };
  for (int j = 0; j < slices; ++j) {
    m.triangles.push_back({lo(j), lo(j + 1), hi(j + 1)});
    m.triangles.push_back({lo(j), hi(j + 1), hi(j)});
    m.triangles.push_back({bot_center, lo(j + 1), lo(j)});
    m.triangles.push_back({top_center, hi(j), hi(j + 1)});
  }
  return m;
}

TriMesh make_torus(double major, double minor, int resolution) {
  const int nu = std::max(3, 3 * resolution);
  const int nv = std::max(3, 2 * resolution);
  TriMesh m;
  for (int i = 0; i < nu; ++i) {
    const double u = 2.0 * M_PI * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = 2.0 * M_PI * j / nv;
      m.vertices.emplace_back((major + minor * std::cos(v)) * std::cos(u),
                              (major + minor * std::cos(v)) * std::sin(u), minor * std::sin(v));
    }
  }
  auto at = [&](int i, int j) { return (i % nu) * nv + (j % nv); };
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      m.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  return m;
}

TriMesh make_icosahedron(double circumradius) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double s = circumradius / std::sqrt(1.0 + phi * phi);
  TriMesh m;
  const double a = s, b = s * phi;
  m.vertices = {{-a, b, 0},  {a, b, 0},  {-a, -b, 0}, {a, -b, 0}, {0, -a, b},  {0, a, b},
                {0, -a, -b}, {0, a, -b}, {b, 0, -a},  {b, 0, a},  {-b, 0, -a}, {-b, 0, a}};
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                 {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                 {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                 {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return m;
}

}  // namespace

double TriMesh::surface_area() const {
  double area = 0.0;
  for (const auto& t : triangles)
    area += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  return area;
}

double TriMesh::bbox_diag() const {
  if (vertices.empty()) return 0.0;
  Vec3 lo = vertices.front(), hi = vertices.front();
  for (const Vec3& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

ShapeKind parse_shape_kind(const std::string& name) {
  if (name == "cube") return ShapeKind::kCube;
  if (name == "sphere") return ShapeKind::kSphere;
  if (name == "cylinder") return ShapeKind::kCylinder;
  if (name == "torus") return ShapeKind::kTorus;
  if (name == "icosahedron") return ShapeKind::kIcosahedron;
  throw std::invalid_argument("unknown shape: " + name);
}

ShapeParams default_shape_params(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kCube: return {2.0, 0.0};
    case ShapeKind::kSphere: return {1.0, 0.0};
    case ShapeKind::kCylinder: return {0.7, 2.0};
    case ShapeKind::kTorus: return {1.0, 0.35};
    case ShapeKind::kIcosahedron: return {1.2, 0.0};
  }
  throw std::logic_error("unreachable");
}

TriMesh gen_shape(ShapeKind kind, const ShapeParams& params, int resolution) {
  if (resolution < 1) throw std::invalid_argument("resolution must be at least 1");
  const bool needs_b = kind == ShapeKind::kCylinder || kind == ShapeKind::kTorus;
  if (!(params.a > 0.0) || (needs_b && !(params.b > 0.0)))
    throw std::invalid_argument("shape dimensions must be positive");

  TriMesh m;
  switch (kind) {
    case ShapeKind::kCube: m = make_cube(params.a); break;
    case ShapeKind::kSphere: m = make_sphere(params.a, resolution); break;
    case ShapeKind::kCylinder: m = make_cylinder(params.a, params.b, resolution); break;
    case ShapeKind::kTorus:
      if (params.b >= params.a)
        throw std::invalid_argument("torus minor radius must be smaller than major radius");
      m = make_torus(params.a, params.b, resolution);
      break;
    case ShapeKind::kIcosahedron: m = make_icosahedron(params.a); break;
  }
  finalize_normals(m);
  return m;
}

PointCloud sample_surface(const TriMesh& mesh, int n, Rng& rng) {
  if (mesh.triangles.empty()) throw std::invalid_argument("cannot sample an empty mesh");
  if (n < 1) throw std::invalid_argument("sample count must be at least 1");

  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    total += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                       .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                       .norm();
    cumulative[i] = total;
  }

  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, total);
    const std::size_t tri =
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    const auto& t = mesh.triangles[std::min(tri, mesh.triangles.size() - 1)];
    const double sr = std::sqrt(rng.uniform());
    const double v = rng.uniform();
    const Vec3 p = (1.0 - sr) * mesh.vertices[t[0]] + sr * (1.0 - v) * mesh.vertices[t[1]] +
                   sr * v * mesh.vertices[t[2]];
    cloud.points.push_back(p);
    cloud.normals.push_back(mesh.face_normals[std::min(tri, mesh.triangles.size() - 1)]);
  }
  return cloud;
}

NoiseModel parse_noise_model(const std::string& name) {
  if (name == "gaussian") return NoiseModel::kGaussian;
  if (name == "laplace") return NoiseModel::kLaplace;
  if (name == "uniform") return NoiseModel::kUniform;
  if (name == "discrete") return NoiseModel::kDiscrete;
  throw std::invalid_argument("unknown noise model: " + name);
}

std::string noise_model_name(NoiseModel model) {
  switch (model) {
    case NoiseModel::kGaussian: return "gaussian";
    case NoiseModel::kLaplace: return "laplace";
    case NoiseModel::kUniform: return "uniform";
    case NoiseModel::kDiscrete: return "discrete";
  }
  throw std::logic_error("unreachable");
}

PointCloud add_noise(const PointCloud& cloud, const NoiseSpec& spec) {
  if (spec.sigma_frac < 0.0) throw std::invalid_argument("sigma fraction must be nonnegative");
  const double sigma = spec.sigma_frac * cloud.bbox_diag();
  PointCloud out;
  out.points = cloud.points;
  if (sigma == 0.0) return out;

  Rng rng = Rng::derive(spec.seed, {static_cast<std::uint64_t>(spec.model)});
  for (Vec3& p : out.points) {
    for (int c = 0; c < 3; ++c) {
      switch (spec.model) {
        case NoiseModel::kGaussian: p[c] += sigma * rng.normal(); break;
        case NoiseModel::kLaplace: p[c] += rng.laplace(sigma / std::sqrt(2.0)); break;
        case NoiseModel::kUniform:
          p[c] += rng.uniform(-std::sqrt(3.0) * sigma, std::sqrt(3.0) * sigma);
          break;
        case NoiseModel::kDiscrete:
          // Three-point lattice scaled so the per-coordinate variance is
          // sigma^2, matching the other models.
          p[c] += std::sqrt(1.5) * sigma * (static_cast<double>(rng.below(3)) - 1.0);
          break;
      }
    }
  }
  return out;
}

void write_off(const std::string& path, const TriMesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  std::fprintf(f, "OFF\n%zu %zu 0\n", mesh.vertices.size(), mesh.triangles.size());
  for (const Vec3& v : mesh.vertices) std::fprintf(f, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
  for (const auto& t : mesh.triangles) std::fprintf(f, "3 %d %d %d\n", t[0], t[1], t[2]);
  std::fclose(f);
}

TriMesh read_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file: " + path);
  std::string header;
  in >> header;
  if (header != "OFF") throw std::runtime_error(path + ": not an OFF file");
  std::size_t nv = 0, nf = 0, ne = 0;
  in >> nv >> nf >> ne;
  if (!in) throw std::runtime_error(path + ": bad OFF counts line");
  TriMesh m;
  m.vertices.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) in >> m.vertices[i].x() >> m.vertices[i].y() >> m.vertices[i].z();
  m.triangles.resize(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    int k = 0;
    in >> k >> m.triangles[i][0] >> m.triangles[i][1] >> m.triangles[i][2];
    if (k != 3) throw std::runtime_error(path + ": only triangle faces are supported");
  }
  if (!in) throw std::runtime_error(path + ": truncated OFF file");
  for (const auto& t : m.triangles)
    for (int idx : t)
      if (idx < 0 || idx >= static_cast<int>(nv))
        throw std::runtime_error(path + ": face index out of range");
  finalize_normals(m);
  return m;
}

}  // namespace modnet
