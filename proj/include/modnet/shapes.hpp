#pragma once

#include <array>
#include <string>
#include <vector>

#include "modnet/point_cloud.hpp"
#include "modnet/rng.hpp"
#include "modnet/types.hpp"

namespace modnet {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> face_normals;  // unit, consistent with winding

  double surface_area() const;
  double bbox_diag() const;
};

enum class ShapeKind { kCube, kSphere, kCylinder, kTorus, kIcosahedron };

/// Per-kind dimensions:
///   cube: a = edge; sphere: a = radius; cylinder: a = radius, b = height;
///   torus: a = major radius, b = minor radius; icosahedron: a = circumradius.
struct ShapeParams {
  double a = 0.0;
  double b = 0.0;
};

ShapeKind parse_shape_kind(const std::string& name);
ShapeParams default_shape_params(ShapeKind kind);

/// Watertight triangulation with outward face normals.
TriMesh gen_shape(ShapeKind kind, const ShapeParams& params, int resolution);

/// n area-uniform samples; each point carries its triangle's face normal.
PointCloud sample_surface(const TriMesh& mesh, int n, Rng& rng);

enum class NoiseModel { kGaussian, kLaplace, kUniform, kDiscrete };

NoiseModel parse_noise_model(const std::string& name);
std::string noise_model_name(NoiseModel model);

/// Additive per-point, per-coordinate noise with scale sigma = sigma_frac *
/// bbox diagonal. Every model is calibrated to per-coordinate standard
/// deviation sigma; discrete noise draws each coordinate from {-s, 0, +s}
/// with equal probability.
struct NoiseSpec {
  NoiseModel model = NoiseModel::kGaussian;
  double sigma_frac = 0.0;
  std::uint64_t seed = 0;
};

/// Perturbed copy of the cloud; normals are dropped from the output.
PointCloud add_noise(const PointCloud& cloud, const NoiseSpec& spec);

// ASCII OFF: header "OFF", counts line "V F 0", vertex lines, faces "3 i j k".
void write_off(const std::string& path, const TriMesh& mesh);
TriMesh read_off(const std::string& path);

}  // namespace modnet
