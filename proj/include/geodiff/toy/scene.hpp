#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "geodiff/grid.hpp"

namespace geodiff::toy {

using Color = std::array<double, 3>;

/// depth(row, col) = z0 + slope_x * col + slope_y * row
struct PlaneSurface {
  double z0;
  double slope_x;
  double slope_y;
  Color albedo;
};

/// Sphere seen orthographically; its front surface has depth
/// z_center - sqrt(r^2 - (col - cx)^2 - (row - cy)^2).
struct SphereSurface {
  double cx;
  double cy;
  double radius;
  double z_center;
  Color albedo;
};

struct SceneSpec {
  std::vector<PlaneSurface> planes;  // at least one; the nearest surface wins
  std::vector<SphereSurface> spheres;
  std::array<double, 3> light{-0.3, -0.4, 0.866};
  double ambient = 0.2;
};

struct ToyScene {
  FieldStack rgb;      // Lambertian shading in [0, 1]
  Field2D depth;       // strictly positive
  FieldStack normals;  // analytic unit normals, proportional to (-dd/dx, -dd/dy, 1)
  std::uint64_t seed = 0;
};

ToyScene render_scene(const SceneSpec& spec, int height, int width, std::uint64_t seed = 0);

/// 1-3 slanted planes and 0-2 spheres drawn from `seed`.
SceneSpec random_scene_spec(std::uint64_t seed, int height, int width);

ToyScene gen_scene(std::uint64_t seed, int height, int width);

/// Orthographic normals from central-difference depth gradients (one-sided
/// at the border), n = normalize(-dd/dx, -dd/dy, 1).
FieldStack normals_from_depth(const Field2D& depth);

}  // namespace geodiff::toy
