#include "geodiff/toy/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geodiff/random.hpp"

namespace geodiff::toy {

namespace {

struct Hit {
  double depth = std::numeric_limits<double>::infinity();
  std::array<double, 3> normal{0.0, 0.0, 1.0};
  Color albedo{0.0, 0.0, 0.0};
};

std::array<double, 3> unit(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  return {x / n, y / n, z / n};
}

Color random_color(Rng& rng) { return {0.2 + 0.8 * rng.uniform(), 0.2 + 0.8 * rng.uniform(), 0.2 + 0.8 * rng.uniform()}; }

}  // namespace

ToyScene render_scene(const SceneSpec& spec, int height, int width, std::uint64_t seed) {
  require(!spec.planes.empty(), "scene needs at least one plane");
  const auto light = unit(spec.light[0], spec.light[1], spec.light[2]);
  ToyScene scene{FieldStack(3, height, width), Field2D(height, width), FieldStack(3, height, width), seed};
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      Hit hit;
      for (const PlaneSurface& p : spec.planes) {
        const double d = p.z0 + p.slope_x * c + p.slope_y * r;
        if (d < hit.depth) hit = {d, unit(-p.slope_x, -p.slope_y, 1.0), p.albedo};
      }
      for (const SphereSurface& s : spec.spheres) {
        const double dx = c - s.cx;
        const double dy = r - s.cy;
        const double h2 = s.radius * s.radius - dx * dx - dy * dy;
        if (h2 <= 0.0) continue;
        const double h = std::sqrt(h2);
        const double d = s.z_center - h;
        if (d < hit.depth) hit = {d, {-dx / s.radius, -dy / s.radius, h / s.radius}, s.albedo};
      }
      if (!(hit.depth > 0.0)) throw InvalidArgument("scene depth must stay positive");
      scene.depth(r, c) = hit.depth;
      const double lambert = std::max(
          0.0, hit.normal[0] * light[0] + hit.normal[1] * light[1] + hit.normal[2] * light[2]);
      const double shade = spec.ambient + (1.0 - spec.ambient) * lambert;
      for (int ch = 0; ch < 3; ++ch) {
        scene.rgb.plane(ch)(r, c) = std::clamp(hit.albedo[static_cast<std::size_t>(ch)] * shade, 0.0, 1.0);
        scene.normals.plane(ch)(r, c) = hit.normal[static_cast<std::size_t>(ch)];
      }
    }
  }
  return scene;
}

SceneSpec random_scene_spec(std::uint64_t seed, int height, int width) {
  require(height >= 16 && width >= 16, "toy scenes need at least 16x16 pixels");
  Rng rng(split_seed(seed, 0x5ce4e));
  SceneSpec spec;
  const double extent = std::max(height, width);
  const int planes = rng.uniform_int(1, 3);
  for (int i = 0; i < planes; ++i) {
    const double z0 = 6.0 + 4.0 * rng.uniform();
    const double sx = (rng.uniform() * 2.0 - 1.0) * 2.0 / extent;
    const double sy = (rng.uniform() * 2.0 - 1.0) * 2.0 / extent;
    spec.planes.push_back({z0, sx, sy, random_color(rng)});
  }
  const int spheres = rng.uniform_int(0, 2);
  const double short_side = std::min(height, width);
  for (int i = 0; i < spheres; ++i) {
    const double radius = (0.15 + 0.2 * rng.uniform()) * short_side;
    const double cx = rng.uniform() * (width - 1);
    const double cy = rng.uniform() * (height - 1);
    const double zc = 2.0 + 1.5 * rng.uniform() + radius / extent;
    spec.spheres.push_back({cx, cy, radius, zc + radius, random_color(rng)});
  }
  return spec;
}

ToyScene gen_scene(std::uint64_t seed, int height, int width) {
  return render_scene(random_scene_spec(seed, height, width), height, width, seed);
}

FieldStack normals_from_depth(const Field2D& depth) {
  const int h = depth.height();
  const int w = depth.width();
  require(h >= 2 && w >= 2, "normals_from_depth needs at least 2x2 pixels");
  FieldStack out(3, h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int c0 = std::max(c - 1, 0);
      const int c1 = std::min(c + 1, w - 1);
      const int r0 = std::max(r - 1, 0);
      const int r1 = std::min(r + 1, h - 1);
      const double gx = (depth(r, c1) - depth(r, c0)) / (c1 - c0);
      const double gy = (depth(r1, c) - depth(r0, c)) / (r1 - r0);
      const auto n = unit(-gx, -gy, 1.0);
      for (int ch = 0; ch < 3; ++ch) out.plane(ch)(r, c) = n[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

}  // namespace geodiff::toy
