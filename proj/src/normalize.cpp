#include "geodiff/normalize.hpp"

#include <cmath>

namespace geodiff {

NormalizedDepth normalize_depth(const Field2D& depth) {
  require(depth.valid_count() >= 2, "normalize_depth: need at least two valid pixels");
  const DepthNormalization norm{percentile(depth, 2.0), percentile(depth, 98.0)};
  if (!(norm.d98 > norm.d2)) throw NumericalError("degenerate depth range");
  return {normalize_depth(depth, norm), norm};
}

Field2D normalize_depth(const Field2D& depth, const DepthNormalization& norm) {
  if (!(norm.d98 > norm.d2)) throw NumericalError("degenerate depth range");
  const double range = norm.d98 - norm.d2;
  Field2D out = depth;
  for (double& v : out.values()) v = ((v - norm.d2) / range - 0.5) * 2.0;
  return out;
}

Field2D denormalize_depth(const Field2D& normalized, const DepthNormalization& norm) {
  require(norm.d98 > norm.d2, "denormalize_depth: invalid normalization");
  const double range = norm.d98 - norm.d2;
  Field2D out = normalized;
  for (double& v : out.values()) v = (v / 2.0 + 0.5) * range + norm.d2;
  return out;
}

FieldStack replicate_channels(const Field2D& field) {
  return FieldStack(std::vector<Field2D>{field, field, field});
}

Field2D average_channels(const FieldStack& stack) {
  require(stack.channels() == 3, "average_channels: expected 3 channels");
  Field2D out = stack.plane(0);
  auto b = stack.plane(1).values();
  auto c = stack.plane(2).values();
  auto dst = out.values();
  // Mean as an offset from the first plane so identical planes come back exactly.
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += ((b[i] - dst[i]) + (c[i] - dst[i])) / 3.0;
  return out;
}

NormalizedNormals normalize_normals(const FieldStack& normals) {
  require(normals.channels() == 3, "normalize_normals: expected 3 channels");
  NormalizedNormals result{normals, 0};
  auto x = result.normals.plane(0).values();
  auto y = result.normals.plane(1).values();
  auto z = result.normals.plane(2).values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double len = std::sqrt(x[i] * x[i] + y[i] * y[i] + z[i] * z[i]);
    if (len < kDegenerateNormal) {
      x[i] = 0.0;
      y[i] = 0.0;
      z[i] = 1.0;
      ++result.degenerate_pixels;
    } else if (len != 1.0) {
      x[i] /= len;
      y[i] /= len;
      z[i] /= len;
    }
  }
  return result;
}

}  // namespace geodiff
