#pragma once

#include <cstddef>

#include "geodiff/grid.hpp"

namespace geodiff {

/// Percentile anchors of an affine-invariant depth normalization.
struct DepthNormalization {
  double d2;
  double d98;
};

struct NormalizedDepth {
  Field2D depth;
  DepthNormalization norm;
};

/// Maps the 2nd/98th percentiles of the valid pixels to -1/+1. Values outside
/// the anchors are not clamped.
NormalizedDepth normalize_depth(const Field2D& depth);
Field2D normalize_depth(const Field2D& depth, const DepthNormalization& norm);
Field2D denormalize_depth(const Field2D& normalized, const DepthNormalization& norm);

FieldStack replicate_channels(const Field2D& field);
Field2D average_channels(const FieldStack& stack);

struct NormalizedNormals {
  FieldStack normals;
  std::size_t degenerate_pixels = 0;
};

/// Vectors shorter than this are treated as having no direction.
inline constexpr double kDegenerateNormal = 1e-8;

/// Unit-normalizes each pixel; degenerate vectors become (0, 0, 1).
NormalizedNormals normalize_normals(const FieldStack& normals);

}  // namespace geodiff
