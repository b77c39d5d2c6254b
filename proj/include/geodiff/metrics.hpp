#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "geodiff/grid.hpp"

namespace geodiff {

/// Named scalar metrics plus the settings that produced them.
struct MetricsReport {
  std::map<std::string, double> values;
  std::size_t pixel_count = 0;
  std::map<std::string, std::string> config;
};

/// Mean of |a - d| / d over valid pixels, in percent.
double absrel(const Field2D& aligned, const Field2D& gt);

/// Percentage of valid pixels with max(a/d, d/a) < 1.25.
double delta1(const Field2D& aligned, const Field2D& gt);

struct AngularMetrics {
  double mean_deg;
  double pct_below_11_25;
};

/// Per-pixel angle between unit normals. Inputs whose norm deviates from 1 by
/// more than 1e-3 are rejected.
AngularMetrics angular_metrics(const FieldStack& pred, const FieldStack& gt);

enum class EdgeSource { pred, gt };

struct EdgeMap {
  Field2D edges;  // 1 on edge pixels, 0 elsewhere
  double threshold;
  EdgeSource source;

  std::size_t count() const;
};

inline constexpr double kDefaultEdgeThreshold = 0.1;
inline constexpr double kDefaultDbeTruncation = 10.0;
inline constexpr int kDefaultMatchRadius = 1;

/// Edges where the Sobel gradient magnitude (kernel normalized by 1/8, so a
/// unit step reads as 0.5) of the min-max normalized depth exceeds threshold.
EdgeMap extract_depth_edges(const Field2D& depth, double threshold = kDefaultEdgeThreshold,
                            EdgeSource source = EdgeSource::pred);

/// Exact Euclidean distance from every pixel to the nearest nonzero pixel of
/// `edges`; +inf everywhere when there is none.
Field2D distance_transform(const Field2D& edges);

struct DbeResult {
  double accuracy;      // pred edges -> nearest gt edge
  double completeness;  // gt edges -> nearest pred edge
};

DbeResult dbe(const EdgeMap& pred_edges, const EdgeMap& gt_edges,
              double trunc_px = kDefaultDbeTruncation);

struct EdgePrecisionRecall {
  double precision;
  double recall;
};

/// Matching uses Chebyshev distance <= match_px.
EdgePrecisionRecall edge_pr(const EdgeMap& pred_edges, const EdgeMap& gt_edges,
                            int match_px = kDefaultMatchRadius);

inline constexpr double kPsnrCap = 99.0;

double psnr(const FieldStack& pred, const FieldStack& gt, double peak = 1.0);

/// Mean SSIM over every full 11x11 Gaussian (sigma 1.5) window.
double ssim(const Field2D& pred, const Field2D& gt);

struct DepthEvalOptions {
  /// Aligned predictions are clipped from below to this value before the
  /// ratio metrics, which are undefined for non-positive depth.
  double min_depth = 1e-6;
};

/// Least-squares aligns pred to gt, then reports absrel and delta1.
MetricsReport evaluate_depth(const Field2D& pred, const Field2D& gt,
                             const DepthEvalOptions& options = {});

MetricsReport evaluate_normals(const FieldStack& pred, const FieldStack& gt);

struct ImageEvalOptions {
  double peak = 1.0;
  /// Scale-align to gt and normalize to the unit range first (shading).
  bool scale_align_first = false;
};

MetricsReport evaluate_image(const FieldStack& pred, const FieldStack& gt,
                             const ImageEvalOptions& options = {});

struct EdgeEvalOptions {
  double threshold = kDefaultEdgeThreshold;
  double trunc_px = kDefaultDbeTruncation;
  int match_px = kDefaultMatchRadius;
};

MetricsReport evaluate_edges(const Field2D& pred, const Field2D& gt,
                             const EdgeEvalOptions& options = {});

}  // namespace geodiff
