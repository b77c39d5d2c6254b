#include "geodiff/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace geodiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

bool both_valid(const Field2D& a, const Field2D& b, std::size_t i) { return a.valid(i) && b.valid(i); }

void require_positive_gt(const Field2D& gt, const Field2D& other) {
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (both_valid(gt, other, i) && !(gt[i] > 0.0)) {
      throw InvalidArgument("ground-truth depth must be positive on valid pixels");
    }
  }
}

// Stand-in for "no edge" inside the squared transform; larger than any
// squared pixel distance the transform can produce.
constexpr double kFar = 1e30;

// 1-D squared Euclidean distance transform of a sampled function
// (lower envelope of parabolas).
void distance_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                 std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  auto at = [&](int i) { return f[static_cast<std::size_t>(i)]; };
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    auto intersect = [&](int p) {
      return ((at(q) + static_cast<double>(q) * q) - (at(p) + static_cast<double>(p) * p)) / (2.0 * (q - p));
    };
    // z[0] = -inf stops the scan at k = 0.
    double s = intersect(v[static_cast<std::size_t>(k)]);
    while (s <= z[static_cast<std::size_t>(k)]) {
      --k;
      s = intersect(v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k + 1)] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = static_cast<double>(q - p) * (q - p) + at(p);
  }
}

Field2D dilate_chebyshev(const Field2D& edges, int radius) {
  const int h = edges.height();
  const int w = edges.width();
  Field2D rows(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double m = 0.0;
      for (int dc = std::max(0, c - radius); dc <= std::min(w - 1, c + radius); ++dc) m = std::max(m, edges(r, dc));
      rows(r, c) = m;
    }
  }
  Field2D out(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double m = 0.0;
      for (int dr = std::max(0, r - radius); dr <= std::min(h - 1, r + radius); ++dr) m = std::max(m, rows(dr, c));
      out(r, c) = m;
    }
  }
  return out;
}

double matched_fraction(const Field2D& from, const Field2D& reachable) {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i] == 0.0) continue;
    ++total;
    if (reachable[i] != 0.0) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

double truncated_mean_distance(const Field2D& from, const Field2D& distance_to, double trunc) {
  std::size_t total = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i] == 0.0) continue;
    ++total;
    sum += std::min(distance_to[i], trunc);
  }
  return total == 0 ? trunc : sum / static_cast<double>(total);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double total = 0.0;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dr = r - center;
      const double dc = c - center;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(r * size + c)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

void require_unit_range(const FieldStack& s, const char* what) {
  for (const Field2D& p : s.planes()) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.valid(i) && (p[i] < -1e-9 || p[i] > 1.0 + 1e-9)) {
        throw InvalidArgument(std::string(what) + " values must lie in [0, 1]");
      }
    }
  }
}

}  // namespace

double absrel(const Field2D& aligned, const Field2D& gt) {
  require(aligned.same_shape(gt), "absrel: dimension mismatch");
  require_positive_gt(gt, aligned);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!both_valid(aligned, gt, i)) continue;
    sum += std::abs(aligned[i] - gt[i]) / gt[i];
    ++n;
  }
  require(n > 0, "absrel: no valid pixels");
  return 100.0 * sum / static_cast<double>(n);
}

double delta1(const Field2D& aligned, const Field2D& gt) {
  require(aligned.same_shape(gt), "delta1: dimension mismatch");
  std::size_t n = 0;
  std::size_t pass = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!both_valid(aligned, gt, i)) continue;
    if (!(aligned[i] > 0.0) || !(gt[i] > 0.0)) throw InvalidArgument("delta1: values must be positive");
    ++n;
    if (std::max(aligned[i] / gt[i], gt[i] / aligned[i]) < 1.25) ++pass;
  }
  require(n > 0, "delta1: no valid pixels");
  return 100.0 * static_cast<double>(pass) / static_cast<double>(n);
}

AngularMetrics angular_metrics(const FieldStack& pred, const FieldStack& gt) {
  require(pred.channels() == 3 && gt.channels() == 3, "angular_metrics: expected 3 channels");
  require(pred.same_shape(gt), "angular_metrics: dimension mismatch");
  const Field2D& pm = pred.plane(0);
  const Field2D& gm = gt.plane(0);
  double sum = 0.0;
  std::size_t n = 0;
  std::size_t below = 0;
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    if (!both_valid(pm, gm, i)) continue;
    double a[3];
    double b[3];
    double dot = 0.0;
    double pn = 0.0;
    double gn = 0.0;
    for (int c = 0; c < 3; ++c) {
      a[c] = pred.plane(c)[i];
      b[c] = gt.plane(c)[i];
      dot += a[c] * b[c];
      pn += a[c] * a[c];
      gn += b[c] * b[c];
    }
    if (std::abs(std::sqrt(pn) - 1.0) > 1e-3 || std::abs(std::sqrt(gn) - 1.0) > 1e-3) {
      throw InvalidArgument("angular_metrics: inputs must be unit normals");
    }
    // atan2 keeps small angles accurate where acos(dot) loses them to rounding.
    const double cx = a[1] * b[2] - a[2] * b[1];
    const double cy = a[2] * b[0] - a[0] * b[2];
    const double cz = a[0] * b[1] - a[1] * b[0];
    const double angle = std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot) * 180.0 / std::numbers::pi;
    sum += angle;
    if (angle < 11.25) ++below;
    ++n;
  }
  require(n > 0, "angular_metrics: no valid pixels");
  return {sum / static_cast<double>(n), 100.0 * static_cast<double>(below) / static_cast<double>(n)};
}

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(
      std::count_if(edges.values().begin(), edges.values().end(), [](double v) { return v != 0.0; }));
}

EdgeMap extract_depth_edges(const Field2D& depth, double threshold, EdgeSource source) {
  const int h = depth.height();
  const int w = depth.width();
  double lo = kInf;
  double hi = -kInf;
  for (double v : depth.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  auto at = [&](int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = std::clamp(c, 0, w - 1);
    return range > 0.0 ? (depth(r, c) - lo) / range : 0.0;
  };
  EdgeMap result{Field2D(h, w, 0.0), threshold, source};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
      const double magnitude = std::sqrt(gx * gx + gy * gy) / 8.0;
      if (magnitude > threshold) result.edges(r, c) = 1.0;
    }
  }
  return result;
}

Field2D distance_transform(const Field2D& edges) {
  const int h = edges.height();
  const int w = edges.width();
  const int n = std::max(h, w);
  std::vector<double> f(static_cast<std::size_t>(n));
  std::vector<double> d(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  std::vector<double> grid(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) grid[i] = edges[i] != 0.0 ? 0.0 : kFar;

  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r * w + c)];
    distance_1d(f, d, v, z);
    for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r * w + c)] = d[static_cast<std::size_t>(r)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  Field2D out(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[static_cast<std::size_t>(c)] = grid[static_cast<std::size_t>(r * w + c)];
    distance_1d(f, d, v, z);
    for (int c = 0; c < w; ++c) {
      const double sq = d[static_cast<std::size_t>(c)];
      out.values()[static_cast<std::size_t>(r * w + c)] = sq >= kFar / 2 ? kInf : std::sqrt(sq);
    }
  }
  return out;
}

DbeResult dbe(const EdgeMap& pred_edges, const EdgeMap& gt_edges, double trunc_px) {
  require(pred_edges.edges.same_shape(gt_edges.edges), "dbe: dimension mismatch");
  require(trunc_px > 0.0, "dbe: truncation must be positive");
  const Field2D to_gt = distance_transform(gt_edges.edges);
  const Field2D to_pred = distance_transform(pred_edges.edges);
  return {truncated_mean_distance(pred_edges.edges, to_gt, trunc_px),
          truncated_mean_distance(gt_edges.edges, to_pred, trunc_px)};
}

EdgePrecisionRecall edge_pr(const EdgeMap& pred_edges, const EdgeMap& gt_edges, int match_px) {
  require(pred_edges.edges.same_shape(gt_edges.edges), "edge_pr: dimension mismatch");
  require(match_px >= 0, "edge_pr: match radius must be non-negative");
  const bool pred_empty = pred_edges.count() == 0;
  const bool gt_empty = gt_edges.count() == 0;
  if (pred_empty || gt_empty) {
    const double both = pred_empty && gt_empty ? 1.0 : 0.0;
    return {pred_empty ? both : 0.0, gt_empty ? both : 0.0};
  }
  return {matched_fraction(pred_edges.edges, dilate_chebyshev(gt_edges.edges, match_px)),
          matched_fraction(gt_edges.edges, dilate_chebyshev(pred_edges.edges, match_px))};
}

double psnr(const FieldStack& pred, const FieldStack& gt, double peak) {
  require(pred.same_shape(gt), "psnr: shape mismatch");
  require(peak > 0.0, "psnr: peak must be positive");
  double sq = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < pred.channels(); ++c) {
    const Field2D& a = pred.plane(c);
    const Field2D& b = gt.plane(c);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!both_valid(a, b, i)) continue;
      const double d = a[i] - b[i];
      sq += d * d;
      ++n;
    }
  }
  require(n > 0, "psnr: no valid pixels");
  const double mse = sq / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Field2D& pred, const Field2D& gt) {
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  require(pred.same_shape(gt), "ssim: shape mismatch");
  if (pred.height() < kWindow || pred.width() < kWindow) {
    throw InvalidArgument("ssim: image smaller than the 11x11 window");
  }
  static const std::vector<double> window = gaussian_window(kWindow, kSigma);
  double total = 0.0;
  std::size_t count = 0;
  for (int r0 = 0; r0 + kWindow <= pred.height(); ++r0) {
    for (int c0 = 0; c0 + kWindow <= pred.width(); ++c0) {
      double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
      for (int r = 0; r < kWindow; ++r) {
        for (int c = 0; c < kWindow; ++c) {
          const double wgt = window[static_cast<std::size_t>(r * kWindow + c)];
          const double x = pred(r0 + r, c0 + c);
          const double y = gt(r0 + r, c0 + c);
          mx += wgt * x;
          my += wgt * y;
          xx += wgt * x * x;
          yy += wgt * y * y;
          xy += wgt * x * y;
        }
      }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cov = xy - mx * my;
      total += ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MetricsReport evaluate_depth(const Field2D& pred, const Field2D& gt, const DepthEvalOptions& options) {
  require(pred.same_shape(gt), "evaluate_depth: dimension mismatch");
  require(options.min_depth > 0.0, "evaluate_depth: min_depth must be positive");
  const AffineFit fit = least_squares_affine(pred, gt);
  Field2D aligned = apply_affine(pred, fit.scale, fit.shift);
  for (double& v : aligned.values()) v = std::max(v, options.min_depth);

  MetricsReport report;
  report.values["absrel"] = absrel(aligned, gt);
  report.values["delta1"] = delta1(aligned, gt);
  for (std::size_t i = 0; i < gt.size(); ++i) report.pixel_count += both_valid(pred, gt, i) ? 1 : 0;
  report.config["alignment"] = "least_squares_affine";
  report.config["scale"] = format_double(fit.scale);
  report.config["shift"] = format_double(fit.shift);
  report.config["min_depth"] = format_double(options.min_depth);
  report.config["delta1_threshold"] = "1.25";
  return report;
}

MetricsReport evaluate_normals(const FieldStack& pred, const FieldStack& gt) {
  const AngularMetrics m = angular_metrics(pred, gt);
  MetricsReport report;
  report.values["mean_angular_error"] = m.mean_deg;
  report.values["pct_below_11_25"] = m.pct_below_11_25;
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    report.pixel_count += both_valid(pred.plane(0), gt.plane(0), i) ? 1 : 0;
  }
  report.config["angle_threshold_deg"] = "11.25";
  return report;
}

MetricsReport evaluate_image(const FieldStack& pred, const FieldStack& gt, const ImageEvalOptions& options) {
  require(pred.same_shape(gt), "evaluate_image: shape mismatch");
  FieldStack p = pred;
  FieldStack g = gt;
  MetricsReport report;
  if (options.scale_align_first) {
    double pg = 0.0;
    double pp = 0.0;
    double gmax = 0.0;
    for (int c = 0; c < p.channels(); ++c) {
      const Field2D& a = p.plane(c);
      const Field2D& b = g.plane(c);
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!both_valid(a, b, i)) continue;
        pg += a[i] * b[i];
        pp += a[i] * a[i];
        gmax = std::max(gmax, b[i]);
      }
    }
    if (!(pp > 0.0)) throw NumericalError("evaluate_image: prediction is zero everywhere");
    if (!(gmax > 0.0)) throw NumericalError("evaluate_image: ground truth has no positive value");
    const double scale = pg / pp;
    for (int c = 0; c < p.channels(); ++c) {
      for (double& v : p.plane(c).values()) v = std::clamp(v * scale / gmax, 0.0, 1.0);
      for (double& v : g.plane(c).values()) v = std::clamp(v / gmax, 0.0, 1.0);
    }
    report.config["scale"] = format_double(scale);
    report.config["unit_range_divisor"] = format_double(gmax);
  }
  require_unit_range(p, "prediction");
  require_unit_range(g, "ground truth");
  report.values["psnr"] = psnr(p, g, options.peak);
  double s = 0.0;
  for (int c = 0; c < p.channels(); ++c) s += ssim(p.plane(c), g.plane(c));
  report.values["ssim"] = s / p.channels();
  report.pixel_count = p.pixels();
  report.config["peak"] = format_double(options.peak);
  report.config["lpips"] = "unavailable";
  return report;
}

MetricsReport evaluate_edges(const Field2D& pred, const Field2D& gt, const EdgeEvalOptions& options) {
  require(pred.same_shape(gt), "evaluate_edges: dimension mismatch");
  const EdgeMap pe = extract_depth_edges(pred, options.threshold, EdgeSource::pred);
  const EdgeMap ge = extract_depth_edges(gt, options.threshold, EdgeSource::gt);
  const DbeResult d = dbe(pe, ge, options.trunc_px);
  const EdgePrecisionRecall pr = edge_pr(pe, ge, options.match_px);
  MetricsReport report;
  report.values["dbe_acc"] = d.accuracy;
  report.values["dbe_comp"] = d.completeness;
  report.values["edge_precision"] = pr.precision;
  report.values["edge_recall"] = pr.recall;
  report.pixel_count = pred.size();
  report.config["edge_threshold"] = format_double(options.threshold);
  report.config["dbe_trunc_px"] = format_double(options.trunc_px);
  report.config["match_px"] = std::to_string(options.match_px);
  return report;
}

}  // namespace geodiff
