#include "geodiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geodiff {

namespace {

void check_dims(int height, int width) {
  require(height >= 1 && width >= 1,
          "field dimensions must be positive, got " + std::to_string(height) + "x" +
              std::to_string(width));
}

std::size_t area(int height, int width) {
  return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

bool both_valid(const Field2D& a, const Field2D& b, std::size_t i) {
  return a.valid(i) && b.valid(i);
}

}  // namespace

Field2D::Field2D(int height, int width, double fill) : height_(height), width_(width) {
  check_dims(height, width);
  require(std::isfinite(fill), "fill value must be finite");
  values_.assign(area(height, width), fill);
}

Field2D::Field2D(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  check_dims(height, width);
  require(values_.size() == area(height, width), "value count does not match dimensions");
  check_finite();
}

Field2D::Field2D(int height, int width, std::vector<double> values, Mask mask)
    : height_(height), width_(width), values_(std::move(values)) {
  check_dims(height, width);
  require(values_.size() == area(height, width), "value count does not match dimensions");
  set_mask(std::move(mask));
  check_finite();
}

void Field2D::set_mask(Mask mask) {
  require(mask.size() == values_.size(), "mask length does not match field size");
  mask_ = std::move(mask);
}

std::size_t Field2D::valid_count() const {
  if (!mask_) return values_.size();
  return static_cast<std::size_t>(std::count_if(mask_->begin(), mask_->end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

void Field2D::check_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (valid(i) && !std::isfinite(values_[i])) {
      throw NumericalError("non-finite value at valid index " + std::to_string(i));
    }
  }
}

FieldStack::FieldStack(int channels, int height, int width, double fill) {
  require(channels >= 1, "stack needs at least one channel");
  planes_.assign(static_cast<std::size_t>(channels), Field2D(height, width, fill));
}

FieldStack::FieldStack(std::vector<Field2D> planes) : planes_(std::move(planes)) {
  require(!planes_.empty(), "stack needs at least one channel");
  const Field2D& first = planes_.front();
  for (const Field2D& p : planes_) {
    require(p.same_shape(first), "stack planes must share dimensions");
    require(p.mask() == first.mask(), "stack planes must share one mask");
  }
}

FieldStack linear_combination(double a, const FieldStack& x, double b, const FieldStack& y) {
  require(x.same_shape(y), "linear_combination: shape mismatch");
  FieldStack out = x;
  for (int c = 0; c < x.channels(); ++c) {
    auto dst = out.plane(c).values();
    auto xs = x.plane(c).values();
    auto ys = y.plane(c).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a * xs[i] + b * ys[i];
  }
  return out;
}

FieldStack concat_channels(std::span<const FieldStack> parts) {
  require(!parts.empty(), "concat_channels: nothing to concatenate");
  std::vector<Field2D> planes;
  for (const FieldStack& part : parts) {
    require(part.height() == parts.front().height() && part.width() == parts.front().width(),
            "concat_channels: spatial size mismatch");
    for (const Field2D& p : part.planes()) planes.push_back(p);
  }
  return FieldStack(std::move(planes));
}

FieldStack crop(const FieldStack& source, int row0, int col0, int h, int w) {
  require(row0 >= 0 && col0 >= 0 && h >= 1 && w >= 1 && row0 + h <= source.height() &&
              col0 + w <= source.width(),
          "crop window outside source");
  std::vector<Field2D> planes;
  planes.reserve(static_cast<std::size_t>(source.channels()));
  for (const Field2D& src : source.planes()) {
    std::vector<double> values(area(h, w));
    Mask mask;
    if (src.has_mask()) mask.resize(values.size());
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t dst = static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                                static_cast<std::size_t>(c);
        values[dst] = src(row0 + r, col0 + c);
        if (src.has_mask()) {
          mask[dst] = (*src.mask())[static_cast<std::size_t>(row0 + r) *
                                        static_cast<std::size_t>(src.width()) +
                                    static_cast<std::size_t>(col0 + c)];
        }
      }
    }
    Field2D plane(h, w, 0.0);
    std::copy(values.begin(), values.end(), plane.values().begin());
    if (src.has_mask()) plane.set_mask(std::move(mask));
    planes.push_back(std::move(plane));
  }
  return FieldStack(std::move(planes));
}

double percentile(const Field2D& field, double q) {
  require(q >= 0.0 && q <= 100.0, "percentile q must lie in [0, 100]");
  std::vector<double> valid;
  valid.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field.valid(i)) valid.push_back(field[i]);
  }
  if (valid.empty()) throw InvalidArgument("no valid pixels");

  const double rank = q / 100.0 * static_cast<double>(valid.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, valid.size() - 1);
  std::nth_element(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(lo), valid.end());
  const double lo_value = valid[lo];
  if (hi == lo) return lo_value;
  // The (lo+1)-th order statistic is the minimum of the upper partition.
  const double hi_value =
      *std::min_element(valid.begin() + static_cast<std::ptrdiff_t>(hi), valid.end());
  const double frac = rank - static_cast<double>(lo);
  return lo_value + frac * (hi_value - lo_value);
}

Field2D pixelwise_median(std::span<const Field2D> members) {
  require(!members.empty(), "pixelwise_median: no members");
  const Field2D& first = members.front();
  for (const Field2D& m : members) {
    require(m.same_shape(first), "pixelwise_median: dimension mismatch");
    require(m.mask() == first.mask(), "pixelwise_median: mask mismatch");
  }
  Field2D out = first;
  const std::size_t n = members.size();
  std::vector<double> column(n);
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) column[k] = members[k][i];
    std::sort(column.begin(), column.end());
    out[i] = (n % 2 == 1) ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

Field2D resample_bilinear(const Field2D& field, int new_height, int new_width) {
  require(new_height >= 1 && new_width >= 1, "resample target must be at least 1x1");
  if (new_height == field.height() && new_width == field.width()) return field;

  struct Tap {
    int lo;
    int hi;
    double frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> result(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(src));
      const int hi = std::min(lo + 1, in - 1);
      result[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
    }
    return result;
  };
  const auto rows = taps(field.height(), new_height);
  const auto cols = taps(field.width(), new_width);

  Field2D out(new_height, new_width, 0.0);
  Mask mask;
  const auto& src_mask = field.mask();
  if (src_mask) mask.assign(out.size(), 0);
  const auto src_valid = [&](int r, int c) {
    return !src_mask ||
           (*src_mask)[static_cast<std::size_t>(r) * static_cast<std::size_t>(field.width()) +
                       static_cast<std::size_t>(c)] != 0;
  };

  for (int r = 0; r < new_height; ++r) {
    const Tap& tr = rows[static_cast<std::size_t>(r)];
    for (int c = 0; c < new_width; ++c) {
      const Tap& tc = cols[static_cast<std::size_t>(c)];
      const double top = field(tr.lo, tc.lo) + tc.frac * (field(tr.lo, tc.hi) - field(tr.lo, tc.lo));
      const double bottom =
          field(tr.hi, tc.lo) + tc.frac * (field(tr.hi, tc.hi) - field(tr.hi, tc.lo));
      out(r, c) = top + tr.frac * (bottom - top);
      if (src_mask) {
        const bool ok = src_valid(tr.lo, tc.lo) && src_valid(tr.lo, tc.hi) &&
                        src_valid(tr.hi, tc.lo) && src_valid(tr.hi, tc.hi);
        mask[static_cast<std::size_t>(r) * static_cast<std::size_t>(new_width) +
             static_cast<std::size_t>(c)] = ok ? 1 : 0;
      }
    }
  }
  if (src_mask) out.set_mask(std::move(mask));
  return out;
}

FieldStack resample_bilinear(const FieldStack& stack, int new_height, int new_width) {
  std::vector<Field2D> planes;
  for (const Field2D& p : stack.planes()) planes.push_back(resample_bilinear(p, new_height, new_width));
  return FieldStack(std::move(planes));
}

AffineFit least_squares_affine(const Field2D& pred, const Field2D& gt) {
  require(pred.same_shape(gt), "least_squares_affine: dimension mismatch");
  double n = 0.0;
  double mean_p = 0.0;
  double mean_g = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!both_valid(pred, gt, i)) continue;
    n += 1.0;
    mean_p += pred[i];
    mean_g += gt[i];
  }
  require(n >= 2.0, "least_squares_affine: need at least two valid pixels");
  mean_p /= n;
  mean_g /= n;

  // Centered normal equations.
  double var_p = 0.0;
  double cov = 0.0;
  double scale_p = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!both_valid(pred, gt, i)) continue;
    const double dp = pred[i] - mean_p;
    var_p += dp * dp;
    cov += dp * (gt[i] - mean_g);
    scale_p = std::max(scale_p, std::abs(pred[i]));
  }
  if (!(var_p > 1e-24 * std::max(1.0, scale_p * scale_p) * n)) {
    throw NumericalError("degenerate fit");
  }
  const double scale = cov / var_p;
  return {scale, mean_g - scale * mean_p};
}

double scale_align(const Field2D& pred, const Field2D& gt) {
  require(pred.same_shape(gt), "scale_align: dimension mismatch");
  double pg = 0.0;
  double pp = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!both_valid(pred, gt, i)) continue;
    pg += pred[i] * gt[i];
    pp += pred[i] * pred[i];
  }
  if (!(pp > 0.0)) throw NumericalError("scale_align: prediction is zero on all valid pixels");
  return pg / pp;
}

Field2D apply_affine(const Field2D& field, double scale, double shift) {
  Field2D out = field;
  for (double& v : out.values()) v = scale * v + shift;
  return out;
}

}  // namespace geodiff
