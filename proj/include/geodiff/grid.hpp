#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "geodiff/error.hpp"

namespace geodiff {

using Mask = std::vector<std::uint8_t>;

/// Dense row-major scalar grid with an optional validity mask (nonzero = valid).
///
/// Values at valid positions are always finite. Positions that the mask marks
/// invalid carry no meaning and are skipped by every statistic in the library.
class Field2D {
 public:
  Field2D(int height, int width, double fill = 0.0);
  Field2D(int height, int width, std::vector<double> values);
  Field2D(int height, int width, std::vector<double> values, Mask mask);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  double operator()(int row, int col) const { return values_[index(row, col)]; }
  double& operator()(int row, int col) { return values_[index(row, col)]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool has_mask() const { return mask_.has_value(); }
  const std::optional<Mask>& mask() const { return mask_; }
  void set_mask(Mask mask);
  void clear_mask() { mask_.reset(); }

  bool valid(std::size_t i) const { return !mask_ || (*mask_)[i] != 0; }
  std::size_t valid_count() const;

  bool same_shape(const Field2D& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Throws NumericalError if a valid position holds NaN or Inf.
  void check_finite() const;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_;
  int width_;
  std::vector<double> values_;
  std::optional<Mask> mask_;
};

/// Ordered planes of identical shape and mask: RGB images, normals, latents.
class FieldStack {
 public:
  FieldStack(int channels, int height, int width, double fill = 0.0);
  explicit FieldStack(std::vector<Field2D> planes);

  int channels() const { return static_cast<int>(planes_.size()); }
  int height() const { return planes_.front().height(); }
  int width() const { return planes_.front().width(); }
  std::size_t pixels() const { return planes_.front().size(); }

  const Field2D& plane(int c) const { return planes_.at(static_cast<std::size_t>(c)); }
  Field2D& plane(int c) { return planes_.at(static_cast<std::size_t>(c)); }
  std::span<const Field2D> planes() const { return planes_; }

  bool same_shape(const FieldStack& other) const {
    return channels() == other.channels() && planes_.front().same_shape(other.planes_.front());
  }

 private:
  std::vector<Field2D> planes_;
};

/// Elementwise `a * x + b * y`. Masks of `x` are carried over.
FieldStack linear_combination(double a, const FieldStack& x, double b, const FieldStack& y);

/// Channel-wise concatenation; all inputs must share height and width.
FieldStack concat_channels(std::span<const FieldStack> parts);

/// Copies the `h`×`w` window whose top-left corner is (row0, col0).
FieldStack crop(const FieldStack& source, int row0, int col0, int h, int w);

double percentile(const Field2D& field, double q);

Field2D pixelwise_median(std::span<const Field2D> members);

/// Bilinear resampling with pixel-center sampling (align_corners = false).
/// A resampled pixel is valid only when all four source taps are valid.
Field2D resample_bilinear(const Field2D& field, int new_height, int new_width);
FieldStack resample_bilinear(const FieldStack& stack, int new_height, int new_width);

struct AffineFit {
  double scale;
  double shift;
};

/// Minimizes sum (scale * pred + shift - gt)^2 over pixels valid in both.
AffineFit least_squares_affine(const Field2D& pred, const Field2D& gt);

/// Minimizes sum (scale * pred - gt)^2 over pixels valid in both.
double scale_align(const Field2D& pred, const Field2D& gt);

/// Returns `scale * field + shift`, preserving the mask.
Field2D apply_affine(const Field2D& field, double scale, double shift);

}  // namespace geodiff
