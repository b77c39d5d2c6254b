#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geodiff/denoiser.hpp"
#include "geodiff/grid.hpp"
#include "geodiff/normalize.hpp"
#include "geodiff/schedule.hpp"

namespace geodiff {

struct TileOrigin {
  int row;
  int col;

  bool operator==(const TileOrigin&) const = default;
};

/// Overlapping tiles over a canvas. All tiles share one blend weight map.
struct TileLayout {
  int canvas_h;
  int canvas_w;
  int tile_h;
  int tile_w;
  double overlap_fraction;
  std::vector<TileOrigin> tiles;  // row-major order
  Field2D weight;                 // tile_h x tile_w, strictly positive
};

/// 1 + L1 distance to the nearest tile border pixel.
Field2D chamfer_weights(int tile_h, int tile_w);

/// Regular stride of tile * (1 - overlap) along each axis; the last tile on
/// an axis is clamped to the canvas edge.
TileLayout make_tile_layout(int canvas_h, int canvas_w, int tile_h, int tile_w, double overlap_fraction);

/// Sum of the weights of every tile covering each canvas pixel.
Field2D coverage_weight(const TileLayout& layout);

/// Streams tile results into the weighted canvas average.
///
/// Tiles must arrive in ascending index order. Each pixel stores its first
/// covering tile's value as an anchor and accumulates weighted deviations
/// from it, so a constant input (or a single covering tile) is reproduced
/// exactly and results are independent of how tiles were scheduled.
class TileAccumulator {
 public:
  TileAccumulator(const TileLayout& layout, int channels);

  void add(std::size_t tile_index, const FieldStack& tile_output);
  FieldStack finish() const;

 private:
  const TileLayout& layout_;
  int channels_;
  std::size_t next_tile_ = 0;
  std::vector<double> anchor_;
  std::vector<double> deviation_;
  std::vector<double> weight_sum_;
  std::vector<std::uint8_t> anchored_;
};

FieldStack fuse_tiles(std::span<const FieldStack> tile_outputs, const TileLayout& layout);

/// Plain DDIM sampling from seeded Gaussian noise over the whole canvas.
FieldStack ddim_sample(const FieldStack& cond, const Denoiser& denoiser, const TimestepSpacing& spacing,
                       const DiffusionSchedule& schedule, std::uint64_t seed);

/// MultiDiffusion: per timestep, every tile is denoised and stepped, then the
/// tiles are fused back into the single canvas latent.
FieldStack multidiffusion_sample(const FieldStack& canvas_cond, const Denoiser& denoiser,
                                 const TileLayout& layout, const TimestepSpacing& spacing,
                                 const DiffusionSchedule& schedule, std::uint64_t seed);

struct HiresParams {
  int target_scale = 4;  // power of two; log2 gives the number of refinement stages
  int tile_h = 0;        // 0 = native height
  int tile_w = 0;        // 0 = native width
  double overlap_fraction = 0.5;
  /// Maps the final normalized-space prediction to output units.
  DepthNormalization output_norm{0.0, 1.0};
};

struct HiresResult {
  Field2D depth;
  /// Normalized-space latent after each stage; stage 0 is the global prediction.
  std::vector<FieldStack> stages;
};

/// Two-stage high-resolution inference. `image` is given at full output
/// resolution, which must be divisible by target_scale. Refiner conditioning
/// is (upsampled previous latent, image) and its input latent is the noisy
/// depth latent.
HiresResult hires_pipeline(const FieldStack& image, const Denoiser& base, const Denoiser& refiner,
                           const HiresParams& params, const TimestepSpacing& spacing,
                           const DiffusionSchedule& schedule, std::uint64_t seed);

}  // namespace geodiff
