#include "geodiff/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geodiff/parallel.hpp"
#include "geodiff/random.hpp"

namespace geodiff {

namespace {

// Stream ids for split_seed.
constexpr std::uint64_t kInitialNoiseStream = 1;

std::vector<int> axis_origins(int canvas, int tile, double overlap) {
  const int stride = std::max(1, static_cast<int>(std::floor(tile * (1.0 - overlap) + 1e-9)));
  std::vector<int> origins;
  for (int pos = 0;; pos += stride) {
    const int origin = std::min(pos, canvas - tile);
    if (origins.empty() || origin > origins.back()) origins.push_back(origin);
    if (pos + tile >= canvas) break;
  }
  return origins;
}

FieldStack initial_noise(int channels, int height, int width, std::uint64_t seed) {
  Rng rng(split_seed(seed, kInitialNoiseStream));
  return gaussian_noise(channels, height, width, rng);
}

FieldStack denoise_and_step(const Denoiser& denoiser, const FieldStack& latent, const FieldStack& cond,
                            int t, int t_prev, const DiffusionSchedule& schedule) {
  FieldStack out = denoiser.predict(latent, cond, t);
  if (!out.same_shape(latent)) throw InvalidArgument("denoiser output shape differs from its input");
  return ddim_step(latent, out, denoiser.parameterization(), t, t_prev, schedule);
}

}  // namespace

void check_denoiser_inputs(const Denoiser& denoiser, const FieldStack& noisy, const FieldStack& cond) {
  const ChannelSignature sig = denoiser.signature();
  require(noisy.channels() == sig.target_channels,
          "denoiser expects " + std::to_string(sig.target_channels) + " latent channels, got " +
              std::to_string(noisy.channels()));
  require(cond.channels() == sig.cond_channels,
          "denoiser expects " + std::to_string(sig.cond_channels) + " conditioning channels, got " +
              std::to_string(cond.channels()));
  require(noisy.height() == cond.height() && noisy.width() == cond.width(),
          "latent and conditioning differ in size");
}

Field2D chamfer_weights(int tile_h, int tile_w) {
  require(tile_h >= 1 && tile_w >= 1, "tile dimensions must be positive");
  Field2D w(tile_h, tile_w, 0.0);
  for (int r = 0; r < tile_h; ++r) {
    for (int c = 0; c < tile_w; ++c) {
      w(r, c) = 1.0 + std::min({r, c, tile_h - 1 - r, tile_w - 1 - c});
    }
  }
  return w;
}

TileLayout make_tile_layout(int canvas_h, int canvas_w, int tile_h, int tile_w, double overlap_fraction) {
  require(canvas_h >= 1 && canvas_w >= 1 && tile_h >= 1 && tile_w >= 1, "dimensions must be positive");
  require(tile_h <= canvas_h && tile_w <= canvas_w, "tile larger than canvas");
  require(overlap_fraction >= 0.0 && overlap_fraction <= 0.9, "overlap fraction must lie in [0, 0.9]");
  TileLayout layout{canvas_h, canvas_w, tile_h, tile_w, overlap_fraction, {}, chamfer_weights(tile_h, tile_w)};
  for (int row : axis_origins(canvas_h, tile_h, overlap_fraction)) {
    for (int col : axis_origins(canvas_w, tile_w, overlap_fraction)) layout.tiles.push_back({row, col});
  }
  return layout;
}

Field2D coverage_weight(const TileLayout& layout) {
  Field2D sum(layout.canvas_h, layout.canvas_w, 0.0);
  for (const TileOrigin& o : layout.tiles) {
    for (int r = 0; r < layout.tile_h; ++r) {
      for (int c = 0; c < layout.tile_w; ++c) sum(o.row + r, o.col + c) += layout.weight(r, c);
    }
  }
  return sum;
}

TileAccumulator::TileAccumulator(const TileLayout& layout, int channels)
    : layout_(layout), channels_(channels) {
  require(channels >= 1, "accumulator needs at least one channel");
  const auto pixels = static_cast<std::size_t>(layout.canvas_h) * static_cast<std::size_t>(layout.canvas_w);
  anchor_.assign(pixels * static_cast<std::size_t>(channels), 0.0);
  deviation_.assign(anchor_.size(), 0.0);
  weight_sum_.assign(pixels, 0.0);
  anchored_.assign(pixels, 0);
}

void TileAccumulator::add(std::size_t tile_index, const FieldStack& tile_output) {
  require(tile_index == next_tile_, "tiles must be accumulated in ascending order");
  require(tile_index < layout_.tiles.size(), "tile index out of range");
  require(tile_output.channels() == channels_ && tile_output.height() == layout_.tile_h &&
              tile_output.width() == layout_.tile_w,
          "tile output has the wrong shape");
  ++next_tile_;
  const TileOrigin origin = layout_.tiles[tile_index];
  const auto pixels = weight_sum_.size();
  for (int r = 0; r < layout_.tile_h; ++r) {
    for (int c = 0; c < layout_.tile_w; ++c) {
      const auto p = static_cast<std::size_t>(origin.row + r) * static_cast<std::size_t>(layout_.canvas_w) +
                     static_cast<std::size_t>(origin.col + c);
      const double w = layout_.weight(r, c);
      weight_sum_[p] += w;
      const bool first = anchored_[p] == 0;
      anchored_[p] = 1;
      for (int ch = 0; ch < channels_; ++ch) {
        const double v = tile_output.plane(ch)(r, c);
        const std::size_t k = static_cast<std::size_t>(ch) * pixels + p;
        if (first) {
          anchor_[k] = v;
        } else {
          deviation_[k] += w * (v - anchor_[k]);
        }
      }
    }
  }
}

FieldStack TileAccumulator::finish() const {
  FieldStack out(channels_, layout_.canvas_h, layout_.canvas_w);
  const auto pixels = weight_sum_.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    if (anchored_[p] == 0) throw InvalidArgument("canvas pixel " + std::to_string(p) + " is not covered by any tile");
  }
  for (int ch = 0; ch < channels_; ++ch) {
    auto dst = out.plane(ch).values();
    for (std::size_t p = 0; p < pixels; ++p) {
      const std::size_t k = static_cast<std::size_t>(ch) * pixels + p;
      dst[p] = anchor_[k] + deviation_[k] / weight_sum_[p];
    }
  }
  return out;
}

FieldStack fuse_tiles(std::span<const FieldStack> tile_outputs, const TileLayout& layout) {
  require(tile_outputs.size() == layout.tiles.size(), "need exactly one output per tile");
  require(!tile_outputs.empty(), "layout has no tiles");
  TileAccumulator acc(layout, tile_outputs.front().channels());
  for (std::size_t i = 0; i < tile_outputs.size(); ++i) acc.add(i, tile_outputs[i]);
  return acc.finish();
}

FieldStack ddim_sample(const FieldStack& cond, const Denoiser& denoiser, const TimestepSpacing& spacing,
                       const DiffusionSchedule& schedule, std::uint64_t seed) {
  require(!spacing.steps.empty(), "spacing has no steps");
  const ChannelSignature sig = denoiser.signature();
  FieldStack latent = initial_noise(sig.target_channels, cond.height(), cond.width(), seed);
  check_denoiser_inputs(denoiser, latent, cond);
  const auto& steps = spacing.steps;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const int t_prev = s + 1 < steps.size() ? steps[s + 1] : -1;
    latent = denoise_and_step(denoiser, latent, cond, steps[s], t_prev, schedule);
  }
  return latent;
}

FieldStack multidiffusion_sample(const FieldStack& canvas_cond, const Denoiser& denoiser,
                                 const TileLayout& layout, const TimestepSpacing& spacing,
                                 const DiffusionSchedule& schedule, std::uint64_t seed) {
  require(!spacing.steps.empty(), "spacing has no steps");
  require(canvas_cond.height() == layout.canvas_h && canvas_cond.width() == layout.canvas_w,
          "conditioning does not cover the canvas");
  const ChannelSignature sig = denoiser.signature();
  FieldStack latent = initial_noise(sig.target_channels, layout.canvas_h, layout.canvas_w, seed);
  check_denoiser_inputs(denoiser, latent, canvas_cond);

  // Tiles run in batches of worker_count() so memory holds one batch of tile
  // results besides the canvas accumulators.
  const std::size_t batch = static_cast<std::size_t>(worker_count());
  const auto& steps = spacing.steps;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const int t = steps[s];
    const int t_prev = s + 1 < steps.size() ? steps[s + 1] : -1;
    TileAccumulator acc(layout, sig.target_channels);
    for (std::size_t start = 0; start < layout.tiles.size(); start += batch) {
      const std::size_t count = std::min(batch, layout.tiles.size() - start);
      std::vector<std::optional<FieldStack>> results(count);
      parallel_for(count, [&](std::size_t i) {
        const TileOrigin o = layout.tiles[start + i];
        const FieldStack tile = crop(latent, o.row, o.col, layout.tile_h, layout.tile_w);
        const FieldStack tile_cond = crop(canvas_cond, o.row, o.col, layout.tile_h, layout.tile_w);
        results[i] = denoise_and_step(denoiser, tile, tile_cond, t, t_prev, schedule);
      });
      for (std::size_t i = 0; i < count; ++i) acc.add(start + i, *results[i]);
    }
    latent = acc.finish();
  }
  return latent;
}

HiresResult hires_pipeline(const FieldStack& image, const Denoiser& base, const Denoiser& refiner,
                           const HiresParams& params, const TimestepSpacing& spacing,
                           const DiffusionSchedule& schedule, std::uint64_t seed) {
  const int scale = params.target_scale;
  require(scale >= 1 && (scale & (scale - 1)) == 0, "target_scale must be a power of two");
  require(image.height() % scale == 0 && image.width() % scale == 0,
          "image size must be divisible by target_scale");
  const ChannelSignature base_sig = base.signature();
  const int latent_channels = base_sig.target_channels;
  require(latent_channels == 1 || latent_channels == 3, "depth latent must have 1 or 3 channels");
  require(base_sig.cond_channels == image.channels(), "base denoiser conditioning does not match the image");
  const int stages = static_cast<int>(std::lround(std::log2(scale)));
  if (stages > 0) {
    const ChannelSignature expected{latent_channels, latent_channels + image.channels()};
    if (!(refiner.signature() == expected)) {
      throw InvalidArgument("refiner channel signature is incompatible with the base denoiser and image");
    }
  }

  const int native_h = image.height() / scale;
  const int native_w = image.width() / scale;
  HiresResult result{Field2D(1, 1), {}};
  const FieldStack native_image = resample_bilinear(image, native_h, native_w);
  result.stages.push_back(ddim_sample(native_image, base, spacing, schedule, seed));

  for (int stage = 1; stage <= stages; ++stage) {
    const int h = native_h << stage;
    const int w = native_w << stage;
    const FieldStack global = resample_bilinear(result.stages.back(), h, w);
    const FieldStack stage_image = stage == stages ? image : resample_bilinear(image, h, w);
    const FieldStack parts[] = {global, stage_image};
    const FieldStack cond = concat_channels(parts);
    const int tile_h = std::min(h, params.tile_h > 0 ? params.tile_h : native_h);
    const int tile_w = std::min(w, params.tile_w > 0 ? params.tile_w : native_w);
    const TileLayout layout = make_tile_layout(h, w, tile_h, tile_w, params.overlap_fraction);
    result.stages.push_back(
        multidiffusion_sample(cond, refiner, layout, spacing, schedule, split_seed(seed, static_cast<std::uint64_t>(stage))));
  }

  const FieldStack& last = result.stages.back();
  const Field2D normalized = latent_channels == 3 ? average_channels(last) : last.plane(0);
  result.depth = denormalize_depth(normalized, params.output_norm);
  return result;
}

}  // namespace geodiff
