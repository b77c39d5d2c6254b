#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "geodiff/ensemble.hpp"
#include "geodiff/metrics.hpp"
#include "geodiff/schedule.hpp"
#include "geodiff/tiling.hpp"
#include "geodiff/toy/network.hpp"
#include "geodiff/toy/train.hpp"

namespace geodiff {

/// Every knob the CLI exposes. Defaults follow the reference protocol:
/// T = 1000 scaled_linear schedule with zero-SNR rescaling, trailing
/// spacing with 4 steps, ensembles of 10, 50% tile overlap and a 4x cascade.
struct RunConfig {
  // schedule
  int timesteps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  BetaKind beta_schedule = BetaKind::scaled_linear;
  bool zero_snr = true;
  SpacingMode spacing = SpacingMode::trailing;
  int steps = 4;
  Parameterization parameterization = Parameterization::v;

  std::uint64_t seed = 0;

  // ensembling
  int ensemble_size = 10;
  double ensemble_lambda = 0.02;
  int ensemble_max_iters = 50;
  double ensemble_tol = 1e-3;
  PairReduction ensemble_reduction = PairReduction::mean;

  // high-resolution tiling; tile size 0 means the native resolution
  int target_scale = 4;
  int tile_size = 0;
  double tile_overlap = 0.5;
  std::string denoiser = "oracle";  // "oracle" or a denoiser file path

  // evaluation
  double min_depth = 1e-6;
  double edge_threshold = kDefaultEdgeThreshold;
  double dbe_truncation = kDefaultDbeTruncation;
  int match_radius = kDefaultMatchRadius;

  // toy scenes and training
  int scene_height = 16;
  int scene_width = 16;
  // Seven hidden layers give a 17x17 receptive field, enough to see a whole
  // 16x16 scene in one step.
  int network_width = 24;
  int hidden_layers = 7;
  int time_features = 8;
  int train_iterations = 2000;
  int train_batch = 4;
  double train_learning_rate = 2e-3;
  int distill_iterations = 1000;
  int distill_batch = 1;
  double distill_learning_rate = 1e-4;
  int skip_k = 200;
  double huber_c = 0.001;
  double ema_mu = 0.95;
  // Boundary scale on the unit time axis for distillation; 0.5 / 9990
  // matches sigma 0.5 on timesteps scaled by 10, so 1-step outputs carry
  // almost no input noise.
  double sigma_data = 5e-5;
};

/// Parses flat `key = value` text. Blank lines and lines starting with '#'
/// are ignored. Unknown keys, duplicate keys and malformed values throw
/// InvalidArgument naming the line.
RunConfig parse_config(std::string_view text, RunConfig base = {});

/// The config in the same text format, one line per key.
std::string format_config(const RunConfig& cfg);

DiffusionSchedule build_schedule(const RunConfig& cfg);
TimestepSpacing build_spacing(const RunConfig& cfg);
EnsembleOptions ensemble_options(const RunConfig& cfg);
toy::ToyArch toy_arch(const RunConfig& cfg, int cond_channels = 3);
toy::TrainConfig train_config(const RunConfig& cfg);
toy::DistillConfig distill_config(const RunConfig& cfg);

}  // namespace geodiff
