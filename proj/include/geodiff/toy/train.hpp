#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geodiff/schedule.hpp"
#include "geodiff/toy/network.hpp"
#include "geodiff/toy/scene.hpp"

namespace geodiff::toy {

/// One supervised pair in network space: the 3-channel normalized depth
/// target and the image conditioning mapped to [-1, 1].
struct TrainingSample {
  FieldStack target;
  FieldStack cond;
};

TrainingSample make_training_sample(const ToyScene& scene);

struct TrainConfig {
  int iterations = 2000;
  int batch = 4;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ToyDenoiser model;
  std::vector<double> loss_trace;  // minibatch loss per iteration
};

/// Thrown when the minibatch loss stays above 10x the first loss for 100
/// consecutive iterations.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Squared error between the model output and the regression target of its
/// parameterization (noise, v or clean sample), averaged over elements.
/// Adds the parameter gradient to `grad` when it is non-empty.
double denoising_loss(const ToyDenoiser& model, const TrainingSample& sample, int t, const FieldStack& noise,
                      const DiffusionSchedule& schedule, std::span<double> grad = {});

/// Mean denoising loss over `count` fixed (t, noise) draws per sample. The
/// draws depend only on `seed`, so two models can be compared on equal terms.
double evaluation_loss(const ToyDenoiser& model, std::span<const TrainingSample> samples,
                       const DiffusionSchedule& schedule, std::uint64_t seed, int count = 16);

/// Adam on the Monte-Carlo denoising objective, starting from `init`.
TrainResult train_denoiser(ToyDenoiser init, std::span<const TrainingSample> samples, const TrainConfig& cfg,
                           const DiffusionSchedule& schedule);

/// Convenience overload: fresh network of `arch` initialized from cfg.seed.
TrainResult train_denoiser(std::span<const ToyScene> scenes, const ToyArch& arch, Parameterization param,
                           const TrainConfig& cfg, const DiffusionSchedule& schedule);

struct DistillConfig {
  LcmConfig lcm;  // skip_k, huber_c, ema_mu and the boundary functions
  int iterations = 1000;
  int batch = 1;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  /// Draw t from the skip grid T-1, T-1-k, ... instead of uniformly.
  bool skip_grid = false;
};

struct DistillResult {
  ToyDenoiser student;
  ToyDenoiser target;
  std::vector<double> loss_trace;  // Pseudo-Huber loss per iteration
};

/// Consistency distillation. Student and EMA target start as copies of the
/// teacher. Each step draws t >= skip_k (smaller draws are redrawn), runs
/// one teacher DDIM step from t to t - skip_k and pulls the student's
/// consistency output at t toward the target's at t - skip_k.
DistillResult distill_lcm(const ToyDenoiser& teacher, const DistillConfig& cfg,
                          std::span<const TrainingSample> samples, const DiffusionSchedule& schedule);

/// Consistency-model sampling along `steps` (strictly decreasing). Between
/// steps the clean output is re-noised with fresh seeded noise.
FieldStack consistency_sample(const ToyDenoiser& model, const FieldStack& cond, std::span<const int> steps,
                              const LcmConfig& lcm, const DiffusionSchedule& schedule, std::uint64_t seed);

/// Per-pixel keep mask for refiner training: a pixel is kept when the mean
/// absolute difference between the two maps over its patch is at most eta.
/// Patches tile the image from the top-left; the last row/column of patches
/// may be smaller.
Mask patch_agreement_mask(const Field2D& prediction, const Field2D& reference, int patch, double eta = 0.1);

}  // namespace geodiff::toy
