#pragma once

#include "geodiff/denoiser.hpp"
#include "geodiff/schedule.hpp"

namespace geodiff::toy {

/// Exact denoiser for data concentrated on one sample x_star: its implied
/// clean estimate is x_star for every input.
class PointMassDenoiser final : public Denoiser {
 public:
  PointMassDenoiser(FieldStack x_star, DiffusionSchedule schedule, int cond_channels = 1,
                    Parameterization param = Parameterization::epsilon);

  FieldStack predict(const FieldStack& noisy, const FieldStack& cond, int t) const override;
  Parameterization parameterization() const override { return param_; }
  ChannelSignature signature() const override { return {x_star_.channels(), cond_channels_}; }

 private:
  FieldStack x_star_;
  DiffusionSchedule schedule_;
  int cond_channels_;
  Parameterization param_;
};

/// Posterior-mean denoiser for data ~ N(mean, var * I):
/// x0_hat = (sqrt(abar) var x_t + (1 - abar) mean) / (abar var + 1 - abar).
class GaussianDenoiser final : public Denoiser {
 public:
  GaussianDenoiser(FieldStack mean, double var, DiffusionSchedule schedule, int cond_channels = 1,
                   Parameterization param = Parameterization::epsilon);

  FieldStack predict(const FieldStack& noisy, const FieldStack& cond, int t) const override;
  Parameterization parameterization() const override { return param_; }
  ChannelSignature signature() const override { return {mean_.channels(), cond_channels_}; }

  /// Clean estimate for a given abar; exposed for closed-form checks.
  FieldStack posterior_mean(const FieldStack& noisy, double alpha_bar) const;

 private:
  FieldStack mean_;
  double var_;
  DiffusionSchedule schedule_;
  int cond_channels_;
  Parameterization param_;
};

/// Predicts the clean latent as a copy of conditioning channels
/// [source_channel, source_channel + target_channels). Position-free, so it
/// behaves identically on tiles and on the full canvas.
class ConditioningOracle final : public Denoiser {
 public:
  ConditioningOracle(int source_channel, int target_channels, int cond_channels, DiffusionSchedule schedule,
                     Parameterization param = Parameterization::x0);

  FieldStack predict(const FieldStack& noisy, const FieldStack& cond, int t) const override;
  Parameterization parameterization() const override { return param_; }
  ChannelSignature signature() const override { return {target_channels_, cond_channels_}; }

 private:
  int source_channel_;
  int target_channels_;
  int cond_channels_;
  DiffusionSchedule schedule_;
  Parameterization param_;
};

/// Per-pixel x0 prediction gain * tanh(x_t) + cond_gain * cond[0]; every
/// output pixel depends only on the same input pixel.
class PointwiseDenoiser final : public Denoiser {
 public:
  PointwiseDenoiser(int target_channels, int cond_channels, double gain = 0.5, double cond_gain = 0.25);

  FieldStack predict(const FieldStack& noisy, const FieldStack& cond, int t) const override;
  Parameterization parameterization() const override { return Parameterization::x0; }
  ChannelSignature signature() const override { return {target_channels_, cond_channels_}; }

 private:
  int target_channels_;
  int cond_channels_;
  double gain_;
  double cond_gain_;
};

}  // namespace geodiff::toy
