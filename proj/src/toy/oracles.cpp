#include "geodiff/toy/oracles.hpp"

#include <cmath>

namespace geodiff::toy {

namespace {

/// Re-expresses a clean estimate in the requested parameterization.
FieldStack express(const FieldStack& x0, const FieldStack& noisy, double alpha_bar, Parameterization param) {
  if (param == Parameterization::x0) return x0;
  if (alpha_bar >= 1.0) throw NumericalError("oracle denoiser: noise prediction undefined at abar = 1");
  return convert_parameterization(x0, noisy, alpha_bar, Parameterization::x0, param);
}

}  // namespace

PointMassDenoiser::PointMassDenoiser(FieldStack x_star, DiffusionSchedule schedule, int cond_channels,
                                     Parameterization param)
    : x_star_(std::move(x_star)), schedule_(std::move(schedule)), cond_channels_(cond_channels), param_(param) {
  require(cond_channels >= 1, "cond_channels must be positive");
}

FieldStack PointMassDenoiser::predict(const FieldStack& noisy, const FieldStack& cond, int t) const {
  check_denoiser_inputs(*this, noisy, cond);
  require(noisy.same_shape(x_star_), "point-mass denoiser: latent does not match the target shape");
  return express(x_star_, noisy, schedule_.alpha_bar(t), param_);
}

GaussianDenoiser::GaussianDenoiser(FieldStack mean, double var, DiffusionSchedule schedule, int cond_channels,
                                   Parameterization param)
    : mean_(std::move(mean)), var_(var), schedule_(std::move(schedule)), cond_channels_(cond_channels), param_(param) {
  require(var > 0.0, "gaussian denoiser: variance must be positive");
  require(cond_channels >= 1, "cond_channels must be positive");
}

FieldStack GaussianDenoiser::posterior_mean(const FieldStack& noisy, double alpha_bar) const {
  require(noisy.same_shape(mean_), "gaussian denoiser: latent does not match the mean shape");
  const double denom = alpha_bar * var_ + (1.0 - alpha_bar);
  return linear_combination(std::sqrt(alpha_bar) * var_ / denom, noisy, (1.0 - alpha_bar) / denom, mean_);
}

FieldStack GaussianDenoiser::predict(const FieldStack& noisy, const FieldStack& cond, int t) const {
  check_denoiser_inputs(*this, noisy, cond);
  const double alpha_bar = schedule_.alpha_bar(t);
  return express(posterior_mean(noisy, alpha_bar), noisy, alpha_bar, param_);
}

ConditioningOracle::ConditioningOracle(int source_channel, int target_channels, int cond_channels,
                                       DiffusionSchedule schedule, Parameterization param)
    : source_channel_(source_channel),
      target_channels_(target_channels),
      cond_channels_(cond_channels),
      schedule_(std::move(schedule)),
      param_(param) {
  require(target_channels >= 1 && source_channel >= 0 && source_channel + target_channels <= cond_channels,
          "conditioning oracle: source channels outside the conditioning stack");
}

FieldStack ConditioningOracle::predict(const FieldStack& noisy, const FieldStack& cond, int t) const {
  check_denoiser_inputs(*this, noisy, cond);
  std::vector<Field2D> planes;
  for (int c = 0; c < target_channels_; ++c) planes.push_back(cond.plane(source_channel_ + c));
  return express(FieldStack(std::move(planes)), noisy, schedule_.alpha_bar(t), param_);
}

PointwiseDenoiser::PointwiseDenoiser(int target_channels, int cond_channels, double gain, double cond_gain)
    : target_channels_(target_channels), cond_channels_(cond_channels), gain_(gain), cond_gain_(cond_gain) {
  require(target_channels >= 1 && cond_channels >= 1, "channel counts must be positive");
}

FieldStack PointwiseDenoiser::predict(const FieldStack& noisy, const FieldStack& cond, int /*t*/) const {
  check_denoiser_inputs(*this, noisy, cond);
  FieldStack out = noisy;
  const auto guide = cond.plane(0).values();
  for (int c = 0; c < out.channels(); ++c) {
    auto v = out.plane(c).values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = gain_ * std::tanh(v[i]) + cond_gain_ * guide[i];
  }
  return out;
}

}  // namespace geodiff::toy
