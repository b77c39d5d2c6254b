#include "geodiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geodiff {

namespace {

std::vector<double> cumulative_alphas(const std::vector<double>& betas) {
  std::vector<double> out(betas.size());
  double acc = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    acc *= 1.0 - betas[i];
    out[i] = acc;
  }
  return out;
}

struct Coeffs {
  double signal;  // sqrt(abar)
  double noise;   // sqrt(1 - abar)
};

Coeffs coeffs(double alpha_bar) {
  require(alpha_bar >= 0.0 && alpha_bar <= 1.0, "alpha_bar must lie in [0, 1]");
  return {std::sqrt(alpha_bar), std::sqrt(1.0 - alpha_bar)};
}

void require_same(const FieldStack& a, const FieldStack& b, const char* what) {
  if (!a.same_shape(b)) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas)
    : betas_(std::move(betas)), alphas_cumprod_(cumulative_alphas(betas_)) {
  require(!betas_.empty(), "schedule needs at least one step");
  for (double b : betas_) require(b > 0.0 && b <= 1.0, "betas must lie in (0, 1]");
  for (std::size_t i = 1; i < alphas_cumprod_.size(); ++i) {
    if (!(alphas_cumprod_[i] < alphas_cumprod_[i - 1])) {
      throw NumericalError("alphas_cumprod is not strictly decreasing");
    }
  }
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas, std::vector<double> alphas_cumprod)
    : betas_(std::move(betas)), alphas_cumprod_(std::move(alphas_cumprod)) {}

double DiffusionSchedule::alpha_bar(int t) const {
  require(t >= 0 && t < timesteps(), "timestep " + std::to_string(t) + " out of range");
  return alphas_cumprod_[static_cast<std::size_t>(t)];
}

DiffusionSchedule make_schedule(int timesteps, double beta_start, double beta_end, BetaKind kind) {
  require(timesteps >= 1, "schedule needs at least one step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(timesteps));
  const double denom = timesteps > 1 ? static_cast<double>(timesteps - 1) : 1.0;
  for (int i = 0; i < timesteps; ++i) {
    const double frac = static_cast<double>(i) / denom;
    if (kind == BetaKind::linear) {
      betas[static_cast<std::size_t>(i)] = beta_start + frac * (beta_end - beta_start);
    } else {
      const double root = std::sqrt(beta_start) + frac * (std::sqrt(beta_end) - std::sqrt(beta_start));
      betas[static_cast<std::size_t>(i)] = root * root;
    }
  }
  return DiffusionSchedule(std::move(betas));
}

DiffusionSchedule default_schedule() {
  return make_schedule(1000, 0.00085, 0.012, BetaKind::scaled_linear);
}

DiffusionSchedule rescale_zero_snr(const DiffusionSchedule& schedule) {
  const int n = schedule.timesteps();
  if (n < 2) throw InvalidArgument("rescale_zero_snr: a single-step schedule cannot anchor both ends");
  const auto& abar = schedule.alphas_cumprod();
  if (abar.back() == 0.0) return schedule;

  const double first = std::sqrt(abar.front());
  const double last = std::sqrt(abar.back());
  const double gain = first / (first - last);

  std::vector<double> rescaled(abar.size());
  for (std::size_t i = 0; i < abar.size(); ++i) {
    const double root = (std::sqrt(abar[i]) - last) * gain;
    rescaled[i] = root * root;
  }
  rescaled.front() = abar.front();
  rescaled.back() = 0.0;

  std::vector<double> betas(abar.size());
  betas[0] = 1.0 - rescaled[0];
  for (std::size_t i = 1; i < rescaled.size(); ++i) betas[i] = 1.0 - rescaled[i] / rescaled[i - 1];
  return DiffusionSchedule(std::move(betas), std::move(rescaled));
}

TimestepSpacing make_spacing(int timesteps, int n_steps, SpacingMode mode) {
  require(timesteps >= 1, "spacing needs a positive step count");
  require(n_steps >= 1 && n_steps <= timesteps, "need 1 <= n_steps <= T");
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(n_steps));
  if (mode == SpacingMode::trailing) {
    const double stride = static_cast<double>(timesteps) / static_cast<double>(n_steps);
    for (int i = 0; i < n_steps; ++i) {
      const double raw = std::round(static_cast<double>(timesteps - 1) - i * stride);
      const int step = std::clamp(static_cast<int>(raw), 0, timesteps - 1);
      if (steps.empty() || step < steps.back()) steps.push_back(step);
    }
  } else {
    const int stride = timesteps / n_steps;
    for (int i = 0; i < n_steps; ++i) steps.push_back((n_steps - 1 - i) * stride);
  }
  return {mode, std::move(steps)};
}

std::string_view to_string(Parameterization p) {
  switch (p) {
    case Parameterization::epsilon: return "epsilon";
    case Parameterization::v: return "v";
    case Parameterization::x0: return "x0";
  }
  return "?";
}

Parameterization parse_parameterization(std::string_view name) {
  if (name == "epsilon" || name == "eps") return Parameterization::epsilon;
  if (name == "v") return Parameterization::v;
  if (name == "x0" || name == "sample") return Parameterization::x0;
  throw InvalidArgument("unknown parameterization '" + std::string(name) + "'");
}

std::string_view to_string(SpacingMode m) {
  return m == SpacingMode::leading ? "leading" : "trailing";
}

SpacingMode parse_spacing(std::string_view name) {
  if (name == "leading") return SpacingMode::leading;
  if (name == "trailing") return SpacingMode::trailing;
  throw InvalidArgument("unknown spacing '" + std::string(name) + "'");
}

FieldStack forward_diffuse(const FieldStack& x0, const FieldStack& eps, double alpha_bar) {
  require_same(x0, eps, "forward_diffuse");
  const Coeffs k = coeffs(alpha_bar);
  return linear_combination(k.signal, x0, k.noise, eps);
}

FieldStack forward_diffuse(const FieldStack& x0, const FieldStack& eps, int t,
                           const DiffusionSchedule& schedule) {
  return forward_diffuse(x0, eps, schedule.alpha_bar(t));
}

Estimates decompose(const FieldStack& model_out, const FieldStack& x_t, double alpha_bar,
                    Parameterization from) {
  require_same(model_out, x_t, "decompose");
  const Coeffs k = coeffs(alpha_bar);
  switch (from) {
    case Parameterization::epsilon: {
      if (k.signal == 0.0) throw NumericalError("epsilon prediction carries no signal at abar = 0");
      FieldStack x0 = linear_combination(1.0 / k.signal, x_t, -k.noise / k.signal, model_out);
      return {std::move(x0), model_out};
    }
    case Parameterization::x0: {
      if (k.noise == 0.0) throw NumericalError("x0 prediction implies no noise at abar = 1");
      FieldStack eps = linear_combination(1.0 / k.noise, x_t, -k.signal / k.noise, model_out);
      return {model_out, std::move(eps)};
    }
    case Parameterization::v:
      return {linear_combination(k.signal, x_t, -k.noise, model_out),
              linear_combination(k.noise, x_t, k.signal, model_out)};
  }
  throw InvalidArgument("unknown parameterization");
}

FieldStack convert_parameterization(const FieldStack& model_out, const FieldStack& x_t,
                                    double alpha_bar, Parameterization from, Parameterization to) {
  if (from == to) throw InvalidArgument("convert_parameterization: source equals target");
  const Coeffs k = coeffs(alpha_bar);
  // Direct formulas keep each round trip a two-term expression.
  if (from == Parameterization::v && to == Parameterization::x0) {
    require_same(model_out, x_t, "convert_parameterization");
    return linear_combination(k.signal, x_t, -k.noise, model_out);
  }
  if (from == Parameterization::v && to == Parameterization::epsilon) {
    require_same(model_out, x_t, "convert_parameterization");
    return linear_combination(k.noise, x_t, k.signal, model_out);
  }
  Estimates est = decompose(model_out, x_t, alpha_bar, from);
  switch (to) {
    case Parameterization::epsilon: return std::move(est.eps);
    case Parameterization::x0: return std::move(est.x0);
    case Parameterization::v: return linear_combination(k.signal, est.eps, -k.noise, est.x0);
  }
  throw InvalidArgument("unknown parameterization");
}

FieldStack convert_parameterization(const FieldStack& model_out, const FieldStack& x_t, int t,
                                    const DiffusionSchedule& schedule, Parameterization from,
                                    Parameterization to) {
  return convert_parameterization(model_out, x_t, schedule.alpha_bar(t), from, to);
}

FieldStack ddim_step(const FieldStack& x_t, const FieldStack& model_out, Parameterization param,
                     int t, int t_prev, const DiffusionSchedule& schedule) {
  if (t_prev >= t) throw InvalidArgument("ddim_step: t_prev must precede t");
  require(t_prev >= -1, "ddim_step: t_prev must be >= -1");
  Estimates est = decompose(model_out, x_t, schedule.alpha_bar(t), param);
  if (t_prev < 0) return std::move(est.x0);
  const Coeffs prev = coeffs(schedule.alpha_bar(t_prev));
  return linear_combination(prev.signal, est.x0, prev.noise, est.eps);
}

void validate(const LcmConfig& cfg, const DiffusionSchedule& schedule) {
  require(cfg.sigma_data > 0.0, "sigma_data must be positive");
  require(cfg.epsilon_boundary >= 0.0 && cfg.epsilon_boundary < 1.0,
          "epsilon_boundary must lie in [0, 1)");
  require(cfg.skip_k >= 1 && cfg.skip_k < schedule.timesteps(), "need 1 <= skip_k < T");
  require(cfg.huber_c > 0.0, "huber_c must be positive");
  require(cfg.ema_mu >= 0.0 && cfg.ema_mu < 1.0, "ema_mu must lie in [0, 1)");
}

BoundaryCoeffs lcm_boundary_coeffs(int t, const LcmConfig& cfg, const DiffusionSchedule& schedule) {
  require(t >= 0 && t < schedule.timesteps(), "timestep out of range");
  const int n = schedule.timesteps();
  const double unit_t = n > 1 ? static_cast<double>(t) / static_cast<double>(n - 1) : 0.0;
  const double offset = unit_t - cfg.epsilon_boundary;
  const double sigma2 = cfg.sigma_data * cfg.sigma_data;
  const double denom = offset * offset + sigma2;
  return {sigma2 / denom, offset / std::sqrt(denom)};
}

FieldStack consistency_apply(const FieldStack& x_t, const FieldStack& x0_pred, int t,
                             const LcmConfig& cfg, const DiffusionSchedule& schedule) {
  require_same(x_t, x0_pred, "consistency_apply");
  const BoundaryCoeffs k = lcm_boundary_coeffs(t, cfg, schedule);
  return linear_combination(k.c_skip, x_t, k.c_out, x0_pred);
}

double pseudo_huber(const FieldStack& x, const FieldStack& y, double c) {
  require_same(x, y, "pseudo_huber");
  require(c > 0.0, "pseudo_huber: c must be positive");
  double sq = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) {
    auto a = x.plane(ch).values();
    auto b = y.plane(ch).values();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      sq += d * d;
    }
  }
  // sqrt(sq + c^2) - c, rearranged to avoid cancellation when sq << c^2.
  return sq / (std::sqrt(sq + c * c) + c);
}

std::vector<double> ema_update(const std::vector<double>& target,
                               const std::vector<double>& student, double mu) {
  require(target.size() == student.size(), "ema_update: length mismatch");
  require(mu >= 0.0 && mu < 1.0, "ema_update: mu must lie in [0, 1)");
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu * target[i] + (1.0 - mu) * student[i];
  return out;
}

}  // namespace geodiff
