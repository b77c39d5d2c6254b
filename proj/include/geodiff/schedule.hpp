#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "geodiff/grid.hpp"

namespace geodiff {

enum class BetaKind { linear, scaled_linear };

/// Noise schedule of a T-step forward diffusion process.
///
/// `alphas_cumprod[t]` is the product of (1 - beta_s) for s <= t and sets the
/// signal/noise mix at step t: x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps.
class DiffusionSchedule {
 public:
  /// Builds a schedule from explicit betas in (0, 1].
  explicit DiffusionSchedule(std::vector<double> betas);

  int timesteps() const { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas_cumprod() const { return alphas_cumprod_; }
  double alpha_bar(int t) const;

 private:
  friend DiffusionSchedule rescale_zero_snr(const DiffusionSchedule& schedule);
  DiffusionSchedule(std::vector<double> betas, std::vector<double> alphas_cumprod);

  std::vector<double> betas_;
  std::vector<double> alphas_cumprod_;
};

DiffusionSchedule make_schedule(int timesteps, double beta_start, double beta_end, BetaKind kind);

/// T = 1000, scaled_linear betas in [0.00085, 0.012].
DiffusionSchedule default_schedule();

/// Shifts and rescales sqrt(abar) so sqrt(abar_0) is kept and sqrt(abar_{T-1})
/// becomes exactly zero. Idempotent.
DiffusionSchedule rescale_zero_snr(const DiffusionSchedule& schedule);

enum class SpacingMode { leading, trailing };

struct TimestepSpacing {
  SpacingMode mode;
  std::vector<int> steps;  // strictly decreasing
};

TimestepSpacing make_spacing(int timesteps, int n_steps, SpacingMode mode);

enum class Parameterization { epsilon, v, x0 };

std::string_view to_string(Parameterization p);
Parameterization parse_parameterization(std::string_view name);
std::string_view to_string(SpacingMode m);
SpacingMode parse_spacing(std::string_view name);

/// sqrt(abar) x0 + sqrt(1 - abar) eps.
FieldStack forward_diffuse(const FieldStack& x0, const FieldStack& eps, double alpha_bar);
FieldStack forward_diffuse(const FieldStack& x0, const FieldStack& eps, int t,
                           const DiffusionSchedule& schedule);

/// Clean-sample and noise estimates implied by one model output.
struct Estimates {
  FieldStack x0;
  FieldStack eps;
};

Estimates decompose(const FieldStack& model_out, const FieldStack& x_t, double alpha_bar,
                    Parameterization from);

FieldStack convert_parameterization(const FieldStack& model_out, const FieldStack& x_t,
                                    double alpha_bar, Parameterization from, Parameterization to);
FieldStack convert_parameterization(const FieldStack& model_out, const FieldStack& x_t, int t,
                                    const DiffusionSchedule& schedule, Parameterization from,
                                    Parameterization to);

/// Deterministic (eta = 0) DDIM update from t to t_prev; t_prev = -1 returns
/// the clean estimate.
FieldStack ddim_step(const FieldStack& x_t, const FieldStack& model_out, Parameterization param,
                     int t, int t_prev, const DiffusionSchedule& schedule);

struct LcmConfig {
  double sigma_data = 0.5;
  double epsilon_boundary = 0.0;  // on the unit time axis
  int skip_k = 200;
  double huber_c = 0.001;
  double ema_mu = 0.95;
};

void validate(const LcmConfig& cfg, const DiffusionSchedule& schedule);

struct BoundaryCoeffs {
  double c_skip;
  double c_out;
};

/// Consistency-model skip/output weights with t mapped to t / (T - 1).
BoundaryCoeffs lcm_boundary_coeffs(int t, const LcmConfig& cfg, const DiffusionSchedule& schedule);

/// c_skip(t) x_t + c_out(t) x0_pred.
FieldStack consistency_apply(const FieldStack& x_t, const FieldStack& x0_pred, int t,
                             const LcmConfig& cfg, const DiffusionSchedule& schedule);

/// sqrt(||x - y||^2 + c^2) - c with the norm taken over the whole stack.
double pseudo_huber(const FieldStack& x, const FieldStack& y, double c);

/// mu * target + (1 - mu) * student.
std::vector<double> ema_update(const std::vector<double>& target,
                               const std::vector<double>& student, double mu);

}  // namespace geodiff
