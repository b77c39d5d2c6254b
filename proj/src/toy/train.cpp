#include "geodiff/toy/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geodiff/normalize.hpp"
#include "geodiff/random.hpp"

namespace geodiff::toy {

namespace {

// Stream ids for split_seed.
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kDistillStream = 4;
constexpr std::uint64_t kSampleStream = 5;

constexpr int kDivergenceWindow = 100;
constexpr double kDivergenceFactor = 10.0;

FieldStack regression_target(const FieldStack& x0, const FieldStack& noise, double abar, Parameterization param) {
  switch (param) {
    case Parameterization::epsilon:
      return noise;
    case Parameterization::x0:
      return x0;
    case Parameterization::v:
      return linear_combination(std::sqrt(abar), noise, -std::sqrt(1.0 - abar), x0);
  }
  throw InvalidArgument("unknown parameterization");
}

// d(x0 estimate) / d(model output) for a fixed x_t.
double clean_estimate_gain(double abar, Parameterization param) {
  switch (param) {
    case Parameterization::epsilon:
      if (abar <= 0.0) throw NumericalError("epsilon output carries no clean signal at abar = 0");
      return -std::sqrt(1.0 - abar) / std::sqrt(abar);
    case Parameterization::v:
      return -std::sqrt(1.0 - abar);
    case Parameterization::x0:
      return 1.0;
  }
  throw InvalidArgument("unknown parameterization");
}

FieldStack noise_like(const FieldStack& x, Rng& rng) { return gaussian_noise(x.channels(), x.height(), x.width(), rng); }

int draw_timestep(Rng& rng, int timesteps, int min_t) {
  int t = rng.uniform_int(0, timesteps - 1);
  while (t < min_t) t = rng.uniform_int(0, timesteps - 1);
  return t;
}

// Points T-1, T-1-k, T-1-2k, ... that are still >= k.
int draw_grid_timestep(Rng& rng, int timesteps, int k) {
  const int last = (timesteps - 1 - k) / k;
  return timesteps - 1 - k * rng.uniform_int(0, last);
}

void scale_in_place(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

}  // namespace

TrainingSample make_training_sample(const ToyScene& scene) {
  const NormalizedDepth nd = normalize_depth(scene.depth);
  FieldStack cond = scene.rgb;
  for (int c = 0; c < cond.channels(); ++c) {
    for (double& v : cond.plane(c).values()) v = 2.0 * v - 1.0;
  }
  return {replicate_channels(nd.depth), std::move(cond)};
}

double denoising_loss(const ToyDenoiser& model, const TrainingSample& sample, int t, const FieldStack& noise,
                      const DiffusionSchedule& schedule, std::span<double> grad) {
  const double abar = schedule.alpha_bar(t);
  const FieldStack x_t = forward_diffuse(sample.target, noise, abar);
  const FieldStack y = regression_target(sample.target, noise, abar, model.parameterization());
  ForwardTape tape;
  const bool want_grad = !grad.empty();
  const FieldStack out = model.forward(x_t, &sample.cond, t, want_grad ? &tape : nullptr);

  const double n = static_cast<double>(out.pixels()) * out.channels();
  double loss = 0.0;
  FieldStack d_out(out.channels(), out.height(), out.width());
  for (int c = 0; c < out.channels(); ++c) {
    auto o = out.plane(c).values();
    auto target = y.plane(c).values();
    auto d = d_out.plane(c).values();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double r = o[i] - target[i];
      loss += r * r;
      d[i] = 2.0 * r / n;
    }
  }
  if (want_grad) model.backward(tape, d_out, grad);
  return loss / n;
}

double evaluation_loss(const ToyDenoiser& model, std::span<const TrainingSample> samples,
                       const DiffusionSchedule& schedule, std::uint64_t seed, int count) {
  require(!samples.empty() && count >= 1, "evaluation_loss needs samples and draws");
  Rng rng(split_seed(seed, kEvalStream));
  double total = 0.0;
  for (const TrainingSample& s : samples) {
    for (int k = 0; k < count; ++k) {
      const int t = rng.uniform_int(0, schedule.timesteps() - 1);
      const FieldStack noise = noise_like(s.target, rng);
      total += denoising_loss(model, s, t, noise, schedule);
    }
  }
  return total / static_cast<double>(samples.size() * static_cast<std::size_t>(count));
}

TrainResult train_denoiser(ToyDenoiser init, std::span<const TrainingSample> samples, const TrainConfig& cfg,
                           const DiffusionSchedule& schedule) {
  require(!samples.empty(), "train_denoiser needs at least one sample");
  require(cfg.iterations >= 0 && cfg.batch >= 1, "invalid training budget");
  require(init.arch().timesteps == schedule.timesteps(), "network and schedule disagree on T");
  TrainResult result{std::move(init), {}};
  ToyDenoiser& model = result.model;
  Adam adam(model.params().size(), cfg.learning_rate);
  Rng rng(split_seed(cfg.seed, kTrainStream));
  std::vector<double> grad(model.params().size());
  int above = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(samples.size()) - 1));
      const int t = rng.uniform_int(0, schedule.timesteps() - 1);
      const FieldStack noise = noise_like(samples[idx].target, rng);
      loss += denoising_loss(model, samples[idx], t, noise, schedule, grad);
    }
    loss /= cfg.batch;
    scale_in_place(grad, 1.0 / cfg.batch);
    result.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("training loss became non-finite at iteration " + std::to_string(it), result.loss_trace);
    }
    above = loss > kDivergenceFactor * result.loss_trace.front() ? above + 1 : 0;
    if (above >= kDivergenceWindow) {
      throw TrainingDiverged("training diverged at iteration " + std::to_string(it), result.loss_trace);
    }
    adam.step(model.params(), grad);
  }
  return result;
}

TrainResult train_denoiser(std::span<const ToyScene> scenes, const ToyArch& arch, Parameterization param,
                           const TrainConfig& cfg, const DiffusionSchedule& schedule) {
  require(!scenes.empty(), "train_denoiser needs at least one scene");
  std::vector<TrainingSample> samples;
  for (const ToyScene& s : scenes) samples.push_back(make_training_sample(s));
  return train_denoiser(ToyDenoiser::initialize(arch, param, cfg.seed), samples, cfg, schedule);
}

DistillResult distill_lcm(const ToyDenoiser& teacher, const DistillConfig& cfg,
                          std::span<const TrainingSample> samples, const DiffusionSchedule& schedule) {
  validate(cfg.lcm, schedule);
  require(!samples.empty(), "distill_lcm needs at least one sample");
  require(cfg.iterations >= 0 && cfg.batch >= 1, "invalid distillation budget");
  DistillResult result{teacher, teacher, {}};
  ToyDenoiser& student = result.student;
  const Parameterization param = teacher.parameterization();
  const int k = cfg.lcm.skip_k;
  Adam adam(student.params().size(), cfg.learning_rate);
  Rng rng(split_seed(cfg.seed, kDistillStream));
  std::vector<double> grad(student.params().size());

  for (int it = 0; it < cfg.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const TrainingSample& s =
          samples[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(samples.size()) - 1))];
      const int t = cfg.skip_grid ? draw_grid_timestep(rng, schedule.timesteps(), k) : draw_timestep(rng, schedule.timesteps(), k);
      const FieldStack noise = noise_like(s.target, rng);
      const FieldStack x_t = forward_diffuse(s.target, noise, t, schedule);

      // Teacher solver step to t - k, then the target network's consistency output there.
      const FieldStack z_prev = ddim_step(x_t, teacher.predict(x_t, s.cond, t), param, t, t - k, schedule);
      const double abar_prev = schedule.alpha_bar(t - k);
      const FieldStack x0_target = decompose(result.target.predict(z_prev, s.cond, t - k), z_prev, abar_prev, param).x0;
      const FieldStack f_target = consistency_apply(z_prev, x0_target, t - k, cfg.lcm, schedule);

      ForwardTape tape;
      const double abar = schedule.alpha_bar(t);
      const FieldStack out = student.forward(x_t, &s.cond, t, &tape);
      const FieldStack f_student = consistency_apply(x_t, decompose(out, x_t, abar, param).x0, t, cfg.lcm, schedule);
      const double l = pseudo_huber(f_student, f_target, cfg.lcm.huber_c);
      loss += l;

      // dL/df = r / sqrt(|r|^2 + c^2), df/dout = c_out * dx0/dout.
      const FieldStack r = linear_combination(1.0, f_student, -1.0, f_target);
      const double c = cfg.lcm.huber_c;
      const double root = l + c;  // sqrt(|r|^2 + c^2)
      const double gain = lcm_boundary_coeffs(t, cfg.lcm, schedule).c_out * clean_estimate_gain(abar, param) / root;
      student.backward(tape, linear_combination(gain, r, 0.0, r), grad);
    }
    loss /= cfg.batch;
    if (!std::isfinite(loss)) throw NumericalError("distillation loss became non-finite at iteration " + std::to_string(it));
    scale_in_place(grad, 1.0 / cfg.batch);
    result.loss_trace.push_back(loss);
    adam.step(student.params(), grad);
    result.target.params() = ema_update(result.target.params(), student.params(), cfg.lcm.ema_mu);
  }
  return result;
}

FieldStack consistency_sample(const ToyDenoiser& model, const FieldStack& cond, std::span<const int> steps,
                              const LcmConfig& lcm, const DiffusionSchedule& schedule, std::uint64_t seed) {
  require(!steps.empty(), "consistency_sample needs at least one step");
  const ChannelSignature sig = model.signature();
  // Same initial-noise stream as ddim_sample, so both samplers start from one draw.
  Rng init(split_seed(seed, 1));
  FieldStack x = gaussian_noise(sig.target_channels, cond.height(), cond.width(), init);
  Rng rng(split_seed(seed, kSampleStream));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const FieldStack x0 = decompose(model.predict(x, cond, t), x, schedule.alpha_bar(t), model.parameterization()).x0;
    FieldStack f = consistency_apply(x, x0, t, lcm, schedule);
    if (i + 1 == steps.size()) return f;
    require(steps[i + 1] < t, "consistency steps must be strictly decreasing");
    x = forward_diffuse(f, noise_like(f, rng), steps[i + 1], schedule);
  }
  return x;
}

Mask patch_agreement_mask(const Field2D& prediction, const Field2D& reference, int patch, double eta) {
  require(prediction.same_shape(reference), "patch_agreement_mask: shape mismatch");
  require(patch >= 1, "patch size must be positive");
  require(eta >= 0.0, "eta must be non-negative");
  const int h = prediction.height();
  const int w = prediction.width();
  Mask keep(prediction.size(), 0);
  for (int r0 = 0; r0 < h; r0 += patch) {
    for (int c0 = 0; c0 < w; c0 += patch) {
      const int r1 = std::min(h, r0 + patch);
      const int c1 = std::min(w, c0 + patch);
      double sum = 0.0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) sum += std::abs(prediction(r, c) - reference(r, c));
      }
      const std::uint8_t flag = sum / ((r1 - r0) * (c1 - c0)) <= eta ? 1 : 0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) keep[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)] = flag;
      }
    }
  }
  return keep;
}

}  // namespace geodiff::toy
