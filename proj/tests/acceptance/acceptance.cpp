// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "geodiff/ensemble.hpp"
#include "geodiff/io.hpp"
#include "geodiff/metrics.hpp"
#include "geodiff/normalize.hpp"
#include "geodiff/random.hpp"
#include "geodiff/schedule.hpp"
#include "geodiff/tiling.hpp"
#include "geodiff/toy/oracles.hpp"
#include "geodiff/toy/scene.hpp"
#include "geodiff/toy/train.hpp"

using namespace geodiff;
using namespace geodiff::toy;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void check(bool condition, const std::string& what) {
    if (!condition) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double max_abs(const FieldStack& a, const FieldStack& b) {
  double m = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    for (std::size_t i = 0; i < a.pixels(); ++i) m = std::max(m, std::abs(a.plane(c)[i] - b.plane(c)[i]));
  }
  return m;
}

double mse(const FieldStack& a, const FieldStack& b) {
  double s = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    for (std::size_t i = 0; i < a.pixels(); ++i) s += std::pow(a.plane(c)[i] - b.plane(c)[i], 2);
  }
  return s / static_cast<double>(a.channels() * a.pixels());
}

bool bit_equal(const FieldStack& a, const FieldStack& b) {
  if (!a.same_shape(b)) return false;
  for (int c = 0; c < a.channels(); ++c) {
    if (!std::ranges::equal(a.plane(c).values(), b.plane(c).values())) return false;
  }
  return true;
}

FieldStack random_stack(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_noise(c, h, w, rng);
}

double pearson(const Field2D& a, const Field2D& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Frozen settings of the single-scene training and distillation task. The
// values were fixed by a calibration run and must not be tuned per run.
constexpr std::uint64_t kSceneSeed = 7;
constexpr int kSceneSize = 16;
constexpr std::uint64_t kInitSeed = 1;
constexpr std::uint64_t kEvalSeed = 99;
constexpr int kEvalDraws = 32;
constexpr int kTrainIterations = 2000;
constexpr int kTrainBatch = 4;
constexpr double kTrainLearningRate = 2e-3;
constexpr int kHiddenLayers = 7;
constexpr int kWidth = 24;
constexpr int kDistillIterations = 1000;
constexpr double kDistillLearningRate = 1e-4;
constexpr double kSigmaData = 5e-5;
constexpr int kSampleSeeds = 8;

struct SharedTask {
  DiffusionSchedule schedule = rescale_zero_snr(default_schedule());
  std::vector<TrainingSample> samples{make_training_sample(gen_scene(kSceneSeed, kSceneSize, kSceneSize))};
  std::optional<ToyDenoiser> teacher;
};

SharedTask& task() {
  static SharedTask t;
  return t;
}

ToyArch task_arch() {
  ToyArch a;
  a.hidden_layers = kHiddenLayers;
  a.width = kWidth;
  return a;
}

// --- 1 ------------------------------------------------------------------

Outcome schedule_correctness() {
  Outcome o;
  const DiffusionSchedule s = default_schedule();
  long double prod = 1.0L;
  const long double a = std::sqrt(0.00085L);
  const long double b = std::sqrt(0.012L);
  double worst = 0.0;
  bool decreasing = true;
  for (int t = 0; t < 1000; ++t) {
    const long double root = a + (b - a) * t / 999.0L;
    prod *= 1.0L - root * root;
    worst = std::max(worst, std::abs(s.alpha_bar(t) - static_cast<double>(prod)));
    if (t > 0 && !(s.alpha_bar(t) < s.alpha_bar(t - 1))) decreasing = false;
  }
  o.check(decreasing, "alpha_bar not strictly decreasing");
  o.check(worst <= 1e-12, "cumprod mismatch " + fmt("%.3g", worst));
  const DiffusionSchedule z = rescale_zero_snr(s);
  o.check(z.alpha_bar(999) == 0.0, "terminal alpha_bar not zero");
  o.check(z.alpha_bar(0) == s.alpha_bar(0), "alpha_bar(0) changed");
  o.note("max cumprod error " + fmt("%.2g", worst));
  return o;
}

// --- 2 ------------------------------------------------------------------

Outcome sampler_exactness() {
  Outcome o;
  const FieldStack x_star = random_stack(3, 16, 16, 21);
  const FieldStack cond(1, 16, 16);
  const TimestepSpacing one = make_spacing(1000, 1, SpacingMode::trailing);
  double worst = 0.0;
  for (bool zero_snr : {false, true}) {
    const DiffusionSchedule s = zero_snr ? rescale_zero_snr(default_schedule()) : default_schedule();
    for (Parameterization p : {Parameterization::epsilon, Parameterization::v, Parameterization::x0}) {
      // Noise prediction is undefined at zero terminal SNR.
      if (zero_snr && p == Parameterization::epsilon) continue;
      const PointMassDenoiser oracle(x_star, s, 1, p);
      worst = std::max(worst, max_abs(ddim_sample(cond, oracle, one, s, 5), x_star));
    }
  }
  o.check(worst <= 1e-6, "1-step error " + fmt("%.3g", worst));
  const TimestepSpacing leading = make_spacing(1000, 1, SpacingMode::leading);
  o.check(leading.steps.size() == 1 && leading.steps[0] == 0, "leading n=1 does not start at t=0");
  o.note("1-step max error " + fmt("%.2g", worst));
  return o;
}

// --- 3 ------------------------------------------------------------------

// Deterministic DDIM with the Gaussian oracle is affine in the initial noise,
// so the exact sample variance is the squared slope of that map.
double ddim_gaussian_variance(const DiffusionSchedule& s, const TimestepSpacing& sp, double var) {
  double slope = 1.0;
  for (std::size_t i = 0; i < sp.steps.size(); ++i) {
    const double a = s.alpha_bar(sp.steps[i]);
    const double x0 = std::sqrt(a) * var / (a * var + 1.0 - a) * slope;
    const double eps = (slope - std::sqrt(a) * x0) / std::sqrt(1.0 - a);
    const double next = i + 1 < sp.steps.size() ? s.alpha_bar(sp.steps[i + 1]) : 1.0;
    slope = std::sqrt(next) * x0 + std::sqrt(1.0 - next) * eps;
  }
  return slope * slope;
}

Outcome gaussian_posterior() {
  Outcome o;
  // Zero terminal SNR: the sampler starts from the true terminal marginal.
  // The oracle speaks v, since noise prediction is undefined at abar = 0.
  const DiffusionSchedule s = rescale_zero_snr(default_schedule());
  FieldStack mean(1, 1, 2);
  mean.plane(0)[0] = 0.4;
  mean.plane(0)[1] = -1.2;
  const double var = 0.25;
  const GaussianDenoiser oracle(mean, var, s, 1, Parameterization::v);
  const FieldStack cond(1, 1, 2);
  const TimestepSpacing sp = make_spacing(1000, 50, SpacingMode::trailing);
  const int n = 10000;
  std::vector<double> sum(2, 0.0);
  std::vector<double> sum2(2, 0.0);
  for (int seed = 0; seed < n; ++seed) {
    const FieldStack x = ddim_sample(cond, oracle, sp, s, static_cast<std::uint64_t>(seed));
    for (std::size_t i = 0; i < 2; ++i) {
      sum[i] += x.plane(0)[i];
      sum2[i] += x.plane(0)[i] * x.plane(0)[i];
    }
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const double m = sum[i] / n;
    const double v = sum2[i] / n - m * m;
    const double se = std::sqrt(var / n);
    o.check(std::abs(m - mean.plane(0)[i]) <= 3.0 * se, "mean off by " + fmt("%.3g", std::abs(m - mean.plane(0)[i])));
    o.check(std::abs(v - var) <= 0.1 * var, "variance " + fmt("%.4g", v));
    o.note("pixel " + std::to_string(i) + " mean err " + fmt("%.2g", (m - mean.plane(0)[i]) / se) + " se, var " +
           fmt("%.4g", v));
  }
  o.note("exact 50-step deterministic variance " + fmt("%.4g", ddim_gaussian_variance(s, sp, var)) + " vs " +
         fmt("%.4g", var));
  return o;
}

// --- 4 ------------------------------------------------------------------

Outcome ensembling() {
  Outcome o;
  Field2D hidden(64, 64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      hidden(r, c) = 3.0 + std::sin(0.11 * r) * std::cos(0.07 * c) + 0.02 * r + 0.5 * std::exp(-0.01 * ((r - 30) * (r - 30) + (c - 40) * (c - 40)));
    }
  }
  const auto [lo, hi] = std::minmax_element(hidden.values().begin(), hidden.values().end());
  const double range = *hi - *lo;
  const double scales[] = {0.5, 1.7, 3.0, 0.9, 2.2};
  const double shifts[] = {1.0, -2.0, 0.3, 4.0, -0.7};
  std::vector<Field2D> members;
  for (int k = 0; k < 5; ++k) {
    Field2D m = hidden;
    Rng rng(300 + static_cast<std::uint64_t>(k));
    for (double& v : m.values()) v += 0.01 * range * rng.normal();
    members.push_back(apply_affine(m, scales[k], shifts[k]));
  }
  const EnsembleSolution sol = optimize_ensemble(members);
  const double r = pearson(sol.merged, hidden);
  const auto [mlo, mhi] = std::minmax_element(sol.merged.values().begin(), sol.merged.values().end());
  const double reg = std::abs(*mlo) + std::abs(1.0 - *mhi);
  bool monotone = true;
  for (std::size_t i = 1; i < sol.objective_trace.size(); ++i) {
    monotone = monotone && sol.objective_trace[i] <= sol.objective_trace[i - 1];
  }
  o.check(r >= 0.999, "pearson " + fmt("%.6f", r));
  o.check(reg <= 0.05, "regularizer " + fmt("%.4f", reg));
  o.check(monotone, "objective trace increased");
  o.note("r " + fmt("%.6f", r) + ", range term " + fmt("%.4f", reg) + ", iterations " +
         std::to_string(sol.iterations_used));
  return o;
}

// --- 5 ------------------------------------------------------------------

Outcome metric_invariance() {
  Outcome o;
  Rng rng(55);
  Field2D gt(24, 24);
  Field2D pred(24, 24);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = 1.0 + 9.0 * rng.uniform();
    pred[i] = 0.3 * gt[i] + 1.0 + 0.4 * rng.normal();
  }
  const MetricsReport base = evaluate_depth(pred, gt);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double a = 0.01 + 50.0 * rng.uniform();
    const double b = -20.0 + 40.0 * rng.uniform();
    const MetricsReport r = evaluate_depth(apply_affine(pred, a, b), gt);
    worst = std::max(worst, std::abs(r.values.at("absrel") - base.values.at("absrel")));
    worst = std::max(worst, std::abs(r.values.at("delta1") - base.values.at("delta1")));
  }
  o.check(worst <= 1e-9, "affine drift " + fmt("%.3g", worst));
  const Field2D a(1, 3, std::vector<double>{1, 2, 3});
  const Field2D d(1, 3, std::vector<double>{1, 2, 4});
  o.check(std::abs(absrel(a, d) - 25.0 / 3.0) <= 1e-12, "absrel example " + fmt("%.6f", absrel(a, d)));
  o.check(std::abs(delta1(a, d) - 200.0 / 3.0) <= 1e-12, "delta1 example " + fmt("%.6f", delta1(a, d)));
  o.note("absrel " + fmt("%.2f", absrel(a, d)) + "%, delta1 " + fmt("%.2f", delta1(a, d)) + "%, drift " +
         fmt("%.2g", worst));
  return o;
}

// --- 6 ------------------------------------------------------------------

Outcome normals_suite() {
  Outcome o;
  const FieldStack gt = normalize_normals(random_stack(3, 20, 20, 61)).normals;
  const AngularMetrics same = angular_metrics(gt, gt);
  o.check(same.mean_deg == 0.0 && same.pct_below_11_25 == 100.0, "self comparison not (0, 100)");

  FieldStack up(std::vector<Field2D>{Field2D(8, 8, 0.0), Field2D(8, 8, 0.0), Field2D(8, 8, 1.0)});
  FieldStack tilted = up;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const double angle = (r < 4 ? 10.0 : 20.0) * std::numbers::pi / 180.0;
      tilted.plane(1)(r, c) = std::sin(angle);
      tilted.plane(2)(r, c) = std::cos(angle);
    }
  }
  const AngularMetrics split = angular_metrics(tilted, up);
  o.check(std::abs(split.mean_deg - 15.0) <= 1e-6 && std::abs(split.pct_below_11_25 - 50.0) <= 1e-6,
          "half split gives " + fmt("%.9f", split.mean_deg));

  std::size_t checked = 0;
  bool selection = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int n = 1 + static_cast<int>(seed % 7);
    std::vector<FieldStack> members;
    for (int k = 0; k < n; ++k) members.push_back(normalize_normals(random_stack(3, 9, 11, 1000 * seed + k)).normals);
    const FieldStack out = ensemble_normals(members);
    for (std::size_t i = 0; i < out.pixels(); ++i) {
      bool found = false;
      for (const FieldStack& m : members) {
        found = found || (m.plane(0)[i] == out.plane(0)[i] && m.plane(1)[i] == out.plane(1)[i] &&
                          m.plane(2)[i] == out.plane(2)[i]);
      }
      selection = selection && found;
      ++checked;
    }
  }
  o.check(selection, "ensemble_normals blended vectors");
  o.note("split mean " + fmt("%.9f", split.mean_deg) + " deg, " + std::to_string(checked) + " selections checked");
  return o;
}

// --- 7 ------------------------------------------------------------------

Outcome edge_metrics() {
  Outcome o;
  auto step = [](int col) {
    Field2D d(32, 32, 1.0);
    for (int r = 0; r < 32; ++r) {
      for (int c = col; c < 32; ++c) d(r, c) = 2.0;
    }
    return d;
  };
  const EdgeMap gt = extract_depth_edges(step(12), kDefaultEdgeThreshold, EdgeSource::gt);
  auto line = [](int col, EdgeSource source) {
    EdgeMap e{Field2D(32, 32, 0.0), kDefaultEdgeThreshold, source};
    for (int r = 0; r < 32; ++r) e.edges(r, col) = 1.0;
    return e;
  };
  const EdgeMap line_gt = line(12, EdgeSource::gt);
  const EdgeMap shifted = line(14, EdgeSource::pred);
  const DbeResult same = dbe(gt, gt);
  const EdgePrecisionRecall pr = edge_pr(gt, gt);
  o.check(gt.count() > 0, "no edges extracted");
  o.check(same.accuracy == 0.0 && same.completeness == 0.0, "identical DBE not zero");
  o.check(pr.precision == 1.0 && pr.recall == 1.0, "identical P/R not one");
  const DbeResult moved = dbe(shifted, line_gt);
  // Oracle: brute-force nearest-edge distances.
  auto oracle = [](const EdgeMap& from, const EdgeMap& to) {
    double total = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        if (from.edges(r, c) == 0.0) continue;
        double best = 1e300;
        for (int rr = 0; rr < 32; ++rr) {
          for (int cc = 0; cc < 32; ++cc) {
            if (to.edges(rr, cc) != 0.0) best = std::min(best, std::hypot(rr - r, cc - c));
          }
        }
        total += std::min(best, kDefaultDbeTruncation);
        ++n;
      }
    }
    return total / static_cast<double>(n);
  };
  o.check(moved.accuracy == 2.0 && moved.completeness == 2.0,
          "shifted DBE (" + fmt("%.6f", moved.accuracy) + ", " + fmt("%.6f", moved.completeness) + ")");
  o.check(moved.accuracy == oracle(shifted, line_gt) && moved.completeness == oracle(line_gt, shifted),
          "oracle disagreement");
  o.note("shifted DBE (" + fmt("%g", moved.accuracy) + ", " + fmt("%g", moved.completeness) + ")");
  return o;
}

// --- 8 ------------------------------------------------------------------

Outcome multidiffusion() {
  Outcome o;
  const DiffusionSchedule s = rescale_zero_snr(default_schedule());
  const PointwiseDenoiser pointwise(3, 1);
  const TimestepSpacing sp = make_spacing(1000, 10, SpacingMode::trailing);
  const FieldStack cond = random_stack(1, 64, 64, 81);
  const TileLayout single = make_tile_layout(64, 64, 64, 64, 0.5);
  const FieldStack untiled = ddim_sample(cond, pointwise, sp, s, 3);
  o.check(bit_equal(multidiffusion_sample(cond, pointwise, single, sp, s, 3), untiled), "single tile differs");
  const TileLayout layout = make_tile_layout(64, 64, 32, 32, 0.5);
  const double err = max_abs(multidiffusion_sample(cond, pointwise, layout, sp, s, 3), untiled);
  o.check(err <= 1e-6, "tiled vs untiled " + fmt("%.3g", err));
  bool constant = true;
  for (double c : {0.25, -7.5, 3.0e-9}) {
    const std::vector<FieldStack> outputs(layout.tiles.size(), FieldStack(3, 32, 32, c));
    const FieldStack fused = fuse_tiles(outputs, layout);
    for (int ch = 0; ch < 3; ++ch) {
      for (double v : fused.plane(ch).values()) constant = constant && v == c;
    }
  }
  o.check(constant, "fusion changed a constant");
  o.note(std::to_string(layout.tiles.size()) + " tiles, tiled error " + fmt("%.2g", err));
  return o;
}

// --- 9 ------------------------------------------------------------------

Outcome hires_pipeline_check() {
  Outcome o;
  const DiffusionSchedule s = rescale_zero_snr(default_schedule());
  const ToyScene scene = gen_scene(91, 64, 64);
  const NormalizedDepth nd = normalize_depth(scene.depth);
  const FieldStack parts[] = {make_training_sample(scene).cond, replicate_channels(nd.depth)};
  const FieldStack image = concat_channels(parts);
  // The base reads the depth hint from the image; the refiner passes its
  // global-depth conditioning through unchanged.
  const ConditioningOracle base(3, 3, 6, s);
  const ConditioningOracle refiner(0, 3, 9, s);
  HiresParams params;
  params.target_scale = 4;
  params.output_norm = nd.norm;
  const TimestepSpacing sp = make_spacing(1000, 4, SpacingMode::trailing);
  const HiresResult r = hires_pipeline(image, base, refiner, params, sp, s, 9);
  o.check(r.stages.size() == 3, "stage count " + std::to_string(r.stages.size()));
  o.check(r.depth.height() == 64 && r.depth.width() == 64 && r.stages[0].height() == 16, "output is not 4x native");
  FieldStack expected = r.stages[0];
  expected = resample_bilinear(expected, 32, 32);
  expected = resample_bilinear(expected, 64, 64);
  const double err = max_abs(r.stages.back(), expected);
  o.check(err <= 1e-6, "passthrough error " + fmt("%.3g", err));
  o.note("native 16x16 -> 64x64, passthrough error " + fmt("%.2g", err));
  return o;
}

// --- 10 -----------------------------------------------------------------

Outcome training_and_gradients() {
  Outcome o;
  SharedTask& shared = task();
  const ToyDenoiser init = ToyDenoiser::initialize(task_arch(), Parameterization::v, kInitSeed);
  TrainConfig cfg;
  cfg.iterations = kTrainIterations;
  cfg.batch = kTrainBatch;
  cfg.learning_rate = kTrainLearningRate;
  cfg.seed = kInitSeed;
  const double before = evaluation_loss(init, shared.samples, shared.schedule, kEvalSeed, kEvalDraws);
  const TrainResult trained = train_denoiser(init, shared.samples, cfg, shared.schedule);
  const double after = evaluation_loss(trained.model, shared.samples, shared.schedule, kEvalSeed, kEvalDraws);
  shared.teacher = trained.model;
  o.check(after < 0.1 * before, "loss ratio " + fmt("%.4f", after / before));

  // Every parameter of a small network, then a spread of parameters of the
  // task network, against central differences with step 1e-5. A step of
  // 1e-4 leaves a truncation error near 1e-4 on small gradients.
  double worst = 0.0;
  std::size_t compared = 0;
  auto check_model = [&](ToyDenoiser model, std::size_t stride, std::uint64_t seed) {
    const int h = 6;
    const int w = 7;
    const TrainingSample sample{random_stack(3, h, w, seed), random_stack(3, h, w, seed + 1)};
    const FieldStack noise = random_stack(3, h, w, seed + 2);
    for (int t : {37, 512, 960}) {
      std::vector<double> grad(model.params().size(), 0.0);
      denoising_loss(model, sample, t, noise, shared.schedule, grad);
      for (std::size_t i = seed % stride; i < grad.size(); i += stride) {
        ToyDenoiser plus = model;
        ToyDenoiser minus = model;
        plus.params()[i] += 1e-5;
        minus.params()[i] -= 1e-5;
        const double fd = (denoising_loss(plus, sample, t, noise, shared.schedule) -
                           denoising_loss(minus, sample, t, noise, shared.schedule)) / 2e-5;
        const double rel = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
        ++compared;
      }
    }
  };
  ToyArch small;
  small.width = 5;
  small.hidden_layers = 2;
  small.time_features = 4;
  for (Parameterization p : {Parameterization::epsilon, Parameterization::v, Parameterization::x0}) {
    ToyDenoiser m = ToyDenoiser::initialize(small, p, 17);
    Rng rng(18);
    for (double& v : m.params()) v += 0.05 * rng.normal();
    check_model(m, 1, 19);
  }
  check_model(trained.model, 97, 23);
  o.check(worst <= 1e-4, "gradient relative error " + fmt("%.3g", worst));
  o.note("eval loss " + fmt("%.4f", before) + " -> " + fmt("%.4f", after) + " (ratio " + fmt("%.4f", after / before) +
         "), " + std::to_string(compared) + " gradients, worst rel " + fmt("%.2g", worst));
  return o;
}

// --- 11 -----------------------------------------------------------------

Outcome lcm_distillation() {
  Outcome o;
  SharedTask& shared = task();
  if (!shared.teacher) {
    o.check(false, "no teacher (criterion 10 did not run)");
    return o;
  }
  const ToyDenoiser& teacher = *shared.teacher;
  const TrainingSample& sample = shared.samples.front();
  DistillConfig cfg;
  cfg.lcm.sigma_data = kSigmaData;
  cfg.iterations = 0;
  const DistillResult none = distill_lcm(teacher, cfg, shared.samples, shared.schedule);
  o.check(none.student.params() == teacher.params(), "zero-iteration student differs from teacher");

  cfg.iterations = kDistillIterations;
  cfg.learning_rate = kDistillLearningRate;
  cfg.seed = 3;
  const DistillResult result = distill_lcm(teacher, cfg, shared.samples, shared.schedule);
  o.check(cfg.lcm.skip_k == 200 && cfg.lcm.huber_c == 0.001 && cfg.lcm.ema_mu == 0.95, "distillation settings");

  const TimestepSpacing fifty = make_spacing(1000, 50, SpacingMode::trailing);
  const int one_step[] = {shared.schedule.timesteps() - 1};
  double teacher_mse = 0.0;
  double student_mse = 0.0;
  for (int k = 0; k < kSampleSeeds; ++k) {
    const std::uint64_t seed = 100 + static_cast<std::uint64_t>(k);
    teacher_mse += mse(ddim_sample(sample.cond, teacher, fifty, shared.schedule, seed), sample.target);
    student_mse += mse(consistency_sample(result.student, sample.cond, one_step, cfg.lcm, shared.schedule, seed),
                       sample.target);
  }
  teacher_mse /= kSampleSeeds;
  student_mse /= kSampleSeeds;
  bool finite = true;
  for (double l : result.loss_trace) finite = finite && std::isfinite(l) && l >= 0.0;
  o.check(finite, "non-finite or negative distillation loss");
  o.check(student_mse <= 2.0 * teacher_mse, "ratio " + fmt("%.3f", student_mse / teacher_mse));
  o.note("teacher 50-step MSE " + fmt("%.5f", teacher_mse) + ", student 1-step MSE " + fmt("%.5f", student_mse) +
         " (ratio " + fmt("%.3f", student_mse / teacher_mse) + ")");
  return o;
}

// --- 12 -----------------------------------------------------------------

Outcome io_round_trips() {
  Outcome o;
  Rng rng(1212);
  int pfm_ok = 0;
  int net_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    PfmImage img;
    img.kind = rng.uniform() < 0.5 ? PfmKind::grayscale : PfmKind::color;
    img.width = rng.uniform_int(1, 9);
    img.height = rng.uniform_int(1, 9);
    img.scale = rng.uniform() < 0.5 ? -1.0 : 1.0;
    img.data.resize(static_cast<std::size_t>(img.width * img.height * img.channels()));
    for (float& v : img.data) v = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform_int(-30, 30)));
    const std::string bytes = encode_pfm(img);
    const PfmImage back = decode_pfm(bytes);
    if (back.data == img.data && back.width == img.width && back.kind == img.kind && encode_pfm(back) == bytes) ++pfm_ok;

    ToyArch arch;
    arch.width = rng.uniform_int(1, 4);
    arch.hidden_layers = rng.uniform_int(1, 2);
    arch.cond_channels = rng.uniform_int(0, 3);
    arch.time_features = 2 * rng.uniform_int(1, 3);
    const Parameterization p = static_cast<Parameterization>(rng.uniform_int(0, 2));
    std::vector<double> params(ToyDenoiser::parameter_count(arch));
    for (double& v : params) v = static_cast<float>(rng.normal());
    const ToyDenoiser model(arch, p, params);
    const std::string nb = encode_denoiser(model);
    const ToyDenoiser decoded = decode_denoiser(nb);
    if (decoded.params() == model.params() && decoded.arch() == arch && decoded.parameterization() == p &&
        encode_denoiser(decoded) == nb) {
      ++net_ok;
    }
  }
  o.check(pfm_ok == 1000, std::to_string(1000 - pfm_ok) + " PFM payloads differ");
  o.check(net_ok == 1000, std::to_string(1000 - net_ok) + " denoiser payloads differ");
  o.note(std::to_string(pfm_ok) + " PFM and " + std::to_string(net_ok) + " denoiser round trips exact");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "schedule correctness", 1.0, schedule_correctness},
      {2, "sampler exactness", 1.0, sampler_exactness},
      {3, "gaussian posterior sampling", 30.0, gaussian_posterior},
      {4, "ensembling", 10.0, ensembling},
      {5, "metric protocol invariance", 1.0, metric_invariance},
      {6, "normals suite", 1.0, normals_suite},
      {7, "edge metrics", 1.0, edge_metrics},
      {8, "multidiffusion consistency", 10.0, multidiffusion},
      {9, "high-resolution pipeline", 30.0, hires_pipeline_check},
      {10, "training and gradients", 300.0, training_and_gradients},
      {11, "consistency distillation", 600.0, lcm_distillation},
      {12, "file round trips", 5.0, io_round_trips},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.check(false, std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.check(elapsed < c.limit_s, "runtime over " + fmt("%g", c.limit_s) + " s");
    if (!outcome.ok) ++failures;
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", outcome.ok ? "PASS" : "FAIL", c.id, c.name,
                outcome.detail.c_str(), elapsed);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
