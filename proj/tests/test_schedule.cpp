#include <gtest/gtest.h>

#include <cmath>

#include "geodiff/schedule.hpp"
#include "geodiff/tiling.hpp"
#include "geodiff/toy/oracles.hpp"
#include "test_util.hpp"

using namespace geodiff;
using geodiff::testing::max_abs_diff;
using geodiff::testing::random_stack;

namespace {

FieldStack constant_stack(double v) { return FieldStack(1, 1, 1, v); }

}  // namespace

TEST(Schedule, SmallProducts) {
  const DiffusionSchedule one = make_schedule(1, 0.5, 0.5, BetaKind::linear);
  ASSERT_EQ(one.timesteps(), 1);
  EXPECT_DOUBLE_EQ(one.alphas_cumprod()[0], 0.5);
  const DiffusionSchedule two(std::vector<double>{0.1, 0.2});
  EXPECT_DOUBLE_EQ(two.alphas_cumprod()[0], 0.9);
  EXPECT_NEAR(two.alphas_cumprod()[1], 0.72, 1e-15);
}

TEST(Schedule, ScaledLinearMatchesCumprodOracle) {
  const DiffusionSchedule s = default_schedule();
  ASSERT_EQ(s.timesteps(), 1000);
  long double prod = 1.0L;
  const long double a = std::sqrt(0.00085L);
  const long double b = std::sqrt(0.012L);
  for (int t = 0; t < 1000; ++t) {
    const long double root = a + (b - a) * t / 999.0L;
    prod *= 1.0L - root * root;
    EXPECT_NEAR(s.alphas_cumprod()[static_cast<std::size_t>(t)], static_cast<double>(prod), 1e-12);
    if (t > 0) {
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
  }
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0 - s.betas()[0]);
}

TEST(Schedule, LinearBetasAndValidation) {
  const DiffusionSchedule s = make_schedule(5, 0.1, 0.5, BetaKind::linear);
  EXPECT_NEAR(s.betas()[2], 0.3, 1e-15);
  EXPECT_THROW(make_schedule(10, 0.2, 0.1, BetaKind::linear), InvalidArgument);
  EXPECT_THROW(make_schedule(10, 0.0, 0.1, BetaKind::linear), InvalidArgument);
  EXPECT_THROW(make_schedule(0, 0.1, 0.1, BetaKind::linear), InvalidArgument);
  EXPECT_THROW(s.alpha_bar(5), InvalidArgument);
}

TEST(ZeroSnr, TerminalZeroAnchorKeptMonotone) {
  const DiffusionSchedule base = default_schedule();
  const DiffusionSchedule z = rescale_zero_snr(base);
  EXPECT_EQ(z.alphas_cumprod().back(), 0.0);
  EXPECT_EQ(z.alpha_bar(0), base.alpha_bar(0));
  for (int t = 1; t < z.timesteps(); ++t) EXPECT_LT(z.alpha_bar(t), z.alpha_bar(t - 1));
  EXPECT_EQ(z.betas().back(), 1.0);
}

TEST(ZeroSnr, Idempotent) {
  const DiffusionSchedule z = rescale_zero_snr(default_schedule());
  const DiffusionSchedule zz = rescale_zero_snr(z);
  EXPECT_EQ(z.alphas_cumprod(), zz.alphas_cumprod());
  EXPECT_EQ(z.betas(), zz.betas());
}

TEST(ZeroSnr, SingleStepRejected) {
  EXPECT_THROW(rescale_zero_snr(make_schedule(1, 0.5, 0.5, BetaKind::linear)), InvalidArgument);
}

TEST(ForwardDiffuse, Substitution) {
  EXPECT_DOUBLE_EQ(forward_diffuse(constant_stack(1), constant_stack(0), 0.25).plane(0)[0], 0.5);
  EXPECT_NEAR(forward_diffuse(constant_stack(0), constant_stack(2), 0.25).plane(0)[0], 1.7320508075688772, 1e-15);
  EXPECT_DOUBLE_EQ(forward_diffuse(constant_stack(3), constant_stack(9), 1.0).plane(0)[0], 3.0);
  EXPECT_THROW(forward_diffuse(FieldStack(1, 2, 2), FieldStack(1, 2, 3), 0.5), InvalidArgument);
}

TEST(ForwardDiffuse, SampleVarianceMatches) {
  const DiffusionSchedule s = default_schedule();
  const int t = 400;
  const double abar = s.alpha_bar(t);
  // x0 uniform on [-1, 1] has variance 1/3.
  Rng rng(77);
  FieldStack x0(1, 400, 250);
  for (double& v : x0.plane(0).values()) v = 2.0 * rng.uniform() - 1.0;
  const FieldStack eps = gaussian_noise(1, 400, 250, rng);
  const FieldStack xt = forward_diffuse(x0, eps, t, s);
  double m = 0.0;
  double m2 = 0.0;
  for (double v : xt.plane(0).values()) {
    m += v;
    m2 += v * v;
  }
  const double n = 1e5;
  const double var = m2 / n - (m / n) * (m / n);
  const double expected = (1.0 - abar) + abar / 3.0;
  EXPECT_NEAR(var, expected, 0.05 * expected);
}

TEST(Parameterization, ConversionsAtCleanEndpoint) {
  const FieldStack xt = random_stack(2, 3, 3, 4);
  const FieldStack eps = random_stack(2, 3, 3, 5);
  EXPECT_EQ(max_abs_diff(convert_parameterization(eps, xt, 1.0, Parameterization::epsilon, Parameterization::x0), xt),
            0.0);
  EXPECT_THROW(convert_parameterization(eps, xt, 0.5, Parameterization::v, Parameterization::v), InvalidArgument);
}

TEST(Parameterization, RoundTripsAreIdentity) {
  const FieldStack xt = random_stack(3, 4, 4, 1);
  const FieldStack out = random_stack(3, 4, 4, 2);
  const Parameterization all[] = {Parameterization::epsilon, Parameterization::v, Parameterization::x0};
  for (double abar : {0.9, 0.5, 0.05}) {
    for (Parameterization a : all) {
      for (Parameterization b : all) {
        if (a == b) continue;
        const FieldStack there = convert_parameterization(out, xt, abar, a, b);
        const FieldStack back = convert_parameterization(there, xt, abar, b, a);
        EXPECT_LT(max_abs_diff(back, out), 1e-12 * 10);
      }
    }
  }
}

TEST(Parameterization, VToEpsilonMatchesLinearSolve) {
  // Unknowns (x0, eps) from x_t = s x0 + n eps and v = s eps - n x0, solved by Cramer's rule.
  const double abar = 0.37;
  const double s = std::sqrt(abar);
  const double n = std::sqrt(1.0 - abar);
  const FieldStack xt = random_stack(1, 5, 5, 8);
  const FieldStack v = random_stack(1, 5, 5, 9);
  const FieldStack eps = convert_parameterization(v, xt, abar, Parameterization::v, Parameterization::epsilon);
  for (std::size_t i = 0; i < xt.pixels(); ++i) {
    const double det = s * s + n * n;
    const double e = (s * v.plane(0)[i] + n * xt.plane(0)[i]) / det;
    EXPECT_NEAR(eps.plane(0)[i], e, 1e-12);
  }
}

TEST(Parameterization, DegenerateEndpointsThrow) {
  const FieldStack x = random_stack(1, 2, 2, 3);
  EXPECT_THROW(decompose(x, x, 0.0, Parameterization::epsilon), NumericalError);
  EXPECT_THROW(decompose(x, x, 1.0, Parameterization::x0), NumericalError);
  EXPECT_EQ(parse_parameterization("v"), Parameterization::v);
  EXPECT_THROW(parse_parameterization("score"), InvalidArgument);
}

TEST(Spacing, Examples) {
  EXPECT_EQ(make_spacing(1000, 1, SpacingMode::trailing).steps, std::vector<int>{999});
  EXPECT_EQ(make_spacing(1000, 1, SpacingMode::leading).steps, std::vector<int>{0});
  EXPECT_EQ(make_spacing(1000, 4, SpacingMode::trailing).steps, (std::vector<int>{999, 749, 499, 249}));
  EXPECT_EQ(make_spacing(1000, 4, SpacingMode::leading).steps, (std::vector<int>{750, 500, 250, 0}));
  EXPECT_THROW(make_spacing(10, 11, SpacingMode::trailing), InvalidArgument);
}

TEST(Spacing, StrictlyDecreasingInRange) {
  for (int n : {1, 2, 3, 7, 50, 333, 999, 1000}) {
    for (SpacingMode m : {SpacingMode::trailing, SpacingMode::leading}) {
      const auto steps = make_spacing(1000, n, m).steps;
      EXPECT_EQ(static_cast<int>(steps.size()), n);
      for (std::size_t i = 0; i < steps.size(); ++i) {
        EXPECT_GE(steps[i], 0);
        EXPECT_LE(steps[i], 999);
        if (i > 0) {
          EXPECT_LT(steps[i], steps[i - 1]);
        }
      }
    }
  }
}

TEST(Ddim, FinalStepReturnsCleanEstimate) {
  const DiffusionSchedule s = default_schedule();
  const FieldStack xt = random_stack(1, 4, 4, 1);
  const FieldStack out = random_stack(1, 4, 4, 2);
  const FieldStack x0 = decompose(out, xt, s.alpha_bar(500), Parameterization::v).x0;
  EXPECT_EQ(max_abs_diff(ddim_step(xt, out, Parameterization::v, 500, -1, s), x0), 0.0);
  EXPECT_THROW(ddim_step(xt, out, Parameterization::v, 500, 500, s), InvalidArgument);
}

TEST(Ddim, PointMassFullTrailingScheduleRecoversTarget) {
  const DiffusionSchedule s = default_schedule();
  const FieldStack x_star = random_stack(1, 8, 8, 11);
  const FieldStack cond(1, 8, 8);
  const toy::PointMassDenoiser oracle(x_star, s);
  for (int n : {1, 50, 1000}) {
    const FieldStack out = ddim_sample(cond, oracle, make_spacing(1000, n, SpacingMode::trailing), s, 5);
    EXPECT_LE(max_abs_diff(out, x_star), 1e-6) << n << " steps";
  }
}

TEST(Lcm, BoundaryAndMonotone) {
  const DiffusionSchedule s = default_schedule();
  const LcmConfig cfg;
  const BoundaryCoeffs b = lcm_boundary_coeffs(0, cfg, s);
  EXPECT_EQ(b.c_skip, 1.0);
  EXPECT_EQ(b.c_out, 0.0);
  double prev_skip = 2.0;
  double prev_out = -1.0;
  for (int t = 0; t < 1000; t += 37) {
    const BoundaryCoeffs k = lcm_boundary_coeffs(t, cfg, s);
    EXPECT_LT(k.c_skip, prev_skip);
    EXPECT_GT(k.c_out, prev_out);
    prev_skip = k.c_skip;
    prev_out = k.c_out;
  }
}

TEST(Lcm, CoefficientsMatchFormula) {
  const DiffusionSchedule s = default_schedule();
  LcmConfig cfg;
  cfg.sigma_data = 0.3;
  cfg.epsilon_boundary = 0.01;
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const int t = rng.uniform_int(0, 999);
    const double u = t / 999.0 - 0.01;
    const BoundaryCoeffs k = lcm_boundary_coeffs(t, cfg, s);
    EXPECT_NEAR(k.c_skip, 0.09 / (u * u + 0.09), 1e-15);
    EXPECT_NEAR(k.c_out, u / std::sqrt(u * u + 0.09), 1e-15);
    // sigma^2 / D + u^2 / D = 1
    EXPECT_NEAR(k.c_skip + k.c_out * k.c_out, 1.0, 1e-12);
  }
}

TEST(Lcm, ConsistencyApply) {
  const DiffusionSchedule s = default_schedule();
  const LcmConfig cfg;
  const FieldStack x = random_stack(2, 3, 3, 1);
  const FieldStack x0 = random_stack(2, 3, 3, 2);
  EXPECT_EQ(max_abs_diff(consistency_apply(x, x0, 0, cfg, s), x), 0.0);
  const int t = 612;
  const BoundaryCoeffs k = lcm_boundary_coeffs(t, cfg, s);
  const FieldStack f = consistency_apply(x, x0, t, cfg, s);
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 9; ++i) {
      EXPECT_NEAR(f.plane(c)[i], k.c_skip * x.plane(c)[i] + k.c_out * x0.plane(c)[i], 1e-12);
    }
  }
  // c_skip = c_out = 0.5 on x_t = 2, x0 = 0 gives 1 (linear_combination is the same kernel).
  EXPECT_DOUBLE_EQ(linear_combination(0.5, constant_stack(2), 0.5, constant_stack(0)).plane(0)[0], 1.0);
}

TEST(PseudoHuber, Values) {
  const FieldStack x = random_stack(2, 3, 3, 1);
  EXPECT_EQ(pseudo_huber(x, x, 0.001), 0.0);
  EXPECT_NEAR(pseudo_huber(constant_stack(1), constant_stack(0), 0.001), 0.9990005, 1e-9);
  // Global norm: sqrt(3^2 + 4^2) = 5.
  FieldStack a(1, 1, 2);
  a.plane(0)[0] = 3;
  a.plane(0)[1] = 4;
  EXPECT_NEAR(pseudo_huber(a, FieldStack(1, 1, 2), 1e-9), 5.0, 1e-8);
  EXPECT_THROW(pseudo_huber(x, x, 0.0), InvalidArgument);
}

TEST(Ema, Update) {
  const std::vector<double> t{1, 2};
  const std::vector<double> s{3, 6};
  const auto out = ema_update(t, s, 0.95);
  EXPECT_NEAR(out[0], 1.1, 1e-15);
  EXPECT_NEAR(out[1], 2.2, 1e-15);
  EXPECT_EQ(ema_update(t, s, 0.0), s);
  EXPECT_THROW(ema_update(t, s, 1.0), InvalidArgument);
}

TEST(LcmConfig, Validation) {
  const DiffusionSchedule s = default_schedule();
  LcmConfig cfg;
  EXPECT_NO_THROW(validate(cfg, s));
  cfg.skip_k = 1000;
  EXPECT_THROW(validate(cfg, s), InvalidArgument);
}
