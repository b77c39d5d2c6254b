#include "geodiff/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "geodiff/normalize.hpp"
#include "geodiff/random.hpp"

namespace geodiff {

namespace {

void check_members(std::span<const Field2D> members) {
  const Field2D& first = members.front();
  for (const Field2D& m : members) {
    require(m.same_shape(first), "ensemble: member dimension mismatch");
    require(m.mask() == first.mask(), "ensemble: member mask mismatch");
  }
}

std::pair<double, double> valid_min_max(const Field2D& f) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.valid(i)) continue;
    lo = std::min(lo, f[i]);
    hi = std::max(hi, f[i]);
  }
  if (!(lo <= hi)) throw InvalidArgument("ensemble: member has no valid pixels");
  return {lo, hi};
}

/// Evaluates the alignment objective on pre-extracted valid pixel columns.
class Objective {
 public:
  Objective(std::span<const Field2D> members, double lambda, PairReduction reduction)
      : lambda_(lambda), reduction_(reduction), n_(members.size()) {
    const Field2D& first = members.front();
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (first.valid(i)) pixels_.push_back(i);
    }
    values_.resize(n_ * pixels_.size());
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t p = 0; p < pixels_.size(); ++p) values_[k * pixels_.size() + p] = members[k][pixels_[p]];
    }
    aligned_.resize(values_.size());
    column_.resize(n_);
  }

  double operator()(std::span<const double> scales, std::span<const double> shifts) {
    const std::size_t np = pixels_.size();
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t p = 0; p < np; ++p) {
        aligned_[k * np + p] = values_[k * np + p] * scales[k] + shifts[k];
      }
    }
    double pair_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        double sq = 0.0;
        const double* a = &aligned_[i * np];
        const double* b = &aligned_[j * np];
        for (std::size_t p = 0; p < np; ++p) {
          const double d = a[p] - b[p];
          sq += d * d;
        }
        pair_sum += reduction_ == PairReduction::mean ? sq / static_cast<double>(np) : sq;
      }
    }
    const double pairs = static_cast<double>(n_ * (n_ - 1) / 2);

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t p = 0; p < np; ++p) {
      const double m = median_at(p);
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    const double regularizer = std::abs(lo) + std::abs(1.0 - hi);
    return std::sqrt(pair_sum / pairs) + lambda_ * regularizer;
  }

  /// Median of the most recently aligned members at valid pixel p.
  double median_at(std::size_t p) {
    const std::size_t np = pixels_.size();
    for (std::size_t k = 0; k < n_; ++k) column_[k] = aligned_[k * np + p];
    std::sort(column_.begin(), column_.end());
    return n_ % 2 == 1 ? column_[n_ / 2] : 0.5 * (column_[n_ / 2 - 1] + column_[n_ / 2]);
  }

 private:
  double lambda_;
  PairReduction reduction_;
  std::size_t n_;
  std::vector<std::size_t> pixels_;
  std::vector<double> values_;
  std::vector<double> aligned_;
  std::vector<double> column_;
};

Field2D align(const Field2D& member, double scale, double shift) {
  return apply_affine(member, scale, shift);
}

Field2D median_abs_deviation(std::span<const Field2D> aligned, const Field2D& merged) {
  Field2D out = merged;
  std::vector<double> column(aligned.size());
  for (std::size_t i = 0; i < merged.size(); ++i) {
    for (std::size_t k = 0; k < aligned.size(); ++k) column[k] = std::abs(aligned[k][i] - merged[i]);
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    out[i] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  return out;
}

}  // namespace

double ensemble_objective(std::span<const Field2D> members, std::span<const double> scales,
                          std::span<const double> shifts, double lambda, PairReduction reduction) {
  require(members.size() >= 2, "ensemble_objective: need at least two members");
  require(scales.size() == members.size() && shifts.size() == members.size(),
          "ensemble_objective: one scale and shift per member");
  check_members(members);
  Objective objective(members, lambda, reduction);
  return objective(scales, shifts);
}

EnsembleSolution optimize_ensemble(std::span<const Field2D> members, const EnsembleOptions& options,
                                   std::uint64_t seed) {
  require(!members.empty(), "optimize_ensemble: no members");
  require(options.max_iters >= 0, "optimize_ensemble: max_iters must be non-negative");
  check_members(members);
  const std::size_t n = members.size();

  // Min-max normalization of every member gives the starting point; the
  // optimizer then works on (a_k, b_k) with aligned_k = a_k * unit_k + b_k.
  std::vector<double> base_scale(n);
  std::vector<double> base_shift(n);
  std::vector<Field2D> unit;
  unit.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [lo, hi] = valid_min_max(members[k]);
    if (!(hi > lo)) throw NumericalError("degenerate member");
    base_scale[k] = 1.0 / (hi - lo);
    base_shift[k] = -lo / (hi - lo);
    unit.push_back(align(members[k], base_scale[k], base_shift[k]));
  }

  if (n == 1) {
    EnsembleSolution single{base_scale, base_shift, unit.front(), 0.0, 0, {0.0}, std::nullopt};
    Field2D zeros = unit.front();
    for (double& v : zeros.values()) v = 0.0;
    single.uncertainty = std::move(zeros);
    return single;
  }

  Objective objective(unit, options.lambda, options.reduction);
  const std::size_t dim = 2 * n;
  auto evaluate = [&](const std::vector<double>& x) {
    return objective(std::span<const double>(x.data(), n), std::span<const double>(x.data() + n, n));
  };

  // Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
  std::vector<std::vector<double>> simplex(dim + 1, std::vector<double>(dim, 0.0));
  std::fill(simplex[0].begin(), simplex[0].begin() + static_cast<std::ptrdiff_t>(n), 1.0);
  Rng rng(seed);
  for (std::size_t k = 0; k < dim; ++k) {
    simplex[k + 1] = simplex[0];
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    simplex[k + 1][k] += sign * options.initial_step;
  }
  std::vector<double> f(dim + 1);
  for (std::size_t v = 0; v <= dim; ++v) f[v] = evaluate(simplex[v]);

  std::vector<std::size_t> order(dim + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> f2;
    for (std::size_t idx : order) {
      s2.push_back(std::move(simplex[idx]));
      f2.push_back(f[idx]);
    }
    simplex = std::move(s2);
    f = std::move(f2);
  };
  sort_simplex();

  EnsembleSolution solution{{}, {}, unit.front(), 0.0, 0, {f.front()}, std::nullopt};
  std::vector<double> centroid(dim);
  auto blend = [&](double t, const std::vector<double>& towards) {
    std::vector<double> x(dim);
    for (std::size_t k = 0; k < dim; ++k) x[k] = centroid[k] + t * (towards[k] - centroid[k]);
    return x;
  };

  int iter = 0;
  while (iter < options.max_iters && f.back() - f.front() >= options.tol) {
    ++iter;
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v < dim; ++v) {
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[v][k];
    }
    for (double& c : centroid) c /= static_cast<double>(dim);

    const std::vector<double>& worst = simplex.back();
    std::vector<double> reflected = blend(-1.0, worst);
    const double fr = evaluate(reflected);
    if (fr < f.front()) {
      std::vector<double> expanded = blend(-2.0, worst);
      const double fe = evaluate(expanded);
      if (fe < fr) {
        simplex.back() = std::move(expanded);
        f.back() = fe;
      } else {
        simplex.back() = std::move(reflected);
        f.back() = fr;
      }
    } else if (fr < f[dim - 1]) {
      simplex.back() = std::move(reflected);
      f.back() = fr;
    } else {
      const bool outside = fr < f.back();
      std::vector<double> contracted = blend(outside ? -0.5 : 0.5, worst);
      const double fc = evaluate(contracted);
      if (fc < std::min(fr, f.back())) {
        simplex.back() = std::move(contracted);
        f.back() = fc;
      } else {
        for (std::size_t v = 1; v <= dim; ++v) {
          for (std::size_t k = 0; k < dim; ++k) {
            simplex[v][k] = simplex[0][k] + 0.5 * (simplex[v][k] - simplex[0][k]);
          }
          f[v] = evaluate(simplex[v]);
        }
      }
    }
    sort_simplex();
    solution.objective_trace.push_back(f.front());
  }

  const std::vector<double>& best = simplex.front();
  solution.scales.resize(n);
  solution.shifts.resize(n);
  std::vector<Field2D> aligned;
  aligned.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = best[k];
    const double b = best[n + k];
    solution.scales[k] = a * base_scale[k];
    solution.shifts[k] = a * base_shift[k] + b;
    aligned.push_back(align(unit[k], a, b));
  }
  solution.merged = pixelwise_median(aligned);
  solution.objective_value = f.front();
  solution.iterations_used = iter;
  solution.uncertainty = median_abs_deviation(aligned, solution.merged);
  return solution;
}

FieldStack ensemble_normals(std::span<const FieldStack> members) {
  require(!members.empty(), "ensemble_normals: no members");
  for (const FieldStack& m : members) {
    require(m.channels() == 3, "ensemble_normals: members must have 3 channels");
    require(m.same_shape(members.front()), "ensemble_normals: dimension mismatch");
  }
  if (members.size() == 1) return members.front();

  FieldStack mean(3, members.front().height(), members.front().width());
  for (const FieldStack& m : members) {
    for (int c = 0; c < 3; ++c) {
      auto dst = mean.plane(c).values();
      auto src = m.plane(c).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  const FieldStack direction = normalize_normals(mean).normals;

  FieldStack out = members.front();
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    std::size_t best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < members.size(); ++k) {
      double dot = 0.0;
      for (int c = 0; c < 3; ++c) dot += direction.plane(c)[i] * members[k].plane(c)[i];
      if (dot > best_dot) {
        best_dot = dot;
        best = k;
      }
    }
    for (int c = 0; c < 3; ++c) out.plane(c)[i] = members[best].plane(c)[i];
  }
  return out;
}

}  // namespace geodiff
