#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geodiff/grid.hpp"

namespace geodiff {

/// How the squared pairwise distance between two aligned members is reduced
/// over pixels before the square root of the objective.
enum class PairReduction {
  mean,  // average over valid pixels; keeps the alignment term resolution-independent
  sum,   // plain squared L2 norm
};

struct EnsembleOptions {
  double lambda = 0.02;
  int max_iters = 50;
  double tol = 1e-3;
  PairReduction reduction = PairReduction::mean;
  /// Edge length of the initial Nelder-Mead simplex in the normalized
  /// (scale, shift) coordinates.
  double initial_step = 0.05;
};

struct EnsembleSolution {
  std::vector<double> scales;
  std::vector<double> shifts;
  Field2D merged;
  double objective_value = 0.0;
  int iterations_used = 0;
  /// Best objective after initialization and after each iteration.
  std::vector<double> objective_trace;
  /// Per-pixel median absolute deviation of the aligned members from `merged`.
  std::optional<Field2D> uncertainty;
};

/// Pairwise alignment error of the scaled and shifted members plus lambda
/// times the unit-range regularizer |min m| + |1 - max m| of their median m.
double ensemble_objective(std::span<const Field2D> members, std::span<const double> scales,
                          std::span<const double> shifts, double lambda,
                          PairReduction reduction = PairReduction::mean);

/// Jointly aligns the members by per-member scale and shift and merges them
/// with a pixel-wise median. A single member is min-max rescaled to [0, 1].
EnsembleSolution optimize_ensemble(std::span<const Field2D> members,
                                   const EnsembleOptions& options = {}, std::uint64_t seed = 0);

/// Picks, per pixel, the member normal closest in angle to the normalized
/// mean normal. Ties go to the lowest member index.
FieldStack ensemble_normals(std::span<const FieldStack> members);

}  // namespace geodiff
