#pragma once

#include <cstdint>
#include <vector>

#include "flevr/predictiveness.hpp"

namespace flevr {

struct SubsetSample {
  int p = 0;
  // distinct subsets; position 0 is the empty set, position 1 the full set
  std::vector<std::vector<int>> subsets;
  std::vector<std::int64_t> multiplicities;
  std::vector<double> kernel_weights;  // indexed by subset size, 0 at sizes 0 and p
  bool exhaustive = false;
  std::int64_t budget = 0;
};

// exhaustive below 2^12 subsets, otherwise 48 draws per feature
std::int64_t default_budget(int p);

// anchors the empty and full sets, then draws budget-2 subsets with size
// probability proportional to the Shapley kernel and uniform content per size;
// force_sampled skips the exhaustive shortcut so the sampler itself can be
// exercised at small p
SubsetSample sample_subsets(int p, std::int64_t budget, std::uint64_t seed,
                            bool force_sampled = false);

// kernel-weighted least squares for the per-feature attributions, constrained
// to pass through the empty-set and full-set values; exact Shapley values in
// exhaustive mode
std::vector<double> shapley_solve(const SubsetSample& sample,
                                  const std::vector<double>& values);

// direct evaluation of the attribution sum over all subsets; values indexed by
// bitmask over features 0..p-1
std::vector<double> shapley_exact(int p, const std::vector<double>& values_by_mask);

struct SpvimConfig {
  Measure measure = Measure::auc;
  StackConfig stack;
  int folds = 5;
  std::int64_t budget = 0;  // 0 = default_budget(p)
};

struct SpvimEstimate {
  std::vector<double> psi;
  std::vector<double> variances;      // influence plus subset-sampling components
  std::vector<double> eif_variances;  // influence component alone
  double v_null = 0.0;
  double v_full = 0.0;
  SubsetSample sample;
  std::vector<PredictivenessEstimate> subset_values;  // aligned with sample.subsets
};

// cross-fitted predictiveness for every distinct sampled subset, then the
// constrained solve; variance combines the influence-function component with a
// subset-sampling dispersion term (zero in exhaustive mode)
SpvimEstimate estimate_spvim(const Dataset& data, const SpvimConfig& config,
                             std::uint64_t seed);

}  // namespace flevr
