#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "flevr/missingness.hpp"

namespace flevr {

struct TestResults {
  std::vector<double> t_stats;
  std::vector<double> p_values;    // one-sided, H0: attribution 0 vs > 0
  std::vector<double> p_adjusted;  // filled by the holm step
  std::vector<char> degenerate;    // marks zero-variance entries
};

// T_j = psi_bar_j / sqrt(total_var_j), p_j = 1 - Phi(T_j); zero variance gives
// p = 0 for nonzero psi and p = 1 otherwise, with the degenerate flag set
TestResults test_statistics(const PooledEstimate& pooled);

// step-down adjustment: sorted p-values scaled by (p - rank + 1), capped at 1,
// with a running maximum enforcing monotonicity
std::vector<double> holm_adjust(const std::vector<double>& p_values);

// indices with adjusted p strictly below alpha
std::vector<int> initial_set(const std::vector<double>& adjusted, double alpha);

enum class ControlMode { gfwer, pfp, fdr };

struct ErrorControl {
  ControlMode mode = ControlMode::gfwer;
  int k = 0;       // gfwer: number of indices added to the initial set
  double q = 0.5;  // pfp: bound on the false selection proportion
  double f = 0.2;  // fdr: bound on the expected false proportion, must exceed alpha
};

struct SelectionResult {
  std::vector<int> initial_set;
  std::vector<int> augmentation_set;
  std::vector<int> final_set;  // initial plus augmentation
  double alpha = 0.0;
  ControlMode mode = ControlMode::gfwer;
  int k_used = 0;
  double q_used = std::numeric_limits<double>::quiet_NaN();  // pfp and fdr modes only
  TestResults tests;      // populated by select
  PooledEstimate pooled;  // populated by select
};

// adds the k smallest-adjusted unselected indices (ties to the lower index);
// pfp derives k as the largest j with j/(j + |initial|) <= q, fdr first maps
// its level f to q = (f - alpha)/(1 - alpha); an empty initial set under pfp
// or fdr keeps the augmentation empty
SelectionResult augment(const std::vector<double>& adjusted, const std::vector<int>& initial,
                        const ErrorControl& control, double alpha);

// k = ceil((1 - target_specificity) * (p - s0)),
// q = k / ((p - s0)/p * sqrt(n/200) + k); q is returned unrounded
std::pair<int, double> choose_k_q(std::int64_t n, int p, int s0, double target_specificity);

struct SelectionConfig {
  Measure measure = Measure::auc;
  StackConfig stack;
  int folds = 5;
  std::int64_t budget = 0;  // 0 picks the default for p
  int imputations = default_imputations;
  int mice_iterations = default_mice_iterations;
  int donors = default_donors;
  double alpha = 0.05;
  ErrorControl control;
};

// estimates attributions on each completed dataset and pools them; a single
// dataset yields M = 1 with no between-dataset variance component
PooledEstimate pooled_spvim(const std::vector<Dataset>& completed, const SpvimConfig& config,
                            std::uint64_t seed);

// full pipeline: impute when cells are missing (single-dataset variance
// otherwise), estimate attributions per dataset, pool, test, adjust, select
SelectionResult select(const Dataset& data, const SelectionConfig& config, std::uint64_t seed);

}  // namespace flevr
