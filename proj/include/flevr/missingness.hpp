#pragma once

#include <cstdint>
#include <vector>

#include "flevr/spvim.hpp"

namespace flevr {

inline constexpr int default_imputations = 10;
inline constexpr int default_mice_iterations = 20;
inline constexpr int default_donors = 5;

struct AmputationSpec {
  std::vector<int> always_observed;     // feature columns never amputed
  std::vector<int> monotone_chain;      // ordered; a later entry missing forces all earlier ones missing
  std::vector<int> independent_missing; // amputed independently per row
  double max_prop = 0.0;                // largest per-column missing proportion, in [0,1)
  std::vector<int> weight_features;     // always-observed columns driving the missingness odds
};

// marks cells missing under a logistic missing-at-random mechanism whose
// intercepts are calibrated by bisection so the chain head and each independent
// column hit max_prop in expectation (later chain links get graded smaller
// targets); the outcome column is never amputed
Dataset ampute(const Dataset& data, const AmputationSpec& spec, std::uint64_t seed);

// rows where some chain entry is missing while an earlier one is observed
std::int64_t count_chain_violations(const Dataset& data, const std::vector<int>& chain);

// chained-equation imputation with predictive mean matching: columns are
// revisited in index order (outcome first) for max_iter sweeps, each modeled by
// a ridge regression (logistic for binary columns) on all other columns, and
// every missing cell receives the observed value of one of the `donors`
// nearest predicted means; returns M complete datasets with independent chains
std::vector<Dataset> mice_impute(const Dataset& data, int M, int max_iter, int donors,
                                 std::uint64_t seed);

struct PooledEstimate {
  std::vector<double> psi_bar;
  std::vector<double> within_var;
  std::vector<double> between_var;
  std::vector<double> total_var;  // within + (M+1)/M * between
  int M = 0;
};

// combines per-imputation estimates: mean attribution, mean variance, sample
// dispersion across imputations, and the inflated total; summation is ordered
// so permuting the inputs changes no bit and identical inputs give between 0
PooledEstimate pool_rubin(const std::vector<SpvimEstimate>& estimates);

}  // namespace flevr
