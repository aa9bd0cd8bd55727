#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flevr/missingness.hpp"
#include "flevr/selection.hpp"

namespace flevr {

enum class OutcomeForm { linear, shaped_sum };
enum class FeatureDist { iid_normal, correlated_normal, mixed_marginals };

// one of the eight built-in benchmark data-generating mechanisms; the outcome
// is Bernoulli with probit success probability Phi(intercept + f(beta, x))
struct ScenarioSpec {
  int id = 1;
  int p = 30;
  OutcomeForm outcome_form = OutcomeForm::linear;
  FeatureDist feature_dist = FeatureDist::iid_normal;
  double intercept = 0.5;
  std::vector<double> beta;  // per feature for linear, per shaped term otherwise
  double rho1 = 0.0;         // decaying correlation between inactive pairs
  double rho2 = 0.0;         // common correlation between active pairs
  std::vector<int> active;   // 0-based truly important features
  double missing_prop = 0.0; // 0 keeps the data complete
};

// ids 1-8; ids 2 and 6-8 require p = 6, the others p >= 6
ScenarioSpec scenario_spec(int id, int p, double missing_prop);

// shared missingness layout: outcome and features 1, 3, 5 (1-based) always
// observed, features 2, 4, 6 on a monotone chain, plus the lowest-index noise
// features missing independently (3 of them at p = 30, 40 at p = 500)
AmputationSpec scenario_amputation(const ScenarioSpec& spec);

struct GeneratedData {
  Dataset data;
  std::vector<int> truth;  // 0-based active features
};

GeneratedData gen_scenario(const ScenarioSpec& spec, int n, std::uint64_t seed);

// Monte Carlo AUC of the true success probability against fresh outcomes
double optimal_auc(const ScenarioSpec& spec, int mc_n, std::uint64_t seed);

struct ReplicateMetrics {
  double test_auc = 0.5;
  double sensitivity = 0.0;  // selected fraction of the active set
  double specificity = 1.0;  // unselected fraction of the inactive set
};

// refits the stack on the selected columns of every training set, scores one
// fresh complete test draw, and averages the test AUC across the fits
ReplicateMetrics evaluate(const SelectionResult& selection, const std::vector<int>& truth,
                          const ScenarioSpec& spec, int test_n, const StackConfig& stack,
                          const std::vector<Dataset>& training_sets, std::uint64_t seed);

// augmentation with the slot count capped at the number of unselected features,
// so a fixed k survives replicates where the initial set is already large
SelectionResult augment_clamped(const std::vector<double>& adjusted,
                                const std::vector<int>& initial, ErrorControl control,
                                double alpha);

const char* control_mode_name(ControlMode mode);
ControlMode parse_control_mode(const std::string& name);

// learners used inside the attribution estimates when a config lists none:
// ridge logistic for the linear scenarios, boosted stumps plus ridge otherwise
StackConfig default_internal_stack(int scenario_id);

struct ExperimentConfig {
  std::vector<int> scenarios{1};
  int p = 30;  // applies to scenarios without a fixed dimension
  std::vector<int> sample_sizes{200};
  std::vector<double> missing_props{0.0};
  std::vector<ControlMode> modes{ControlMode::gfwer};
  int replicates = 10;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  int test_n = 10000;
  int folds = 5;
  std::int64_t budget = 0;
  int imputations = default_imputations;
  int mice_iterations = default_mice_iterations;
  int donors = default_donors;
  double alpha = 0.05;
  int k = -1;       // negative derives k from the tuning rule
  double q = -1.0;  // nonpositive derives q from the tuning rule
  double f = 0.2;
  StackConfig stack;  // empty candidate list falls back per scenario
};

ExperimentConfig load_experiment_config(const std::string& path);

// specificity target behind the derived k and q: 0.75 up to p = 6, 0.85 up to
// p = 30, 0.95 beyond
double target_specificity(int p);

struct ReplicateRow {
  int scenario = 0;
  int p = 0;
  int n = 0;
  double missing_prop = 0.0;
  ControlMode mode = ControlMode::gfwer;
  int replicate = 0;
  std::vector<int> selected;  // 0-based final set
  int initial_size = 0;
  int k_used = 0;
  double test_auc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct AggregateRow {
  int scenario = 0;
  int p = 0;
  int n = 0;
  double missing_prop = 0.0;
  ControlMode mode = ControlMode::gfwer;
  int replicates = 0;
  double mean_test_auc = 0.0;
  double se_test_auc = 0.0;
  double mean_sensitivity = 0.0;
  double se_sensitivity = 0.0;
  double mean_specificity = 0.0;
  double se_specificity = 0.0;
  // selection frequency per feature over the replicates
  std::vector<double> selection_probs;
};

struct ExperimentResult {
  std::vector<ReplicateRow> replicate_rows;
  std::vector<AggregateRow> aggregates;
};

// loops scenarios x sample sizes x missing proportions x modes, writing
// replicates.csv, aggregate.csv and selection_probs.csv under the output
// directory; rows are flushed as replicates finish and every replicate draws
// its seeds from (master seed, configuration, replicate index) only
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace flevr
