#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "flevr/data.hpp"

namespace flevr {

enum class LearnerKind { ridge_logistic, ridge_linear, knn, boosted_stumps };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::ridge_logistic;
  double lambda = 1.0;     // ridge penalty on standardized coefficients
  int neighbors = 10;      // knn
  int rounds = 50;         // boosting rounds
  double shrinkage = 0.1;  // boosting step size, in (0,1]
};

struct Stump {
  int feature = 0;  // position within the fitted subset
  double threshold = 0.0;
  double left = 0.0;
  double right = 0.0;
};

// state for a single fitted learner; which fields are live depends on kind
struct FittedModel {
  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
  const std::vector<int>& subset() const { return subset_; }
  const LearnerSpec& spec() const { return spec_; }
  // per-round training sum of squared residuals (boosted stumps only)
  const std::vector<double>& training_curve() const { return train_curve_; }

  LearnerSpec spec_;
  std::vector<int> subset_;  // 0-based feature columns used
  bool clamp_unit_ = false;  // binary outcome: predictions clipped to [0,1]
  // constant / fallback
  double constant_ = 0.0;
  bool is_constant_ = false;
  // ridge family
  Eigen::VectorXd coef_;  // on standardized scale
  double intercept_ = 0.0;
  Eigen::VectorXd center_, scale_;
  bool logistic_ = false;
  // knn
  Eigen::MatrixXd train_x_;  // standardized
  Eigen::VectorXd train_y_;
  // boosted stumps
  double base_ = 0.0;
  std::vector<Stump> stumps_;
  std::vector<double> train_curve_;
};

struct EnsembleModel {
  std::vector<FittedModel> members;
  Eigen::VectorXd weights;  // simplex weights aligned with members

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
};

struct StackConfig {
  std::vector<LearnerSpec> candidates;
  int inner_folds = 5;
};

// trains one learner on the given rows using the given feature columns;
// an empty subset yields the constant outcome-mean model
FittedModel fit(const LearnerSpec& spec, const Dataset& data,
                const std::vector<int>& subset, const std::vector<int>& rows);

// fits every candidate, then picks convex combination weights minimizing
// cross-validated loss (log loss for binary outcomes, squared error otherwise)
EnsembleModel fit_stack(const StackConfig& config, const Dataset& data,
                        const std::vector<int>& subset, const std::vector<int>& rows,
                        std::uint64_t seed);

// keeps subsets of size <= 2 unchanged; otherwise retains the 2 features with
// largest |rank correlation| with the outcome (10 when the subset has >= 100),
// ties going to the lower index
std::vector<int> screen_by_rank_correlation(const Dataset& data,
                                            const std::vector<int>& subset,
                                            const std::vector<int>& rows);

// same rule applied to precomputed |rank correlation| scores per feature column
std::vector<int> screen_with_scores(const std::vector<int>& subset,
                                    const std::vector<double>& abs_correlation);

// |Spearman| of every feature column with the outcome over the given rows
std::vector<double> rank_correlation_scores(const Dataset& data, const std::vector<int>& rows);

}  // namespace flevr
