#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "flevr/learners.hpp"

namespace flevr {

enum class Measure { auc, r_squared };

struct PredictivenessEstimate {
  double value = 0.0;
  Eigen::VectorXd eif;      // one influence value per row, mean zero
  double variance = 0.0;    // mean(eif^2) / n
};

// Mann-Whitney AUC; tied score pairs count one half
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

Eigen::VectorXd auc_eif(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                        double auc_value);

// 1 - mse / var(outcome), population variance
double r_squared(const Eigen::VectorXd& predictions, const Eigen::VectorXd& outcomes);

Eigen::VectorXd r_squared_eif(const Eigen::VectorXd& predictions,
                              const Eigen::VectorXd& outcomes, double value);

// value + influence function + variance for pooled scores against outcomes
PredictivenessEstimate evaluate_measure(Measure measure, const Eigen::VectorXd& scores,
                                        const Eigen::VectorXd& outcomes);

// per-fold screening scores computed on each fold's training complement
struct ScreenCache {
  std::vector<std::vector<double>> scores_by_fold;  // [fold-1][feature]
};

ScreenCache make_screen_cache(const Dataset& data, const FoldAssignment& folds);

// K-fold cross-fitting: fit the (screened) stack on each fold's complement,
// score the held-out fold, then evaluate the measure once on the pooled scores
PredictivenessEstimate cv_predictiveness(const Dataset& data, const std::vector<int>& subset,
                                         Measure measure, const StackConfig& stack,
                                         const FoldAssignment& folds, std::uint64_t seed,
                                         const ScreenCache* cache = nullptr);

}  // namespace flevr
