#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "flevr/common.hpp"

namespace flevr {

// Observation mask convention: obs is n x (p+1); column 0 flags the outcome,
// column j+1 flags feature j.  Cells with obs == 0 hold a placeholder value
// that no computation may read.
struct Dataset {
  Eigen::MatrixXd features;                                        // n x p
  Eigen::VectorXd outcome;                                         // n
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> obs; // n x (p+1)
  std::vector<std::string> feature_names;
  std::string outcome_name;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index p() const { return features.cols(); }

  bool outcome_observed(Eigen::Index i) const { return obs(i, 0) != 0; }
  bool feature_observed(Eigen::Index i, Eigen::Index j) const { return obs(i, j + 1) != 0; }
  bool complete() const;
  // outcome is binary when its observed values all lie in {0,1} and both occur
  bool binary_outcome() const;

  void validate() const;
};

Dataset make_dataset(Eigen::MatrixXd features, Eigen::VectorXd outcome);

Dataset load_csv(const std::string& path, const std::string& outcome_column,
                 const std::string& na_token = "NA");

void write_csv(const Dataset& data, const std::string& path,
               const std::string& na_token = "NA");

// fold labels are 1..K
struct FoldAssignment {
  std::vector<int> folds;
  int num_folds = 0;

  std::vector<int> rows_in_fold(int fold) const;
  std::vector<int> rows_not_in_fold(int fold) const;
};

// stratified for binary outcomes: class members are dealt round-robin so every
// fold sees both classes whenever each class has at least K members
FoldAssignment make_folds(const Dataset& data, int num_folds, std::uint64_t seed);

// same dealing over a bare outcome vector; used for inner cross-validation
std::vector<int> fold_labels(const std::vector<double>& outcome, int num_folds,
                             std::uint64_t seed);

}  // namespace flevr
