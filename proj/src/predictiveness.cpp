#include "flevr/predictiveness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flevr {

namespace {

void check_scores(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                  const char* who) {
  if (scores.size() != labels.size())
    throw std::invalid_argument(std::string(who) + ": score/label length mismatch");
  if (scores.size() == 0) throw std::invalid_argument(std::string(who) + ": empty input");
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (!std::isfinite(scores[i]))
      throw std::invalid_argument(std::string(who) + ": non-finite score");
}

void split_classes(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                   std::vector<double>& pos, std::vector<double>& neg, const char* who) {
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0) pos.push_back(scores[i]);
    else if (labels[i] == 0.0) neg.push_back(scores[i]);
    else throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
  }
  if (pos.empty() || neg.empty())
    throw std::invalid_argument(std::string(who) + ": need both outcome classes");
}

}  // namespace

double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  check_scores(scores, labels, "auc");
  std::vector<double> pos, neg;
  split_classes(scores, labels, pos, neg, "auc");
  const double n1 = static_cast<double>(pos.size());
  const double n0 = static_cast<double>(neg.size());
  // rank-sum form; average ranks make tied pairs count exactly one half
  std::vector<double> all(scores.data(), scores.data() + scores.size());
  const std::vector<double> ranks = average_ranks(all);
  double rank_sum = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels[i] == 1.0) rank_sum += ranks[static_cast<std::size_t>(i)];
  return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

Eigen::VectorXd auc_eif(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                        double auc_value) {
  check_scores(scores, labels, "auc_eif");
  std::vector<double> pos, neg;
  split_classes(scores, labels, pos, neg, "auc_eif");
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  const double n = static_cast<double>(scores.size());
  const double pi1 = static_cast<double>(pos.size()) / n;
  const double pi0 = static_cast<double>(neg.size()) / n;

  auto frac_below = [](const std::vector<double>& v, double t) {
    // P(value < t) + P(value == t)/2 within the sorted sample v
    const auto lo = std::lower_bound(v.begin(), v.end(), t);
    const auto hi = std::upper_bound(v.begin(), v.end(), t);
    const double below = static_cast<double>(lo - v.begin());
    const double tied = static_cast<double>(hi - lo);
    return (below + 0.5 * tied) / static_cast<double>(v.size());
  };

  Eigen::VectorXd eif(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1.0) {
      eif[i] = (frac_below(neg, scores[i]) - auc_value) / pi1;
    } else {
      const double above = 1.0 - frac_below(pos, scores[i]);
      eif[i] = (above - auc_value) / pi0;
    }
  }
  return eif;
}

double r_squared(const Eigen::VectorXd& predictions, const Eigen::VectorXd& outcomes) {
  check_scores(predictions, outcomes, "r_squared");
  const double n = static_cast<double>(outcomes.size());
  const double ybar = outcomes.mean();
  const double var = (outcomes.array() - ybar).square().sum() / n;
  if (var <= 0.0) throw std::invalid_argument("r_squared: constant outcome");
  const double mse = (outcomes - predictions).squaredNorm() / n;
  return 1.0 - mse / var;
}

Eigen::VectorXd r_squared_eif(const Eigen::VectorXd& predictions,
                              const Eigen::VectorXd& outcomes, double value) {
  check_scores(predictions, outcomes, "r_squared_eif");
  (void)value;
  const double n = static_cast<double>(outcomes.size());
  const double ybar = outcomes.mean();
  const double var = (outcomes.array() - ybar).square().sum() / n;
  if (var <= 0.0) throw std::invalid_argument("r_squared_eif: constant outcome");
  const double mse = (outcomes - predictions).squaredNorm() / n;
  Eigen::VectorXd eif(outcomes.size());
  for (Eigen::Index i = 0; i < outcomes.size(); ++i) {
    const double se = (outcomes[i] - predictions[i]) * (outcomes[i] - predictions[i]);
    const double dev = (outcomes[i] - ybar) * (outcomes[i] - ybar);
    eif[i] = -(se - mse) / var + mse * (dev - var) / (var * var);
  }
  return eif;
}

PredictivenessEstimate evaluate_measure(Measure measure, const Eigen::VectorXd& scores,
                                        const Eigen::VectorXd& outcomes) {
  PredictivenessEstimate est;
  if (measure == Measure::auc) {
    est.value = auc(scores, outcomes);
    est.eif = auc_eif(scores, outcomes, est.value);
  } else {
    est.value = r_squared(scores, outcomes);
    est.eif = r_squared_eif(scores, outcomes, est.value);
  }
  const double n = static_cast<double>(scores.size());
  const double m = est.eif.sum() / n;
  if (std::abs(m) > 1e-8)
    throw std::logic_error("evaluate_measure: influence function mean is not zero");
  est.variance = est.eif.squaredNorm() / n / n;
  return est;
}

ScreenCache make_screen_cache(const Dataset& data, const FoldAssignment& folds) {
  ScreenCache cache;
  cache.scores_by_fold.resize(static_cast<std::size_t>(folds.num_folds));
  for (int v = 1; v <= folds.num_folds; ++v)
    cache.scores_by_fold[static_cast<std::size_t>(v - 1)] =
        rank_correlation_scores(data, folds.rows_not_in_fold(v));
  return cache;
}

PredictivenessEstimate cv_predictiveness(const Dataset& data, const std::vector<int>& subset,
                                         Measure measure, const StackConfig& stack,
                                         const FoldAssignment& folds, std::uint64_t seed,
                                         const ScreenCache* cache) {
  data.validate();
  if (static_cast<Eigen::Index>(folds.folds.size()) != data.n())
    throw std::invalid_argument("cv_predictiveness: fold assignment length mismatch");
  if (folds.num_folds < 2) throw std::invalid_argument("cv_predictiveness: need >= 2 folds");
  if (measure == Measure::auc && !data.binary_outcome())
    throw std::invalid_argument("cv_predictiveness: auc needs a binary outcome");
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!data.outcome_observed(i))
      throw std::invalid_argument("cv_predictiveness: outcome has missing entries");
    for (int j : subset)
      if (!data.feature_observed(i, j))
        throw std::invalid_argument("cv_predictiveness: subset has missing entries");
  }

  Eigen::VectorXd scores(data.n());
  for (int v = 1; v <= folds.num_folds; ++v) {
    const std::vector<int> train = folds.rows_not_in_fold(v);
    const std::vector<int> held = folds.rows_in_fold(v);
    if (train.empty() || held.empty())
      throw std::invalid_argument("cv_predictiveness: empty fold");
    std::vector<int> screened;
    if (subset.size() <= 2) {
      screened = subset;
    } else if (cache != nullptr) {
      screened = screen_with_scores(subset, cache->scores_by_fold[static_cast<std::size_t>(v - 1)]);
    } else {
      screened = screen_by_rank_correlation(data, subset, train);
    }
    const EnsembleModel model = fit_stack(stack, data, screened, train, sub_seed(seed, static_cast<std::uint64_t>(v)));
    // fill only the columns the model can read; the rest stay zero so masked
    // placeholders elsewhere can never leak into predictions
    Eigen::MatrixXd held_x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(held.size()), data.p());
    for (int j : screened)
      for (std::size_t i = 0; i < held.size(); ++i)
        held_x(static_cast<Eigen::Index>(i), j) = data.features(held[i], j);
    const Eigen::VectorXd pred = model.predict(held_x);
    for (std::size_t i = 0; i < held.size(); ++i) scores[held[i]] = pred[static_cast<Eigen::Index>(i)];
  }
  return evaluate_measure(measure, scores, data.outcome);
}

}  // namespace flevr
