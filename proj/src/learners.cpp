#include "flevr/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace flevr {

namespace {

void check_subset(const std::vector<int>& subset, Eigen::Index p, const char* who) {
  int prev = -1;
  for (int j : subset) {
    if (j < 0 || j >= p) throw std::invalid_argument(std::string(who) + ": feature index out of range");
    if (j <= prev) throw std::invalid_argument(std::string(who) + ": subset must be strictly increasing");
    prev = j;
  }
}

void check_rows(const Dataset& data, const std::vector<int>& subset,
                const std::vector<int>& rows, const char* who) {
  if (rows.empty()) throw std::invalid_argument(std::string(who) + ": no training rows");
  for (int i : rows) {
    if (i < 0 || i >= data.n()) throw std::invalid_argument(std::string(who) + ": row index out of range");
    if (!data.outcome_observed(i))
      throw std::invalid_argument(std::string(who) + ": outcome missing in training rows");
    for (int j : subset)
      if (!data.feature_observed(i, j))
        throw std::invalid_argument(std::string(who) + ": feature value missing in training rows");
  }
}

Eigen::MatrixXd gather(const Dataset& data, const std::vector<int>& subset,
                       const std::vector<int>& rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(subset.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < subset.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          data.features(rows[i], subset[j]);
  return x;
}

Eigen::VectorXd gather_outcome(const Dataset& data, const std::vector<int>& rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.outcome[rows[i]];
  return y;
}

void standardize(const Eigen::MatrixXd& x, Eigen::VectorXd& center, Eigen::VectorXd& scale) {
  const Eigen::Index n = x.rows(), d = x.cols();
  center = x.colwise().mean();
  scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (x.col(j).array() - center[j]).square().sum() / static_cast<double>(n);
    scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

bool binary_on_rows(const Dataset& data, const std::vector<int>& rows) {
  bool saw0 = false, saw1 = false;
  for (int i : rows) {
    const double y = data.outcome[i];
    if (y == 0.0) saw0 = true;
    else if (y == 1.0) saw1 = true;
    else return false;
  }
  return saw0 && saw1;
}

void fit_ridge(FittedModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               double lambda, bool logistic) {
  const Eigen::Index n = x.rows(), d = x.cols();
  standardize(x, m.center_, m.scale_);
  Eigen::MatrixXd z(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    z.col(j) = (x.col(j).array() - m.center_[j]) / m.scale_[j];
  m.logistic_ = logistic;

  if (!logistic) {
    const double ybar = y.mean();
    Eigen::VectorXd yc = y.array() - ybar;
    Eigen::MatrixXd a = z.transpose() * z;
    a.diagonal().array() += lambda;
    m.coef_ = a.ldlt().solve(z.transpose() * yc);
    m.intercept_ = ybar;
    return;
  }

  // penalized iteratively reweighted least squares; intercept unpenalized
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);  // [intercept, coefs]
  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = z;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd prob = eta.unaryExpr([](double t) { return expit(t); });
    Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).cwiseMax(1e-10);
    Eigen::VectorXd zwork = eta.array() + (y - prob).array() / w.array();
    Eigen::MatrixXd wx = w.asDiagonal() * design;
    Eigen::MatrixXd a = design.transpose() * wx;
    for (Eigen::Index j = 1; j <= d; ++j) a(j, j) += lambda;
    Eigen::VectorXd next = a.ldlt().solve(design.transpose() * (w.asDiagonal() * zwork));
    const double delta = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (delta < 1e-10) break;
  }
  m.intercept_ = beta[0];
  m.coef_ = beta.tail(d);
}

void fit_stumps(FittedModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                int rounds, double shrinkage) {
  const Eigen::Index n = x.rows(), d = x.cols();
  m.base_ = y.mean();
  Eigen::VectorXd fhat = Eigen::VectorXd::Constant(n, m.base_);
  Eigen::VectorXd resid = y - fhat;

  std::vector<std::vector<int>> order(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    auto& ord = order[static_cast<std::size_t>(j)];
    ord.resize(static_cast<std::size_t>(n));
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int a, int b) { return x(a, j) < x(b, j); });
  }

  m.stumps_.reserve(static_cast<std::size_t>(rounds));
  m.train_curve_.reserve(static_cast<std::size_t>(rounds));
  for (int r = 0; r < rounds; ++r) {
    const double total = resid.sum();
    double best_gain = total * total / static_cast<double>(n);
    Stump best;
    bool found = false;
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto& ord = order[static_cast<std::size_t>(j)];
      double left_sum = 0.0;
      for (Eigen::Index t = 0; t + 1 < n; ++t) {
        left_sum += resid[ord[static_cast<std::size_t>(t)]];
        const double lo = x(ord[static_cast<std::size_t>(t)], j);
        const double hi = x(ord[static_cast<std::size_t>(t + 1)], j);
        if (lo == hi) continue;
        const double nl = static_cast<double>(t + 1);
        const double nr = static_cast<double>(n - t - 1);
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr;
        if (gain > best_gain + 1e-12) {  // strict improvement keeps ties deterministic
          best_gain = gain;
          best.feature = static_cast<int>(j);
          best.threshold = 0.5 * (lo + hi);
          best.left = left_sum / nl;
          best.right = right_sum / nr;
          found = true;
        }
      }
    }
    if (!found) {
      // no useful split: shrink toward the residual mean, which leaves the
      // training loss unchanged once residuals are centered
      best.feature = 0;
      best.threshold = std::numeric_limits<double>::infinity();
      best.left = total / static_cast<double>(n);
      best.right = 0.0;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = x(i, best.feature) <= best.threshold ? best.left : best.right;
      fhat[i] += shrinkage * h;
      resid[i] = y[i] - fhat[i];
    }
    m.stumps_.push_back(best);
    m.train_curve_.push_back(resid.squaredNorm());
  }
}

}  // namespace

FittedModel fit(const LearnerSpec& spec, const Dataset& data,
                const std::vector<int>& subset, const std::vector<int>& rows) {
  data.validate();
  check_subset(subset, data.p(), "fit");
  check_rows(data, subset, rows, "fit");
  if (spec.lambda < 0.0) throw std::invalid_argument("fit: ridge penalty must be >= 0");
  if (spec.neighbors < 1) throw std::invalid_argument("fit: neighbor count must be >= 1");
  if (spec.rounds < 1) throw std::invalid_argument("fit: boosting rounds must be >= 1");
  if (!(spec.shrinkage > 0.0 && spec.shrinkage <= 1.0))
    throw std::invalid_argument("fit: shrinkage must be in (0,1]");

  FittedModel m;
  m.spec_ = spec;
  m.subset_ = subset;
  const bool binary = binary_on_rows(data, rows);
  m.clamp_unit_ = binary;
  const Eigen::VectorXd y = gather_outcome(data, rows);

  if (subset.empty()) {
    m.is_constant_ = true;
    m.constant_ = y.mean();
    return m;
  }
  const Eigen::MatrixXd x = gather(data, subset, rows);

  switch (spec.kind) {
    case LearnerKind::ridge_logistic:
      if (!binary)
        throw std::invalid_argument("fit: logistic learner needs a binary outcome");
      fit_ridge(m, x, y, spec.lambda, true);
      break;
    case LearnerKind::ridge_linear:
      fit_ridge(m, x, y, spec.lambda, false);
      break;
    case LearnerKind::knn: {
      standardize(x, m.center_, m.scale_);
      m.train_x_.resize(x.rows(), x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        m.train_x_.col(j) = (x.col(j).array() - m.center_[j]) / m.scale_[j];
      m.train_y_ = y;
      break;
    }
    case LearnerKind::boosted_stumps:
      fit_stumps(m, x, y, spec.rounds, spec.shrinkage);
      break;
  }
  return m;
}

Eigen::VectorXd FittedModel::predict(const Eigen::MatrixXd& features) const {
  const Eigen::Index n = features.rows();
  if (!subset_.empty() && features.cols() <= subset_.back())
    throw std::invalid_argument("predict: feature matrix lacks a required column");
  Eigen::VectorXd out(n);

  if (is_constant_) {
    out.setConstant(constant_);
    return out;
  }

  const Eigen::Index d = static_cast<Eigen::Index>(subset_.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index j = 0; j < d; ++j) x.col(j) = features.col(subset_[static_cast<std::size_t>(j)]);

  switch (spec_.kind) {
    case LearnerKind::ridge_logistic:
    case LearnerKind::ridge_linear: {
      Eigen::MatrixXd z(n, d);
      for (Eigen::Index j = 0; j < d; ++j)
        z.col(j) = (x.col(j).array() - center_[j]) / scale_[j];
      out = (z * coef_).array() + intercept_;
      if (logistic_) out = out.unaryExpr([](double t) { return expit(t); });
      break;
    }
    case LearnerKind::knn: {
      const Eigen::Index m = train_x_.rows();
      const int k = std::min<int>(spec_.neighbors, static_cast<int>(m));
      std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(m));
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd q(d);
        for (Eigen::Index j = 0; j < d; ++j) q[j] = (x(i, j) - center_[j]) / scale_[j];
        for (Eigen::Index t = 0; t < m; ++t)
          dist[static_cast<std::size_t>(t)] = {(train_x_.row(t).transpose() - q).squaredNorm(),
                                               static_cast<int>(t)};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        double s = 0.0;
        for (int t = 0; t < k; ++t) s += train_y_[dist[static_cast<std::size_t>(t)].second];
        out[i] = s / static_cast<double>(k);
      }
      break;
    }
    case LearnerKind::boosted_stumps: {
      for (Eigen::Index i = 0; i < n; ++i) {
        double f = base_;
        for (const Stump& s : stumps_)
          f += spec_.shrinkage * (x(i, s.feature) <= s.threshold ? s.left : s.right);
        out[i] = f;
      }
      break;
    }
  }
  if (clamp_unit_) out = out.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

Eigen::VectorXd EnsembleModel::predict(const Eigen::MatrixXd& features) const {
  if (members.empty()) throw std::invalid_argument("predict: empty ensemble");
  if (weights.size() != static_cast<Eigen::Index>(members.size()))
    throw std::invalid_argument("predict: weight/member count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(features.rows());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double w = weights[static_cast<Eigen::Index>(i)];
    if (w != 0.0) out += w * members[i].predict(features);
  }
  return out;
}

namespace {

// Euclidean projection onto the probability simplex
Eigen::VectorXd project_simplex(Eigen::VectorXd v) {
  const Eigen::Index d = v.size();
  std::vector<double> u(v.data(), v.data() + d);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  int rho = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    cum += u[static_cast<std::size_t>(j)];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) {
      rho = static_cast<int>(j + 1);
      theta = t;
    }
  }
  (void)rho;
  Eigen::VectorXd w = (v.array() - theta).cwiseMax(0.0);
  const double s = w.sum();
  return s > 0.0 ? Eigen::VectorXd(w / s) : Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
}

double stack_loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w, bool binary) {
  Eigen::VectorXd q = z * w;
  if (!binary) return (q - y).squaredNorm() / static_cast<double>(y.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = std::clamp(q[i], 1e-7, 1.0 - 1e-7);
    loss += y[i] == 1.0 ? -std::log(p) : -std::log1p(-p);
  }
  return loss / static_cast<double>(y.size());
}

Eigen::VectorXd stack_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, bool binary) {
  Eigen::VectorXd q = z * w;
  Eigen::VectorXd dq(y.size());
  if (binary) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double p = std::clamp(q[i], 1e-7, 1.0 - 1e-7);
      dq[i] = y[i] == 1.0 ? -1.0 / p : 1.0 / (1.0 - p);
    }
  } else {
    dq = 2.0 * (q - y);
  }
  return z.transpose() * dq / static_cast<double>(y.size());
}

Eigen::VectorXd solve_simplex_weights(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                      bool binary) {
  const Eigen::Index d = z.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
  double fw = stack_loss(z, y, w, binary);
  for (int iter = 0; iter < 500; ++iter) {
    const Eigen::VectorXd g = stack_gradient(z, y, w, binary);
    double eta = 1.0;
    bool moved = false;
    for (int half = 0; half < 40; ++half) {
      Eigen::VectorXd cand = project_simplex(w - eta * g);
      const double fc = stack_loss(z, y, cand, binary);
      if (fc < fw - 1e-14) {
        const double step = (cand - w).cwiseAbs().maxCoeff();
        w = cand;
        fw = fc;
        moved = step > 1e-12;
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;
  }
  return w;
}

}  // namespace

EnsembleModel fit_stack(const StackConfig& config, const Dataset& data,
                        const std::vector<int>& subset, const std::vector<int>& rows,
                        std::uint64_t seed) {
  if (config.candidates.empty()) throw std::invalid_argument("fit_stack: no candidate learners");
  if (config.inner_folds < 2) throw std::invalid_argument("fit_stack: need at least 2 inner folds");
  check_subset(subset, data.p(), "fit_stack");
  check_rows(data, subset, rows, "fit_stack");

  EnsembleModel ensemble;
  std::vector<std::size_t> kept;
  std::string first_error;
  for (std::size_t c = 0; c < config.candidates.size(); ++c) {
    try {
      ensemble.members.push_back(fit(config.candidates[c], data, subset, rows));
      kept.push_back(c);
    } catch (const std::exception& e) {
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (ensemble.members.empty())
    throw std::runtime_error("fit_stack: every candidate failed (" + first_error + ")");
  const Eigen::Index nkept = static_cast<Eigen::Index>(ensemble.members.size());
  if (nkept == 1) {
    ensemble.weights = Eigen::VectorXd::Ones(1);
    return ensemble;
  }

  std::vector<double> y_rows(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y_rows[i] = data.outcome[rows[i]];
  const std::vector<int> labels = fold_labels(y_rows, config.inner_folds, sub_seed(seed, 0x57ac));

  Eigen::MatrixXd cv_pred(static_cast<Eigen::Index>(rows.size()), nkept);
  cv_pred.setZero();
  std::vector<bool> ok(static_cast<std::size_t>(nkept), true);
  for (int v = 1; v <= config.inner_folds; ++v) {
    std::vector<int> train_rows, held_rows;
    std::vector<Eigen::Index> held_pos;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (labels[i] == v) {
        held_rows.push_back(rows[i]);
        held_pos.push_back(static_cast<Eigen::Index>(i));
      } else {
        train_rows.push_back(rows[i]);
      }
    }
    Eigen::MatrixXd held_x(static_cast<Eigen::Index>(held_rows.size()), data.p());
    for (std::size_t i = 0; i < held_rows.size(); ++i) held_x.row(static_cast<Eigen::Index>(i)) = data.features.row(held_rows[i]);
    for (Eigen::Index c = 0; c < nkept; ++c) {
      if (!ok[static_cast<std::size_t>(c)]) continue;
      try {
        FittedModel fm = fit(config.candidates[kept[static_cast<std::size_t>(c)]], data, subset, train_rows);
        const Eigen::VectorXd pred = fm.predict(held_x);
        for (std::size_t i = 0; i < held_pos.size(); ++i)
          cv_pred(held_pos[i], c) = pred[static_cast<Eigen::Index>(i)];
      } catch (const std::exception&) {
        ok[static_cast<std::size_t>(c)] = false;
      }
    }
  }

  const Eigen::VectorXd y = gather_outcome(data, rows);
  const bool binary = binary_on_rows(data, rows);
  std::vector<Eigen::Index> usable;
  for (Eigen::Index c = 0; c < nkept; ++c)
    if (ok[static_cast<std::size_t>(c)]) usable.push_back(c);
  ensemble.weights = Eigen::VectorXd::Zero(nkept);
  if (usable.empty()) {
    // cross-validation failed everywhere; fall back to the first member
    ensemble.weights[0] = 1.0;
    return ensemble;
  }
  Eigen::MatrixXd z(cv_pred.rows(), static_cast<Eigen::Index>(usable.size()));
  for (std::size_t c = 0; c < usable.size(); ++c) z.col(static_cast<Eigen::Index>(c)) = cv_pred.col(usable[c]);
  const Eigen::VectorXd w = solve_simplex_weights(z, y, binary);
  for (std::size_t c = 0; c < usable.size(); ++c) ensemble.weights[usable[c]] = w[static_cast<Eigen::Index>(c)];
  return ensemble;
}

std::vector<double> rank_correlation_scores(const Dataset& data, const std::vector<int>& rows) {
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = data.outcome[rows[i]];
  std::vector<double> scores(static_cast<std::size_t>(data.p()), 0.0);
  std::vector<double> col(rows.size());
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = data.features(rows[i], j);
    scores[static_cast<std::size_t>(j)] = std::abs(spearman(col, y));
  }
  return scores;
}

std::vector<int> screen_with_scores(const std::vector<int>& subset,
                                    const std::vector<double>& abs_correlation) {
  if (subset.size() <= 2) return subset;
  const std::size_t keep = subset.size() >= 100 ? 10 : 2;
  std::vector<int> ranked = subset;
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const double ca = abs_correlation[static_cast<std::size_t>(a)];
    const double cb = abs_correlation[static_cast<std::size_t>(b)];
    if (ca != cb) return ca > cb;
    return a < b;
  });
  ranked.resize(keep);
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

std::vector<int> screen_by_rank_correlation(const Dataset& data,
                                            const std::vector<int>& subset,
                                            const std::vector<int>& rows) {
  check_subset(subset, data.p(), "screen_by_rank_correlation");
  if (subset.size() <= 2) return subset;
  check_rows(data, subset, rows, "screen_by_rank_correlation");
  // score only the subset's own columns so no masked cell elsewhere is touched
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = data.outcome[rows[i]];
  std::vector<double> scores(static_cast<std::size_t>(data.p()), 0.0);
  std::vector<double> col(rows.size());
  for (int j : subset) {
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = data.features(rows[i], j);
    scores[static_cast<std::size_t>(j)] = std::abs(spearman(col, y));
  }
  return screen_with_scores(subset, scores);
}

}  // namespace flevr
