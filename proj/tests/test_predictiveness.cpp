#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "flevr/predictiveness.hpp"

using namespace flevr;

namespace {

// quadratic-time pairwise oracle for the rank-based implementation
double pairwise_auc(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (y[j] != 0.0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

Dataset signal_dataset(int n, int p, std::uint64_t seed, double beta0 = 2.0) {
  Rng rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = gauss(rng);
    const double prob = normal_cdf(beta0 * x(i, 0));
    y[i] = unif(rng) < prob ? 1.0 : 0.0;
  }
  return make_dataset(x, y);
}

}  // namespace

TEST_CASE("auc reproduces the pairwise count on the worked example") {
  Eigen::VectorXd s(4), y(4);
  s << 0.1, 0.4, 0.35, 0.8;
  y << 0, 0, 1, 1;
  CHECK(pairwise_auc(s, y) == 0.75);  // oracle first
  CHECK(auc(s, y) == 0.75);
}

TEST_CASE("auc equals the pairwise oracle exactly on random instances") {
  Rng rng(31);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> nsize(4, 60);
  std::uniform_int_distribution<int> grid(0, 8);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = nsize(rng);
    Eigen::VectorXd s(n), y(n);
    bool p = false, q = false;
    for (int i = 0; i < n; ++i) {
      // lattice scores force plenty of ties
      s[i] = rep % 2 == 0 ? gauss(rng) : 0.25 * grid(rng);
      y[i] = coin(rng);
      (y[i] == 1.0 ? p : q) = true;
    }
    if (!p || !q) { --rep; continue; }
    CHECK(auc(s, y) == pairwise_auc(s, y));
  }
}

TEST_CASE("fully tied scores give auc one half") {
  Eigen::VectorXd s(2), y(2);
  s << 0.5, 0.5;
  y << 0, 1;
  CHECK(auc(s, y) == 0.5);
}

TEST_CASE("auc flips under score negation and ignores monotone transforms") {
  Rng rng(32);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd s(50), y(50);
  for (int i = 0; i < 50; ++i) {
    s[i] = gauss(rng);
    y[i] = i % 2;
  }
  const double a = auc(s, y);
  CHECK(a + auc(-s, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(auc(2.0 * s.array() + 3.0, y) == a);
}

TEST_CASE("auc rejects one-class labels and bad inputs") {
  Eigen::VectorXd s(3), y(3);
  s << 1, 2, 3;
  y << 1, 1, 1;
  CHECK_THROWS_AS(auc(s, y), std::invalid_argument);
  y << 0, 0, 0;
  CHECK_THROWS_AS(auc(s, y), std::invalid_argument);
  y << 0, 1, 2;
  CHECK_THROWS_AS(auc(s, y), std::invalid_argument);
  s[1] = std::numeric_limits<double>::quiet_NaN();
  y << 0, 1, 1;
  CHECK_THROWS_AS(auc(s, y), std::invalid_argument);
}

TEST_CASE("auc influence function has mean zero, including under ties") {
  Rng rng(33);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> grid(0, 5);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd s(80), y(80);
    for (int i = 0; i < 80; ++i) {
      s[i] = rep % 2 == 0 ? gauss(rng) : 0.5 * grid(rng);
      y[i] = i % 3 == 0 ? 1.0 : 0.0;
    }
    const double a = auc(s, y);
    const Eigen::VectorXd eif = auc_eif(s, y, a);
    CHECK(std::abs(eif.mean()) <= 1e-8);
  }
}

TEST_CASE("auc influence variance tracks the bootstrap at n = 200") {
  Rng rng(34);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  const int n = 200;
  Eigen::VectorXd s(n), y(n);
  for (int i = 0; i < n; ++i) {
    const double lin = gauss(rng);
    s[i] = normal_cdf(1.5 * lin);
    y[i] = unif(rng) < s[i] ? 1.0 : 0.0;
  }
  const PredictivenessEstimate est = evaluate_measure(Measure::auc, s, y);

  std::vector<double> boots;
  boots.reserve(2000);
  std::uniform_int_distribution<int> pick(0, n - 1);
  while (boots.size() < 2000) {
    Eigen::VectorXd bs(n), by(n);
    bool saw0 = false, saw1 = false;
    for (int i = 0; i < n; ++i) {
      const int k = pick(rng);
      bs[i] = s[k];
      by[i] = y[k];
      (by[i] == 1.0 ? saw1 : saw0) = true;
    }
    if (!saw0 || !saw1) continue;
    boots.push_back(auc(bs, by));
  }
  const double bm = mean(boots);
  double bv = 0.0;
  for (double b : boots) bv += (b - bm) * (b - bm);
  bv /= static_cast<double>(boots.size() - 1);
  CHECK(std::abs(est.variance - bv) / bv < 0.15);
}

TEST_CASE("r_squared hits the closed-form anchors") {
  Eigen::VectorXd y(4), f(4);
  y << 1, 2, 3, 4;
  CHECK(r_squared(y, y) == 1.0);
  f.setConstant(y.mean());
  CHECK(r_squared(f, y) == 0.0);
  f << 4, 3, 2, 1;
  CHECK(r_squared(f, y) < 0.0);  // worse than the mean
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 2.0);
  CHECK_THROWS_AS(r_squared(f, flat), std::invalid_argument);
}

TEST_CASE("r_squared influence function has mean zero") {
  Rng rng(35);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd y(150), f(150);
  for (int i = 0; i < 150; ++i) {
    const double x = gauss(rng);
    y[i] = 2.0 * x + gauss(rng);
    f[i] = 1.8 * x;
  }
  const PredictivenessEstimate est = evaluate_measure(Measure::r_squared, f, y);
  CHECK(std::abs(est.eif.mean()) <= 1e-8);
  CHECK(est.variance > 0.0);
}

TEST_CASE("cross-fitted value is exactly one half for a balanced null model") {
  // 10/10 outcome with 5 stratified folds: every training complement has mean
  // exactly 0.5, so the pooled scores are one constant and auc is exactly 0.5
  Rng rng(36);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd x(20, 2);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = gauss(rng);
    x(i, 1) = gauss(rng);
    y[i] = i % 2;
  }
  Dataset d = make_dataset(x, y);
  StackConfig cfg;
  cfg.candidates = {LearnerSpec{LearnerKind::ridge_logistic}};
  cfg.inner_folds = 2;
  const FoldAssignment folds = make_folds(d, 5, 17);
  const PredictivenessEstimate est = cv_predictiveness(d, {}, Measure::auc, cfg, folds, 3);
  CHECK(est.value == 0.5);
}

TEST_CASE("cross-fitting is deterministic given the seed and honours the cache") {
  Dataset d = signal_dataset(120, 4, 37);
  StackConfig cfg;
  cfg.candidates = {LearnerSpec{LearnerKind::ridge_logistic},
                    LearnerSpec{LearnerKind::boosted_stumps}};
  cfg.inner_folds = 3;
  const FoldAssignment folds = make_folds(d, 3, 5);
  const PredictivenessEstimate a = cv_predictiveness(d, {0, 1, 2, 3}, Measure::auc, cfg, folds, 11);
  const PredictivenessEstimate b = cv_predictiveness(d, {0, 1, 2, 3}, Measure::auc, cfg, folds, 11);
  CHECK(a.value == b.value);
  CHECK(a.eif == b.eif);
  const ScreenCache cache = make_screen_cache(d, folds);
  const PredictivenessEstimate c =
      cv_predictiveness(d, {0, 1, 2, 3}, Measure::auc, cfg, folds, 11, &cache);
  CHECK(c.value == a.value);
  CHECK(c.eif == a.eif);
}

TEST_CASE("pure-noise features score near one half across seeds") {
  StackConfig cfg;
  LearnerSpec smoother{LearnerKind::knn};
  smoother.neighbors = 240;  // heavy smoothing keeps a noise ranking close to flat
  cfg.candidates = {smoother};
  cfg.inner_folds = 2;
  int inside = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    Dataset d = signal_dataset(500, 2, 1000 + static_cast<std::uint64_t>(rep), 0.0);
    const FoldAssignment folds = make_folds(d, 2, 50 + static_cast<std::uint64_t>(rep));
    const PredictivenessEstimate est =
        cv_predictiveness(d, {1}, Measure::auc, cfg, folds, static_cast<std::uint64_t>(rep));
    if (est.value >= 0.45 && est.value <= 0.55) ++inside;
  }
  CHECK(inside >= static_cast<int>(0.95 * reps));
}

TEST_CASE("duplicating a strong feature barely moves the cross-fitted value") {
  StackConfig cfg;
  cfg.candidates = {LearnerSpec{LearnerKind::ridge_logistic}};
  cfg.inner_folds = 2;
  double total_diff = 0.0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    Dataset d = signal_dataset(300, 2, 2000 + static_cast<std::uint64_t>(rep));
    d.features.col(1) = d.features.col(0);  // exact duplicate
    const FoldAssignment folds = make_folds(d, 2, 80 + static_cast<std::uint64_t>(rep));
    const double v1 =
        cv_predictiveness(d, {0}, Measure::auc, cfg, folds, static_cast<std::uint64_t>(rep)).value;
    const double v2 =
        cv_predictiveness(d, {0, 1}, Measure::auc, cfg, folds, static_cast<std::uint64_t>(rep)).value;
    total_diff += v2 - v1;
  }
  CHECK(std::abs(total_diff / reps) <= 0.01);
}

TEST_CASE("larger subsets never lose predictiveness beyond noise") {
  StackConfig cfg;
  cfg.candidates = {LearnerSpec{LearnerKind::ridge_logistic}};
  cfg.inner_folds = 2;
  int violations = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    Dataset d = signal_dataset(150, 3, 3000 + static_cast<std::uint64_t>(rep), 1.0);
    const FoldAssignment folds = make_folds(d, 2, 7 + static_cast<std::uint64_t>(rep));
    const PredictivenessEstimate small =
        cv_predictiveness(d, {0}, Measure::auc, cfg, folds, static_cast<std::uint64_t>(rep));
    const PredictivenessEstimate big =
        cv_predictiveness(d, {0, 1}, Measure::auc, cfg, folds, static_cast<std::uint64_t>(rep));
    const double slack = 2.0 * std::sqrt(small.variance + big.variance);
    if (small.value > big.value + slack) ++violations;
  }
  CHECK(violations <= 5);
}

TEST_CASE("cross-fitting validates inputs") {
  Dataset d = signal_dataset(60, 2, 38);
  StackConfig cfg;
  cfg.candidates = {LearnerSpec{LearnerKind::ridge_logistic}};
  const FoldAssignment folds = make_folds(d, 2, 1);
  Dataset cont = d;
  cont.outcome = d.features.col(0);
  CHECK_THROWS_AS(cv_predictiveness(cont, {0}, Measure::auc, cfg, folds, 0),
                  std::invalid_argument);
  FoldAssignment bad = folds;
  bad.folds.pop_back();
  CHECK_THROWS_AS(cv_predictiveness(d, {0}, Measure::auc, cfg, bad, 0), std::invalid_argument);
  Dataset holey = d;
  holey.obs(4, 2) = 0;
  CHECK_THROWS_AS(cv_predictiveness(holey, {0, 1}, Measure::auc, cfg, folds, 0),
                  std::invalid_argument);
}
