#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "flevr/common.hpp"
#include "flevr/data.hpp"
#include "flevr/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

using namespace flevr;

namespace {

Dataset gaussian_dataset(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = gauss(rng);
    y[i] = gauss(rng);
  }
  return make_dataset(x, y);
}

AmputationSpec chain_spec() {
  AmputationSpec spec;
  spec.always_observed = {0, 2, 4, 6, 7};
  spec.monotone_chain = {1, 3, 5};
  spec.weight_features = {0, 2};
  spec.max_prop = 0.4;
  return spec;
}

double column_missing_rate(const Dataset& data, int col) {
  double missing = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (!data.feature_observed(i, col)) missing += 1.0;
  return missing / static_cast<double>(data.n());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

SpvimEstimate stub_estimate(std::vector<double> psi, std::vector<double> variances) {
  SpvimEstimate est;
  est.psi = std::move(psi);
  est.variances = std::move(variances);
  return est;
}

}  // namespace

TEST_CASE("zero max_prop leaves the dataset untouched") {
  const auto data = gaussian_dataset(50, 8, 1u);
  auto spec = chain_spec();
  spec.max_prop = 0.0;
  const auto out = ampute(data, spec, 7u);
  CHECK(out.features == data.features);
  CHECK(out.outcome == data.outcome);
  CHECK(out.obs == data.obs);
}

TEST_CASE("amputation validates its specification") {
  const auto data = gaussian_dataset(30, 8, 2u);
  SUBCASE("overlap between chain and always observed") {
    auto spec = chain_spec();
    spec.always_observed.push_back(3);
    CHECK_THROWS_AS(ampute(data, spec, 1u), std::invalid_argument);
  }
  SUBCASE("weight feature that can go missing") {
    auto spec = chain_spec();
    spec.weight_features = {1};
    CHECK_THROWS_AS(ampute(data, spec, 1u), std::invalid_argument);
  }
  SUBCASE("max_prop at one") {
    auto spec = chain_spec();
    spec.max_prop = 1.0;
    CHECK_THROWS_AS(ampute(data, spec, 1u), std::invalid_argument);
  }
  SUBCASE("index out of range") {
    auto spec = chain_spec();
    spec.monotone_chain = {1, 3, 99};
    CHECK_THROWS_AS(ampute(data, spec, 1u), std::invalid_argument);
  }
  SUBCASE("duplicate chain entry") {
    auto spec = chain_spec();
    spec.monotone_chain = {1, 3, 3};
    CHECK_THROWS_AS(ampute(data, spec, 1u), std::invalid_argument);
  }
  SUBCASE("incomplete input") {
    auto holed = data;
    holed.obs(0, 1) = 0;
    CHECK_THROWS_AS(ampute(holed, chain_spec(), 1u), std::invalid_argument);
  }
}

TEST_CASE("amputation respects the monotone chain and the column caps") {
  const auto data = gaussian_dataset(100000, 8, 3u);
  auto spec = chain_spec();
  spec.independent_missing = {6, 7};
  spec.always_observed = {0, 2, 4};
  const auto out = ampute(data, spec, 11u);

  CHECK(count_chain_violations(out, spec.monotone_chain) == 0);
  for (Eigen::Index i = 0; i < out.n(); ++i) {
    // the head observed forces the rest of the chain observed
    if (out.feature_observed(i, 1)) {
      CHECK(out.feature_observed(i, 3));
      CHECK(out.feature_observed(i, 5));
    }
    if (out.feature_observed(i, 3)) CHECK(out.feature_observed(i, 5));
  }

  for (int c = 0; c < 8; ++c) CHECK(column_missing_rate(out, c) <= spec.max_prop + 0.02);
  CHECK(column_missing_rate(out, 1) == doctest::Approx(0.4).epsilon(0.05));
  CHECK(column_missing_rate(out, 6) == doctest::Approx(0.4).epsilon(0.05));
  CHECK(column_missing_rate(out, 7) == doctest::Approx(0.4).epsilon(0.05));
  CHECK(column_missing_rate(out, 3) < column_missing_rate(out, 1));
  CHECK(column_missing_rate(out, 5) < column_missing_rate(out, 3));
  for (int c : spec.always_observed) CHECK(column_missing_rate(out, c) == 0.0);
  for (Eigen::Index i = 0; i < out.n(); ++i) CHECK(out.outcome_observed(i));
}

TEST_CASE("amputation keeps observed cells bit identical and is seeded") {
  const auto data = gaussian_dataset(2000, 8, 4u);
  const auto spec = chain_spec();
  const auto a = ampute(data, spec, 5u);
  const auto b = ampute(data, spec, 5u);
  const auto c = ampute(data, spec, 6u);
  CHECK(a.obs == b.obs);
  CHECK(a.features == b.features);
  CHECK(a.obs != c.obs);
  for (Eigen::Index i = 0; i < a.n(); ++i)
    for (int j = 0; j < 8; ++j) {
      if (a.feature_observed(i, j))
        CHECK(a.features(i, j) == data.features(i, j));
      else
        CHECK(a.features(i, j) == 0.0);
    }
}

TEST_CASE("missingness leans on the weight features") {
  // higher weight scores should be amputed more often
  const auto data = gaussian_dataset(20000, 8, 5u);
  const auto out = ampute(data, chain_spec(), 9u);
  std::vector<double> score_missing, score_observed;
  for (Eigen::Index i = 0; i < out.n(); ++i) {
    const double z = 0.5 * (data.features(i, 0) + data.features(i, 2));
    (out.feature_observed(i, 1) ? score_observed : score_missing).push_back(z);
  }
  CHECK(mean(score_missing) > mean(score_observed) + 0.2);
}

TEST_CASE("complete input imputes to identical copies") {
  const auto data = gaussian_dataset(60, 4, 6u);
  const auto imputed = mice_impute(data, 3, 5, 5, 1u);
  REQUIRE(imputed.size() == 3);
  for (const auto& d : imputed) {
    CHECK(d.features == data.features);
    CHECK(d.outcome == data.outcome);
    CHECK(d.complete());
  }
}

TEST_CASE("imputation validates its arguments") {
  auto data = gaussian_dataset(30, 4, 7u);
  data.obs(2, 1) = 0;
  CHECK_THROWS_AS(mice_impute(data, 1, 5, 5, 1u), std::invalid_argument);
  CHECK_THROWS_AS(mice_impute(data, 2, 0, 5, 1u), std::invalid_argument);
  CHECK_THROWS_AS(mice_impute(data, 2, 5, 0, 1u), std::invalid_argument);
  CHECK_THROWS_AS(mice_impute(data, 2, 5, 40, 1u), std::invalid_argument);

  auto empty_col = gaussian_dataset(10, 2, 8u);
  for (Eigen::Index i = 0; i < empty_col.n(); ++i) empty_col.obs(i, 2) = 0;
  CHECK_THROWS_WITH_AS(mice_impute(empty_col, 2, 5, 5, 1u),
                       doctest::Contains("no observed values"), std::invalid_argument);
}

TEST_CASE("every imputed cell copies an observed donor value") {
  const auto complete = gaussian_dataset(800, 8, 9u);
  auto spec = chain_spec();
  spec.independent_missing = {6};
  spec.always_observed = {0, 2, 4};
  const auto holed = ampute(complete, spec, 3u);
  const auto imputed = mice_impute(holed, 2, 3, 5, 4u);

  for (int j = 0; j < 8; ++j) {
    std::set<double> observed;
    for (Eigen::Index i = 0; i < holed.n(); ++i)
      if (holed.feature_observed(i, j)) observed.insert(holed.features(i, j));
    for (const auto& d : imputed) {
      CHECK(d.complete());
      for (Eigen::Index i = 0; i < holed.n(); ++i) {
        if (holed.feature_observed(i, j))
          CHECK(d.features(i, j) == holed.features(i, j));
        else
          CHECK(observed.count(d.features(i, j)) == 1);
      }
    }
  }
}

TEST_CASE("binary columns stay binary through imputation") {
  auto data = gaussian_dataset(400, 3, 10u);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    data.features(i, 1) = data.features(i, 1) > 0.0 ? 1.0 : 0.0;
  AmputationSpec spec;
  spec.monotone_chain = {1};
  spec.weight_features = {0};
  spec.always_observed = {0, 2};
  spec.max_prop = 0.3;
  const auto holed = ampute(data, spec, 5u);
  const auto imputed = mice_impute(holed, 2, 3, 5, 6u);
  for (const auto& d : imputed)
    for (Eigen::Index i = 0; i < d.n(); ++i)
      CHECK((d.features(i, 1) == 0.0 || d.features(i, 1) == 1.0));
}

TEST_CASE("a partially missing outcome is imputed from observed outcomes") {
  auto data = gaussian_dataset(300, 2, 11u);
  std::set<double> observed;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (i % 5 == 0)
      data.obs(i, 0) = 0;
    else
      observed.insert(data.outcome[i]);
  }
  const auto imputed = mice_impute(data, 2, 3, 5, 7u);
  for (const auto& d : imputed) {
    CHECK(d.complete());
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      if (data.outcome_observed(i))
        CHECK(d.outcome[i] == data.outcome[i]);
      else
        CHECK(observed.count(d.outcome[i]) == 1);
    }
  }
}

TEST_CASE("imputation is deterministic and thread invariant") {
  const auto complete = gaussian_dataset(300, 5, 12u);
  AmputationSpec spec;
  spec.monotone_chain = {1, 3};
  spec.weight_features = {0};
  spec.always_observed = {0, 2, 4};
  spec.max_prop = 0.35;
  const auto holed = ampute(complete, spec, 8u);

  const auto a = mice_impute(holed, 3, 4, 5, 9u);
  const auto b = mice_impute(holed, 3, 4, 5, 9u);
  const auto c = mice_impute(holed, 3, 4, 5, 10u);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(a[m].features == b[m].features);
    CHECK(a[m].outcome == b[m].outcome);
  }
  CHECK(a[0].features != c[0].features);

  set_max_threads(2);
  const auto d = mice_impute(holed, 3, 4, 5, 9u);
  set_max_threads(1);
  for (std::size_t m = 0; m < 3; ++m) CHECK(a[m].features == d[m].features);
}

TEST_CASE("imputed values track a strongly correlated companion") {
  int worst_seed = -1;
  double worst_gap = 0.0;
  for (int s = 0; s < 100; ++s) {
    const int n = 2000;
    std::mt19937_64 rng(500u + static_cast<unsigned>(s));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = gauss(rng);
      x(i, 1) = x(i, 0) + 0.33 * gauss(rng);
      y[i] = x(i, 0) + 0.5 * gauss(rng);
    }
    const auto data = make_dataset(x, y);
    AmputationSpec spec;
    spec.monotone_chain = {1};
    spec.weight_features = {0};
    spec.always_observed = {0};
    spec.max_prop = 0.3;
    const auto holed = ampute(data, spec, 600u + static_cast<unsigned>(s));
    const auto imputed = mice_impute(holed, 2, 5, 5, 700u + static_cast<unsigned>(s));

    std::vector<double> obs_x1, obs_x2, full_x1, full_x2;
    for (Eigen::Index i = 0; i < holed.n(); ++i) {
      full_x1.push_back(data.features(i, 0));
      full_x2.push_back(imputed[0].features(i, 1));
      if (holed.feature_observed(i, 1)) {
        obs_x1.push_back(data.features(i, 0));
        obs_x2.push_back(data.features(i, 1));
      }
    }
    const double gap = std::abs(pearson(full_x1, full_x2) - pearson(obs_x1, obs_x2));
    if (gap > worst_gap) {
      worst_gap = gap;
      worst_seed = s;
    }
  }
  INFO("worst seed ", worst_seed);
  CHECK(worst_gap <= 0.1);
}

TEST_CASE("pooling follows the worked example") {
  const auto pooled = pool_rubin({stub_estimate({0.1}, {0.01}), stub_estimate({0.3}, {0.01})});
  CHECK(pooled.M == 2);
  CHECK(pooled.psi_bar[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(pooled.within_var[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(pooled.between_var[0] == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(pooled.total_var[0] == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("identical estimates pool with exactly zero dispersion") {
  const std::vector<double> psi{0.123456789, std::sqrt(2.0) / 3.0, -0.25};
  const std::vector<double> vars{0.002, 0.0071, 0.0009};
  const std::vector<SpvimEstimate> reps(5, stub_estimate(psi, vars));
  const auto pooled = pool_rubin(reps);
  for (std::size_t j = 0; j < psi.size(); ++j) {
    CHECK(pooled.psi_bar[j] == psi[j]);
    CHECK(pooled.between_var[j] == 0.0);
    CHECK(pooled.within_var[j] == vars[j]);
    CHECK(pooled.total_var[j] == vars[j]);
  }
}

TEST_CASE("pooling ignores the order of the estimates") {
  std::mt19937_64 rng(77u);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<SpvimEstimate> ests;
  for (int m = 0; m < 4; ++m) {
    std::vector<double> psi(3), vars(3);
    for (auto& v : psi) v = unif(rng) - 0.5;
    for (auto& v : vars) v = unif(rng) * 0.01;
    ests.push_back(stub_estimate(psi, vars));
  }
  const auto base = pool_rubin(ests);
  std::vector<SpvimEstimate> shuffled{ests[2], ests[0], ests[3], ests[1]};
  const auto again = pool_rubin(shuffled);
  CHECK(base.psi_bar == again.psi_bar);
  CHECK(base.within_var == again.within_var);
  CHECK(base.between_var == again.between_var);
  CHECK(base.total_var == again.total_var);
}

TEST_CASE("pooling identities and homogeneity") {
  std::mt19937_64 rng(78u);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<SpvimEstimate> ests;
  for (int m = 0; m < 6; ++m) {
    std::vector<double> psi(4), vars(4);
    for (auto& v : psi) v = unif(rng) - 0.5;
    for (auto& v : vars) v = unif(rng) * 0.01;
    ests.push_back(stub_estimate(psi, vars));
  }
  const auto pooled = pool_rubin(ests);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(pooled.total_var[j] ==
          pooled.within_var[j] + (6.0 + 1.0) / 6.0 * pooled.between_var[j]);
    CHECK(pooled.total_var[j] >= pooled.within_var[j]);
    CHECK(pooled.between_var[j] >= 0.0);
  }

  const double a = -2.5;
  auto scaled = ests;
  for (auto& e : scaled)
    for (auto& v : e.psi) v *= a;
  const auto pooled_scaled = pool_rubin(scaled);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(pooled_scaled.psi_bar[j] == doctest::Approx(a * pooled.psi_bar[j]).epsilon(1e-12));
    CHECK(pooled_scaled.between_var[j] ==
          doctest::Approx(a * a * pooled.between_var[j]).epsilon(1e-12));
  }
}

TEST_CASE("pooling validates its inputs") {
  CHECK_THROWS_AS(pool_rubin({stub_estimate({0.1}, {0.01})}), std::invalid_argument);
  CHECK_THROWS_AS(pool_rubin({stub_estimate({0.1}, {0.01}), stub_estimate({0.1, 0.2}, {0.01, 0.01})}),
                  std::invalid_argument);
}
