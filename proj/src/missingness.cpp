#include "flevr/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flevr/learners.hpp"

namespace flevr {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_feature_indices(const std::vector<int>& v, int p, const std::string& what) {
  std::vector<int> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] < 0 || sorted[i] >= p)
      throw std::invalid_argument("ampute: " + what + " index out of range");
    if (i > 0 && sorted[i] == sorted[i - 1])
      throw std::invalid_argument("ampute: duplicate index in " + what);
  }
}

bool intersects(const std::vector<int>& a, const std::vector<int>& b) {
  for (int x : a)
    for (int y : b)
      if (x == y) return true;
  return false;
}

// intercept a with mean_i eligible_i * expit(a + z_i) = target, by bisection
double calibrate_intercept(const Eigen::VectorXd& z, const Eigen::VectorXd& eligible,
                           double target) {
  const double n = static_cast<double>(z.size());
  const auto level = [&](double a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += eligible[i] * expit(a + z[i]);
    return s / n;
  };
  double lo = -60.0, hi = 60.0;
  if (level(lo) > target || level(hi) < target)
    throw std::runtime_error("ampute: cannot calibrate the requested missing proportion");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (level(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Dataset ampute(const Dataset& data, const AmputationSpec& spec, std::uint64_t seed) {
  data.validate();
  if (!data.complete()) throw std::invalid_argument("ampute: dataset must be complete");
  const int p = static_cast<int>(data.p());
  check_feature_indices(spec.always_observed, p, "always_observed");
  check_feature_indices(spec.monotone_chain, p, "monotone_chain");
  check_feature_indices(spec.independent_missing, p, "independent_missing");
  check_feature_indices(spec.weight_features, p, "weight_features");
  if (intersects(spec.monotone_chain, spec.always_observed))
    throw std::invalid_argument("ampute: monotone_chain overlaps always_observed");
  if (intersects(spec.independent_missing, spec.always_observed))
    throw std::invalid_argument("ampute: independent_missing overlaps always_observed");
  if (intersects(spec.monotone_chain, spec.independent_missing))
    throw std::invalid_argument("ampute: monotone_chain overlaps independent_missing");
  if (intersects(spec.weight_features, spec.monotone_chain) ||
      intersects(spec.weight_features, spec.independent_missing))
    throw std::invalid_argument("ampute: weight_features must stay observed");
  if (!(spec.max_prop >= 0.0 && spec.max_prop < 1.0))
    throw std::invalid_argument("ampute: max_prop must lie in [0, 1)");
  if (spec.max_prop == 0.0) return data;

  const Eigen::Index n = data.n();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  if (!spec.weight_features.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (int w : spec.weight_features) s += data.features(i, w);
      z[i] = s / static_cast<double>(spec.weight_features.size());
    }
    const double mu = z.mean();
    const double sd = std::sqrt((z.array() - mu).square().sum() / static_cast<double>(n));
    if (sd > 0.0)
      z = (z.array() - mu) / sd;
    else
      z.setZero();
  }

  Dataset out = data;
  Rng rng(sub_seed(seed, 0xa3));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int chain_len = static_cast<int>(spec.monotone_chain.size());
  if (chain_len > 0) {
    // graded targets keep the chain head at max_prop and later links below it
    std::vector<Eigen::VectorXd> stage(static_cast<std::size_t>(chain_len));
    Eigen::VectorXd reach = Eigen::VectorXd::Ones(n);
    for (int t = 0; t < chain_len; ++t) {
      const double target = spec.max_prop * static_cast<double>(chain_len - t) / chain_len;
      const double a = calibrate_intercept(z, reach, target);
      Eigen::VectorXd pt(n);
      for (Eigen::Index i = 0; i < n; ++i) pt[i] = expit(a + z[i]);
      reach = reach.cwiseProduct(pt);
      stage[static_cast<std::size_t>(t)] = std::move(pt);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int t = 0; t < chain_len; ++t) {
        if (unif(rng) >= stage[static_cast<std::size_t>(t)][i]) break;
        const int c = spec.monotone_chain[static_cast<std::size_t>(t)];
        out.obs(i, c + 1) = 0;
        out.features(i, c) = 0.0;
      }
    }
  }

  if (!spec.independent_missing.empty()) {
    const double b = calibrate_intercept(z, Eigen::VectorXd::Ones(n), spec.max_prop);
    Eigen::VectorXd prob(n);
    for (Eigen::Index i = 0; i < n; ++i) prob[i] = expit(b + z[i]);
    for (int c : spec.independent_missing) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (unif(rng) < prob[i]) {
          out.obs(i, c + 1) = 0;
          out.features(i, c) = 0.0;
        }
      }
    }
  }
  return out;
}

std::int64_t count_chain_violations(const Dataset& data, const std::vector<int>& chain) {
  check_feature_indices(chain, static_cast<int>(data.p()), "monotone_chain");
  std::int64_t violations = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    bool observed_earlier = false;
    for (int c : chain) {
      if (data.feature_observed(i, c))
        observed_earlier = true;
      else if (observed_earlier) {
        ++violations;
        break;
      }
    }
  }
  return violations;
}

namespace {

struct MicePlan {
  std::vector<std::vector<int>> obs_rows, miss_rows;  // per column, 0 = outcome
  std::vector<int> cycle;                             // columns with missing cells
  std::vector<char> is_binary;
  Eigen::MatrixXd base;  // n x (p+1), outcome first, placeholders at missing cells
};

Dataset run_chain(const Dataset& data, const MicePlan& plan, int max_iter, int donors,
                  std::uint64_t chain_seed) {
  const Eigen::Index n = data.n();
  const int p = static_cast<int>(data.p());
  Eigen::MatrixXd w = plan.base;
  Rng rng(chain_seed);

  for (int k : plan.cycle) {
    const auto& obs = plan.obs_rows[static_cast<std::size_t>(k)];
    std::uniform_int_distribution<int> pick(0, static_cast<int>(obs.size()) - 1);
    for (int i : plan.miss_rows[static_cast<std::size_t>(k)])
      w(i, k) = w(obs[static_cast<std::size_t>(pick(rng))], k);
  }

  std::vector<int> donor_pool;
  for (int it = 0; it < max_iter; ++it) {
    for (int k : plan.cycle) {
      std::vector<int> predictors;
      predictors.reserve(static_cast<std::size_t>(p));
      for (int j = 0; j <= p; ++j)
        if (j != k) predictors.push_back(j);
      LearnerSpec spec;
      spec.kind = plan.is_binary[static_cast<std::size_t>(k)] ? LearnerKind::ridge_logistic
                                                              : LearnerKind::ridge_linear;
      const Dataset frame = make_dataset(w, w.col(k));
      const FittedModel model = fit(spec, frame, predictors, plan.obs_rows[static_cast<std::size_t>(k)]);
      const Eigen::VectorXd preds = model.predict(w);

      const auto& obs = plan.obs_rows[static_cast<std::size_t>(k)];
      const int d = std::min(donors, static_cast<int>(obs.size()));
      std::uniform_int_distribution<int> choose(0, d - 1);
      for (int i : plan.miss_rows[static_cast<std::size_t>(k)]) {
        const double target = preds[i];
        donor_pool.assign(obs.begin(), obs.end());
        const auto closer = [&](int a, int b) {
          const double da = std::abs(preds[a] - target);
          const double db = std::abs(preds[b] - target);
          if (da != db) return da < db;
          return a < b;
        };
        std::nth_element(donor_pool.begin(), donor_pool.begin() + (d - 1), donor_pool.end(),
                         closer);
        std::sort(donor_pool.begin(), donor_pool.begin() + d, closer);
        w(i, k) = w(donor_pool[static_cast<std::size_t>(choose(rng))], k);
      }
    }
  }

  Dataset out = data;
  out.outcome = w.col(0);
  out.features = w.block(0, 1, n, p);
  out.obs.setOnes();
  return out;
}

}  // namespace

std::vector<Dataset> mice_impute(const Dataset& data, int M, int max_iter, int donors,
                                 std::uint64_t seed) {
  data.validate();
  if (M < 2) throw std::invalid_argument("mice_impute: M must be >= 2");
  if (max_iter < 1) throw std::invalid_argument("mice_impute: max_iter must be >= 1");
  if (donors < 1) throw std::invalid_argument("mice_impute: donors must be >= 1");

  const Eigen::Index n = data.n();
  const int p = static_cast<int>(data.p());
  MicePlan plan;
  plan.obs_rows.resize(static_cast<std::size_t>(p) + 1);
  plan.miss_rows.resize(static_cast<std::size_t>(p) + 1);
  plan.is_binary.assign(static_cast<std::size_t>(p) + 1, 0);
  plan.base.resize(n, p + 1);
  plan.base.col(0) = data.outcome;
  plan.base.rightCols(p) = data.features;

  for (int k = 0; k <= p; ++k) {
    bool zeros = false, ones = false, other = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (data.obs(i, k)) {
        plan.obs_rows[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
        const double v = plan.base(i, k);
        if (v == 0.0) zeros = true;
        else if (v == 1.0) ones = true;
        else other = true;
      } else {
        plan.miss_rows[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
      }
    }
    const auto& obs = plan.obs_rows[static_cast<std::size_t>(k)];
    const std::string name = k == 0 ? data.outcome_name : data.feature_names[static_cast<std::size_t>(k - 1)];
    if (obs.empty())
      throw std::invalid_argument("mice_impute: column " + name + " has no observed values");
    if (static_cast<int>(obs.size()) < donors)
      throw std::invalid_argument("mice_impute: column " + name +
                                  " has fewer observed values than donors");
    plan.is_binary[static_cast<std::size_t>(k)] = (!other && zeros && ones) ? 1 : 0;
    if (!plan.miss_rows[static_cast<std::size_t>(k)].empty()) plan.cycle.push_back(k);
  }

  std::vector<Dataset> out(static_cast<std::size_t>(M), data);
  if (plan.cycle.empty()) return out;

  parallel_for(static_cast<std::size_t>(M), [&](std::size_t m) {
    out[m] = run_chain(data, plan, max_iter, donors, sub_seed(seed, 0x31ce, m));
  });
  return out;
}

namespace {

// symmetric in the input order and exact when all entries coincide
double ordered_shift_mean(std::vector<double> v) {
  const double ref = *std::min_element(v.begin(), v.end());
  for (auto& x : v) x -= ref;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return ref + s / static_cast<double>(v.size());
}

double ordered_sum_sq_dev(std::vector<double> v, double center) {
  for (auto& x : v) {
    x -= center;
    x *= x;
  }
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

PooledEstimate pool_rubin(const std::vector<SpvimEstimate>& estimates) {
  const int M = static_cast<int>(estimates.size());
  if (M < 2) throw std::invalid_argument("pool_rubin: need at least two estimates");
  const std::size_t p = estimates[0].psi.size();
  if (p == 0) throw std::invalid_argument("pool_rubin: estimates are empty");
  for (const auto& e : estimates)
    if (e.psi.size() != p || e.variances.size() != p)
      throw std::invalid_argument("pool_rubin: estimates disagree on dimension");

  PooledEstimate pooled;
  pooled.M = M;
  pooled.psi_bar.resize(p);
  pooled.within_var.resize(p);
  pooled.between_var.resize(p);
  pooled.total_var.resize(p);
  std::vector<double> psis(static_cast<std::size_t>(M)), vars(static_cast<std::size_t>(M));
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t m = 0; m < static_cast<std::size_t>(M); ++m) {
      psis[m] = estimates[m].psi[j];
      vars[m] = estimates[m].variances[j];
    }
    const double pb = ordered_shift_mean(psis);
    const double tau = ordered_sum_sq_dev(psis, pb) / static_cast<double>(M - 1);
    pooled.psi_bar[j] = pb;
    pooled.within_var[j] = ordered_shift_mean(vars);
    pooled.between_var[j] = tau;
    pooled.total_var[j] = pooled.within_var[j] +
                          (static_cast<double>(M) + 1.0) / static_cast<double>(M) * tau;
  }
  return pooled;
}

}  // namespace flevr
