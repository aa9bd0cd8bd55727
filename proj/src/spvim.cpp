#include "flevr/spvim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>

namespace flevr {

std::int64_t default_budget(int p) {
  if (p < 1) throw std::invalid_argument("default_budget: p must be >= 1");
  if (p <= 12) return std::int64_t{1} << p;
  return std::int64_t{48} * p;
}

namespace {

std::vector<double> kernel_by_size(int p) {
  std::vector<double> w(static_cast<std::size_t>(p) + 1, 0.0);
  for (int m = 1; m < p; ++m) {
    const double log_choose = std::lgamma(p + 1.0) - std::lgamma(m + 1.0) - std::lgamma(p - m + 1.0);
    w[static_cast<std::size_t>(m)] =
        std::exp(std::log(p - 1.0) - log_choose - std::log(static_cast<double>(m)) -
                 std::log(static_cast<double>(p - m)));
  }
  return w;
}

std::uint64_t subset_tag(const std::vector<int>& s) {
  std::uint64_t h = 0x5b5e5ull;
  for (int j : s) h = mix_seed(h ^ static_cast<std::uint64_t>(j + 1));
  return h;
}

}  // namespace

SubsetSample sample_subsets(int p, std::int64_t budget, std::uint64_t seed,
                            bool force_sampled) {
  if (p < 1) throw std::invalid_argument("sample_subsets: p must be >= 1");
  if (budget < 2) throw std::invalid_argument("sample_subsets: budget must be >= 2");

  SubsetSample sample;
  sample.p = p;
  sample.budget = budget;
  sample.kernel_weights = kernel_by_size(p);
  sample.exhaustive = !force_sampled && p <= 22 && budget >= (std::int64_t{1} << p);

  std::vector<int> full(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) full[static_cast<std::size_t>(j)] = j;
  sample.subsets.push_back({});
  sample.subsets.push_back(full);

  if (sample.exhaustive) {
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << p); ++mask) {
      std::vector<int> s;
      for (int j = 0; j < p; ++j)
        if (mask & (std::uint64_t{1} << j)) s.push_back(j);
      sample.subsets.push_back(std::move(s));
    }
    sample.multiplicities.assign(sample.subsets.size(), 1);
    return sample;
  }

  // size distribution: P(m) proportional to C(p,m) * kernel(m) = (p-1)/(m(p-m))
  std::vector<double> size_prob(static_cast<std::size_t>(p - 1));
  for (int m = 1; m < p; ++m)
    size_prob[static_cast<std::size_t>(m - 1)] = 1.0 / (static_cast<double>(m) * (p - m));
  std::discrete_distribution<int> draw_size(size_prob.begin(), size_prob.end());

  Rng rng(sub_seed(seed, 0x5a3b));
  std::map<std::vector<int>, std::int64_t> counts;
  std::vector<int> pool(full);
  for (std::int64_t t = 0; t + 2 < budget; ++t) {
    const int m = draw_size(rng) + 1;
    // partial Fisher-Yates: the first m entries become a uniform m-subset
    for (int j = 0; j < m; ++j) {
      std::uniform_int_distribution<int> pick(j, p - 1);
      std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> s(pool.begin(), pool.begin() + m);
    std::sort(s.begin(), s.end());
    ++counts[s];
  }

  sample.multiplicities.assign(2, 1);
  for (auto& [s, c] : counts) {
    sample.subsets.push_back(s);
    sample.multiplicities.push_back(c);
  }
  return sample;
}

namespace {

struct KktSolution {
  Eigen::VectorXd psi;
  Eigen::MatrixXd kkt_inverse;        // (p+1) x (p+1)
  std::vector<double> subset_weight;  // normalized objective weight per subset
};

KktSolution solve_kkt(const SubsetSample& sample, const std::vector<double>& values) {
  const int p = sample.p;
  if (values.size() != sample.subsets.size())
    throw std::invalid_argument("shapley_solve: one value per sampled subset required");
  if (sample.subsets.size() < 2 || !sample.subsets[0].empty() ||
      static_cast<int>(sample.subsets[1].size()) != p)
    throw std::invalid_argument("shapley_solve: sample lacks its empty/full anchors");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("shapley_solve: non-finite value");

  const double v_null = values[0];
  const double v_full = values[1];

  std::vector<double> weight(sample.subsets.size(), 0.0);
  double wmax = 0.0;
  for (std::size_t i = 2; i < sample.subsets.size(); ++i) {
    const double w = sample.kernel_weights[sample.subsets[i].size()] *
                     static_cast<double>(sample.multiplicities[i]);
    weight[i] = w;
    wmax = std::max(wmax, w);
  }
  if (wmax > 0.0)
    for (auto& w : weight) w /= wmax;  // objective scale does not move the minimizer

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
  for (std::size_t i = 2; i < sample.subsets.size(); ++i) {
    const double w = weight[i];
    const double g = values[i] - v_null;
    for (int a : sample.subsets[i]) {
      rhs[a] += w * g;
      for (int b : sample.subsets[i]) kkt(a, b) += w;
    }
  }
  kkt.col(p).head(p).setOnes();
  kkt.row(p).head(p).setOnes();
  rhs[p] = v_full - v_null;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  lu.setThreshold(1e-10);
  if (lu.rank() < p + 1)
    throw std::runtime_error(
        "shapley_solve: sampled subsets cannot identify every attribution; "
        "increase the sampling budget");
  KktSolution sol;
  sol.kkt_inverse = lu.inverse();
  sol.psi = (sol.kkt_inverse * rhs).head(p);
  sol.subset_weight = std::move(weight);
  return sol;
}

}  // namespace

std::vector<double> shapley_solve(const SubsetSample& sample,
                                  const std::vector<double>& values) {
  const KktSolution sol = solve_kkt(sample, values);
  return {sol.psi.data(), sol.psi.data() + sol.psi.size()};
}

std::vector<double> shapley_exact(int p, const std::vector<double>& values_by_mask) {
  if (p < 1 || p > 20) throw std::invalid_argument("shapley_exact: need 1 <= p <= 20");
  const std::size_t total = std::size_t{1} << p;
  if (values_by_mask.size() != total)
    throw std::invalid_argument("shapley_exact: need a value for every subset");

  std::vector<double> inv_choose(static_cast<std::size_t>(p), 0.0);
  for (int m = 0; m < p; ++m) {
    double c = 1.0;
    for (int t = 0; t < m; ++t) c = c * (p - 1 - t) / (t + 1);
    inv_choose[static_cast<std::size_t>(m)] = 1.0 / c;
  }

  std::vector<double> psi(static_cast<std::size_t>(p), 0.0);
  for (std::size_t mask = 0; mask < total; ++mask) {
    const int m = std::popcount(mask);
    for (int j = 0; j < p; ++j) {
      const std::size_t bit = std::size_t{1} << j;
      if (mask & bit) continue;
      const double gap = values_by_mask[mask | bit] - values_by_mask[mask];
      psi[static_cast<std::size_t>(j)] +=
          inv_choose[static_cast<std::size_t>(m)] / static_cast<double>(p) * gap;
    }
  }
  return psi;
}

SpvimEstimate estimate_spvim(const Dataset& data, const SpvimConfig& config,
                             std::uint64_t seed) {
  data.validate();
  if (!data.complete()) throw std::invalid_argument("estimate_spvim: dataset must be complete");
  const int p = static_cast<int>(data.p());
  const std::int64_t budget = config.budget == 0 ? default_budget(p) : config.budget;

  SpvimEstimate est;
  est.sample = sample_subsets(p, budget, sub_seed(seed, 2));
  const std::size_t nsub = est.sample.subsets.size();
  const FoldAssignment folds = make_folds(data, config.folds, sub_seed(seed, 1));
  const ScreenCache cache = make_screen_cache(data, folds);

  est.subset_values.resize(nsub);
  parallel_for(nsub, [&](std::size_t i) {
    est.subset_values[i] =
        cv_predictiveness(data, est.sample.subsets[i], config.measure, config.stack, folds,
                          sub_seed(seed, 3, subset_tag(est.sample.subsets[i])), &cache);
  });

  std::vector<double> values(nsub);
  for (std::size_t i = 0; i < nsub; ++i) values[i] = est.subset_values[i].value;
  const KktSolution sol = solve_kkt(est.sample, values);
  est.psi.assign(sol.psi.data(), sol.psi.data() + p);
  est.v_null = values[0];
  est.v_full = values[1];

  // sensitivity of each attribution to each subset value, via the kkt inverse
  const Eigen::MatrixXd P = sol.kkt_inverse.topLeftCorner(p, p);
  const Eigen::VectorXd q = sol.kkt_inverse.block(0, p, p, 1);
  Eigen::MatrixXd sens = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(nsub));
  Eigen::VectorXd interior_sum = Eigen::VectorXd::Zero(p);
  for (std::size_t i = 2; i < nsub; ++i) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    for (int j : est.sample.subsets[i]) x[j] = 1.0;
    sens.col(static_cast<Eigen::Index>(i)) = P * (sol.subset_weight[i] * x);
    interior_sum += sens.col(static_cast<Eigen::Index>(i));
  }
  sens.col(1) = q;
  sens.col(0) = -(interior_sum + q);

  const Eigen::Index n = data.n();
  Eigen::MatrixXd eifs(static_cast<Eigen::Index>(nsub), n);
  for (std::size_t i = 0; i < nsub; ++i) eifs.row(static_cast<Eigen::Index>(i)) = est.subset_values[i].eif.transpose();
  const Eigen::MatrixXd phi = sens * eifs;  // p x n influence values for psi

  est.eif_variances.assign(static_cast<std::size_t>(p), 0.0);
  const double dn = static_cast<double>(n);
  for (int j = 0; j < p; ++j)
    est.eif_variances[static_cast<std::size_t>(j)] = phi.row(j).squaredNorm() / dn / dn;
  est.variances = est.eif_variances;

  if (!est.sample.exhaustive) {
    // leave-one-draw-out dispersion of the solution across sampled subsets
    const double b_total = static_cast<double>(budget - 2);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(nsub));
    Eigen::VectorXd delta_mean = Eigen::VectorXd::Zero(p);
    for (std::size_t i = 2; i < nsub; ++i) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
      double xdot = 0.0;
      for (int j : est.sample.subsets[i]) {
        x[j] = 1.0;
        xdot += est.psi[static_cast<std::size_t>(j)];
      }
      const double resid = (values[i] - est.v_null) - xdot;
      const double per_draw_w =
          sol.subset_weight[i] / static_cast<double>(est.sample.multiplicities[i]);
      delta.col(static_cast<Eigen::Index>(i)) = -(P * (per_draw_w * resid * x));
      delta_mean += static_cast<double>(est.sample.multiplicities[i]) *
                    delta.col(static_cast<Eigen::Index>(i));
    }
    delta_mean /= b_total;
    for (int j = 0; j < p; ++j) {
      double disp = 0.0;
      for (std::size_t i = 2; i < nsub; ++i) {
        const double dev = delta(j, static_cast<Eigen::Index>(i)) - delta_mean[j];
        disp += static_cast<double>(est.sample.multiplicities[i]) * dev * dev;
      }
      est.variances[static_cast<std::size_t>(j)] += (b_total - 1.0) / b_total * disp;
    }
  }
  return est;
}

}  // namespace flevr
