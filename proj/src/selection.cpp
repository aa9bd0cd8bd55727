#include "flevr/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace flevr {

TestResults test_statistics(const PooledEstimate& pooled) {
  const std::size_t p = pooled.psi_bar.size();
  if (p == 0 || pooled.total_var.size() != p)
    throw std::invalid_argument("test_statistics: malformed pooled estimate");
  TestResults res;
  res.t_stats.resize(p);
  res.p_values.resize(p);
  res.degenerate.assign(p, 0);
  for (std::size_t j = 0; j < p; ++j) {
    const double v = pooled.total_var[j];
    if (v < 0.0) throw std::invalid_argument("test_statistics: negative variance");
    if (v == 0.0) {
      res.degenerate[j] = 1;
      if (pooled.psi_bar[j] != 0.0) {
        res.t_stats[j] = std::copysign(std::numeric_limits<double>::infinity(),
                                       pooled.psi_bar[j]);
        res.p_values[j] = 0.0;
      } else {
        res.t_stats[j] = 0.0;
        res.p_values[j] = 1.0;
      }
    } else {
      const double t = pooled.psi_bar[j] / std::sqrt(v);
      res.t_stats[j] = t;
      res.p_values[j] = normal_cdf(-t);
    }
  }
  return res;
}

std::vector<double> holm_adjust(const std::vector<double>& p_values) {
  const int p = static_cast<int>(p_values.size());
  for (double v : p_values)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("holm_adjust: p-values must lie in [0, 1]");
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (p_values[static_cast<std::size_t>(a)] != p_values[static_cast<std::size_t>(b)])
      return p_values[static_cast<std::size_t>(a)] < p_values[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<double> adjusted(static_cast<std::size_t>(p));
  double running = 0.0;
  for (int pos = 0; pos < p; ++pos) {
    const std::size_t j = static_cast<std::size_t>(order[static_cast<std::size_t>(pos)]);
    running = std::max(running, std::min(p_values[j] * (p - pos), 1.0));
    adjusted[j] = running;
  }
  return adjusted;
}

std::vector<int> initial_set(const std::vector<double>& adjusted, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("initial_set: alpha must lie in (0, 1)");
  for (double v : adjusted)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("initial_set: adjusted p-values must lie in [0, 1]");
  std::vector<int> out;
  for (std::size_t j = 0; j < adjusted.size(); ++j)
    if (adjusted[j] < alpha) out.push_back(static_cast<int>(j));
  return out;
}

SelectionResult augment(const std::vector<double>& adjusted, const std::vector<int>& initial,
                        const ErrorControl& control, double alpha) {
  const int p = static_cast<int>(adjusted.size());
  if (p == 0) throw std::invalid_argument("augment: no features");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("augment: alpha must lie in (0, 1)");
  for (double v : adjusted)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("augment: adjusted p-values must lie in [0, 1]");
  std::vector<char> chosen(static_cast<std::size_t>(p), 0);
  for (int j : initial) {
    if (j < 0 || j >= p) throw std::invalid_argument("augment: initial index out of range");
    if (chosen[static_cast<std::size_t>(j)])
      throw std::invalid_argument("augment: duplicate initial index");
    chosen[static_cast<std::size_t>(j)] = 1;
  }
  const int R = static_cast<int>(initial.size());

  SelectionResult res;
  res.initial_set = initial;
  std::sort(res.initial_set.begin(), res.initial_set.end());
  res.alpha = alpha;
  res.mode = control.mode;

  int k = 0;
  if (control.mode == ControlMode::gfwer) {
    k = control.k;
    if (k < 0 || k > p - R)
      throw std::invalid_argument("augment: k must lie in {0, ..., p - |initial|}");
  } else {
    double q = control.q;
    if (control.mode == ControlMode::fdr) {
      if (!(control.f > alpha && control.f < 1.0))
        throw std::invalid_argument("augment: fdr level must lie in (alpha, 1)");
      q = (control.f - alpha) / (1.0 - alpha);
    } else if (!(q > 0.0 && q < 1.0)) {
      throw std::invalid_argument("augment: q must lie in (0, 1)");
    }
    res.q_used = q;
    if (R > 0) {
      for (int j = 0; j <= p - R; ++j)
        if (static_cast<double>(j) / static_cast<double>(j + R) <= q) k = j;
    }
  }
  res.k_used = k;

  std::vector<int> unselected;
  for (int j = 0; j < p; ++j)
    if (!chosen[static_cast<std::size_t>(j)]) unselected.push_back(j);
  std::sort(unselected.begin(), unselected.end(), [&](int a, int b) {
    if (adjusted[static_cast<std::size_t>(a)] != adjusted[static_cast<std::size_t>(b)])
      return adjusted[static_cast<std::size_t>(a)] < adjusted[static_cast<std::size_t>(b)];
    return a < b;
  });
  res.augmentation_set.assign(unselected.begin(), unselected.begin() + k);
  std::sort(res.augmentation_set.begin(), res.augmentation_set.end());

  res.final_set = res.initial_set;
  res.final_set.insert(res.final_set.end(), res.augmentation_set.begin(),
                       res.augmentation_set.end());
  std::sort(res.final_set.begin(), res.final_set.end());
  return res;
}

std::pair<int, double> choose_k_q(std::int64_t n, int p, int s0, double target_specificity) {
  if (n < 1) throw std::invalid_argument("choose_k_q: n must be positive");
  if (p < 1 || s0 < 0 || s0 >= p) throw std::invalid_argument("choose_k_q: need 0 <= s0 < p");
  if (!(target_specificity > 0.0 && target_specificity < 1.0))
    throw std::invalid_argument("choose_k_q: target specificity must lie in (0, 1)");
  const double remaining = static_cast<double>(p - s0);
  const int k = static_cast<int>(std::ceil((1.0 - target_specificity) * remaining));
  const double q =
      static_cast<double>(k) /
      (remaining / static_cast<double>(p) * std::sqrt(static_cast<double>(n) / 200.0) + k);
  return {k, q};
}

PooledEstimate pooled_spvim(const std::vector<Dataset>& completed, const SpvimConfig& config,
                            std::uint64_t seed) {
  if (completed.empty()) throw std::invalid_argument("pooled_spvim: no datasets");
  if (completed.size() == 1) {
    const SpvimEstimate est = estimate_spvim(completed[0], config, sub_seed(seed, 0x717, 0));
    PooledEstimate pooled;
    pooled.M = 1;
    pooled.psi_bar = est.psi;
    pooled.within_var = est.variances;
    pooled.between_var.assign(est.psi.size(), 0.0);
    pooled.total_var = est.variances;
    return pooled;
  }
  std::vector<SpvimEstimate> ests(completed.size());
  parallel_for(completed.size(), [&](std::size_t m) {
    ests[m] = estimate_spvim(completed[m], config, sub_seed(seed, 0x717, m));
  });
  return pool_rubin(ests);
}

SelectionResult select(const Dataset& data, const SelectionConfig& config, std::uint64_t seed) {
  data.validate();
  SpvimConfig sp;
  sp.measure = config.measure;
  sp.stack = config.stack;
  sp.folds = config.folds;
  sp.budget = config.budget;

  PooledEstimate pooled;
  if (data.complete()) {
    const SpvimEstimate est = estimate_spvim(data, sp, sub_seed(seed, 0x5e1));
    pooled.M = 1;
    pooled.psi_bar = est.psi;
    pooled.within_var = est.variances;
    pooled.between_var.assign(est.psi.size(), 0.0);
    pooled.total_var = est.variances;
  } else {
    const auto imputed = mice_impute(data, config.imputations, config.mice_iterations,
                                     config.donors, sub_seed(seed, 0x5e2));
    pooled = pooled_spvim(imputed, sp, sub_seed(seed, 0x5e3));
  }

  TestResults tests = test_statistics(pooled);
  tests.p_adjusted = holm_adjust(tests.p_values);
  const std::vector<int> chosen = initial_set(tests.p_adjusted, config.alpha);
  SelectionResult res = augment(tests.p_adjusted, chosen, config.control, config.alpha);
  res.tests = std::move(tests);
  res.pooled = std::move(pooled);
  return res;
}

}  // namespace flevr
