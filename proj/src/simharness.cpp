#include "flevr/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "flevr/predictiveness.hpp"
#include "json.hpp"

namespace flevr {

namespace {

std::vector<double> mixed_beta(int p) {
  std::vector<double> beta(static_cast<std::size_t>(p), 0.0);
  beta[0] = -1.0;
  beta[1] = 1.0;
  beta[2] = -0.5;
  beta[3] = 0.5;
  beta[4] = 1.0 / 3.0;
  beta[5] = -1.0 / 3.0;
  return beta;
}

std::vector<double> weak_beta(int p) {
  std::vector<double> beta(static_cast<std::size_t>(p), 0.0);
  beta[1] = 1.0;
  beta[5] = 1.0;
  return beta;
}

struct Moments {
  double mean = 0.0;
  double sd = 1.0;
};

// distributional mean and sd of each nonnormal marginal, used both to draw the
// features and to standardize them inside the shaped outcome signal
Moments mixed_moments(int j) {
  switch (j) {
    case 0:
      return {0.5, 1.0};
    case 1:
    case 4:
      return {0.5, 0.5};
    case 2: {
      const double a = 1.75, b = 1.9;
      const double g1 = std::tgamma(1.0 + 1.0 / a);
      const double g2 = std::tgamma(1.0 + 2.0 / a);
      return {b * g1, b * std::sqrt(g2 - g1 * g1)};
    }
    case 3: {
      const double m = 0.5, s2 = 0.25;
      return {std::exp(m + s2 / 2.0),
              std::sqrt((std::exp(s2) - 1.0) * std::exp(2.0 * m + s2))};
    }
    case 5:
      return {0.25, 1.0};
    default:
      return {0.0, 1.0};
  }
}

double shaped_signal(const std::vector<double>& beta, const double* c) {
  const double quarter_pi = std::numbers::pi / 4.0;
  return 2.0 * (beta[0] * std::sin(quarter_pi * c[0]) + beta[1] * c[1] * c[2] +
                beta[2] * std::tanh(c[2]) + beta[3] * std::cos(quarter_pi * c[3]) +
                beta[4] * c[4] * c[0] - beta[5] * std::tanh(c[5]));
}

double signal_value(const ScenarioSpec& spec, const Eigen::MatrixXd& x, Eigen::Index i) {
  if (spec.outcome_form == OutcomeForm::linear) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.beta.size(); ++j)
      s += spec.beta[j] * x(i, static_cast<Eigen::Index>(j));
    return s;
  }
  double c[6];
  for (int j = 0; j < 6; ++j) {
    if (spec.feature_dist == FeatureDist::mixed_marginals) {
      const Moments m = mixed_moments(j);
      c[j] = (x(i, j) - m.mean) / m.sd;
    } else {
      c[j] = x(i, j);
    }
  }
  return shaped_signal(spec.beta, c);
}

// The requested pattern (common rho2 inside the active block, rho1^|i-j|
// elsewhere) is slightly indefinite when rho2 is large, so no Gaussian has
// exactly these correlations.  The draw keeps the unit diagonal and the
// active block fixed and projects the remaining entries onto the nearest
// feasible values (alternating projections with a Dykstra correction); the
// background entries move by at most a few hundredths.
Eigen::MatrixXd correlation_root(const ScenarioSpec& spec) {
  if (!(spec.rho1 >= 0.0 && spec.rho1 < 1.0 && spec.rho2 >= 0.0 && spec.rho2 < 1.0))
    throw std::invalid_argument("gen_scenario: correlations must lie in [0, 1)");
  const int p = spec.p;
  std::vector<char> active(static_cast<std::size_t>(p), 0);
  for (int j : spec.active) active[static_cast<std::size_t>(j)] = 1;
  const auto pinned = [&](int i, int j) {
    return i == j || (active[static_cast<std::size_t>(i)] && active[static_cast<std::size_t>(j)]);
  };
  Eigen::MatrixXd target(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j)
        target(i, j) = 1.0;
      else if (pinned(i, j))
        target(i, j) = spec.rho2;
      else
        target(i, j) = std::pow(spec.rho1, std::abs(i - j));
    }

  Eigen::MatrixXd y = target;
  Eigen::MatrixXd correction = Eigen::MatrixXd::Zero(p, p);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(target);
  if (es.eigenvalues().minCoeff() < 0.0) {
    for (int it = 0; it < 500; ++it) {
      const Eigen::MatrixXd shifted = y - correction;
      es.compute(shifted);
      const Eigen::MatrixXd psd = es.eigenvectors() *
                                  es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                                  es.eigenvectors().transpose();
      correction = psd - shifted;
      y = psd;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          if (pinned(i, j)) y(i, j) = target(i, j);
    }
    es.compute(y);
  }
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// complete draw shared by gen_scenario, optimal_auc and evaluate
void draw_complete(const ScenarioSpec& spec, int n, Rng& rng, Eigen::MatrixXd& x,
                   Eigen::VectorXd& probs, Eigen::VectorXd& y) {
  const int p = spec.p;
  x.resize(n, p);
  std::normal_distribution<double> gauss(0.0, 1.0);
  switch (spec.feature_dist) {
    case FeatureDist::iid_normal: {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = gauss(rng);
      break;
    }
    case FeatureDist::correlated_normal: {
      const Eigen::MatrixXd root = correlation_root(spec);
      Eigen::VectorXd z(p);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) z[j] = gauss(rng);
        x.row(i) = (root * z).transpose();
      }
      break;
    }
    case FeatureDist::mixed_marginals: {
      std::bernoulli_distribution coin(0.5);
      std::weibull_distribution<double> weib(1.75, 1.9);
      std::lognormal_distribution<double> logn(0.5, 0.5);
      for (int i = 0; i < n; ++i) {
        x(i, 0) = 0.5 + gauss(rng);
        x(i, 1) = coin(rng) ? 1.0 : 0.0;
        x(i, 2) = weib(rng);
        x(i, 3) = logn(rng);
        x(i, 4) = coin(rng) ? 1.0 : 0.0;
        x(i, 5) = 0.25 + gauss(rng);
        for (int j = 6; j < p; ++j) x(i, j) = gauss(rng);
      }
      break;
    }
  }
  probs.resize(n);
  y.resize(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    probs[i] = normal_cdf(spec.intercept + signal_value(spec, x, i));
    y[i] = unif(rng) < probs[i] ? 1.0 : 0.0;
  }
}

}  // namespace

ScenarioSpec scenario_spec(int id, int p, double missing_prop) {
  if (id < 1 || id > 8) throw std::invalid_argument("scenario_spec: id must lie in 1..8");
  const bool fixed_p = (id == 2 || id >= 6);
  if (fixed_p && p != 6)
    throw std::invalid_argument("scenario_spec: this scenario uses p = 6");
  if (p < 6) throw std::invalid_argument("scenario_spec: need p >= 6");
  if (!(missing_prop >= 0.0 && missing_prop < 1.0))
    throw std::invalid_argument("scenario_spec: missing_prop must lie in [0, 1)");

  ScenarioSpec s;
  s.id = id;
  s.p = p;
  s.missing_prop = missing_prop;
  const std::vector<int> first_six{0, 1, 2, 3, 4, 5};
  const std::vector<int> weak_pair{1, 5};
  const std::vector<int> weak_trio{1, 2, 5};
  switch (id) {
    case 1:
      s.beta = mixed_beta(p);
      s.active = first_six;
      break;
    case 2:
      s.outcome_form = OutcomeForm::shaped_sum;
      s.feature_dist = FeatureDist::correlated_normal;
      s.rho1 = 0.3;
      s.rho2 = 0.95;
      s.beta = weak_beta(6);
      s.active = weak_trio;
      break;
    case 3:
      s.feature_dist = FeatureDist::mixed_marginals;
      s.beta = mixed_beta(p);
      s.active = first_six;
      break;
    case 4:
      s.outcome_form = OutcomeForm::shaped_sum;
      s.beta = mixed_beta(6);
      s.active = first_six;
      break;
    case 5:
      s.outcome_form = OutcomeForm::shaped_sum;
      s.feature_dist = FeatureDist::mixed_marginals;
      s.beta = mixed_beta(6);
      s.active = first_six;
      break;
    case 6:
      s.beta = weak_beta(6);
      s.active = weak_pair;
      break;
    case 7:
      s.feature_dist = FeatureDist::correlated_normal;
      s.rho1 = 0.3;
      s.rho2 = 0.95;
      s.beta = weak_beta(6);
      s.active = weak_pair;
      break;
    case 8:
      s.outcome_form = OutcomeForm::shaped_sum;
      s.beta = weak_beta(6);
      s.active = weak_trio;
      break;
  }
  return s;
}

AmputationSpec scenario_amputation(const ScenarioSpec& spec) {
  AmputationSpec amp;
  amp.always_observed = {0, 2, 4};
  amp.monotone_chain = {1, 3, 5};
  amp.weight_features = {0, 2, 4};
  amp.max_prop = spec.missing_prop;
  const int noise_missing = spec.p >= 500 ? 40 : (spec.p > 6 ? 3 : 0);
  for (int j = 6; j < 6 + std::min(noise_missing, spec.p - 6); ++j)
    amp.independent_missing.push_back(j);
  return amp;
}

GeneratedData gen_scenario(const ScenarioSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_scenario: n must be positive");
  Rng rng(mix_seed(seed));
  Eigen::MatrixXd x;
  Eigen::VectorXd probs, y;
  draw_complete(spec, n, rng, x, probs, y);
  GeneratedData out{make_dataset(std::move(x), std::move(y)), spec.active};
  if (spec.missing_prop > 0.0)
    out.data = ampute(out.data, scenario_amputation(spec), sub_seed(seed, 0xa2b));
  return out;
}

double optimal_auc(const ScenarioSpec& spec, int mc_n, std::uint64_t seed) {
  if (mc_n < 10000) throw std::invalid_argument("optimal_auc: mc_n must be at least 10000");
  Rng rng(mix_seed(seed));
  Eigen::MatrixXd x;
  Eigen::VectorXd probs, y;
  draw_complete(spec, mc_n, rng, x, probs, y);
  return auc(probs, y);
}

ReplicateMetrics evaluate(const SelectionResult& selection, const std::vector<int>& truth,
                          const ScenarioSpec& spec, int test_n, const StackConfig& stack,
                          const std::vector<Dataset>& training_sets, std::uint64_t seed) {
  if (test_n < 1000) throw std::invalid_argument("evaluate: test_n must be at least 1000");
  if (training_sets.empty()) throw std::invalid_argument("evaluate: no training sets");
  const int p = spec.p;
  std::vector<char> is_active(static_cast<std::size_t>(p), 0);
  for (int j : truth) {
    if (j < 0 || j >= p) throw std::invalid_argument("evaluate: truth index out of range");
    is_active[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<char> picked(static_cast<std::size_t>(p), 0);
  for (int j : selection.final_set) {
    if (j < 0 || j >= p) throw std::invalid_argument("evaluate: selected index out of range");
    picked[static_cast<std::size_t>(j)] = 1;
  }

  int hits = 0, rejects = 0;
  for (int j = 0; j < p; ++j) {
    if (is_active[static_cast<std::size_t>(j)]) {
      if (picked[static_cast<std::size_t>(j)]) ++hits;
    } else if (!picked[static_cast<std::size_t>(j)]) {
      ++rejects;
    }
  }
  const int n_active = static_cast<int>(truth.size());
  ReplicateMetrics metrics;
  metrics.sensitivity = n_active == 0 ? 1.0 : static_cast<double>(hits) / n_active;
  metrics.specificity = p == n_active ? 1.0 : static_cast<double>(rejects) / (p - n_active);

  ScenarioSpec complete = spec;
  complete.missing_prop = 0.0;
  const GeneratedData test = gen_scenario(complete, test_n, sub_seed(seed, 0x7e5));
  if (selection.final_set.empty()) {
    metrics.test_auc = 0.5;
    return metrics;
  }
  double total = 0.0;
  for (std::size_t m = 0; m < training_sets.size(); ++m) {
    std::vector<int> rows(static_cast<std::size_t>(training_sets[m].n()));
    std::iota(rows.begin(), rows.end(), 0);
    const EnsembleModel model = fit_stack(stack, training_sets[m], selection.final_set, rows,
                                          sub_seed(seed, 0xf17, m));
    total += auc(model.predict(test.data.features), test.data.outcome);
  }
  metrics.test_auc = total / static_cast<double>(training_sets.size());
  return metrics;
}

SelectionResult augment_clamped(const std::vector<double>& adjusted,
                                const std::vector<int>& initial, ErrorControl control,
                                double alpha) {
  if (control.mode == ControlMode::gfwer) {
    const int room = static_cast<int>(adjusted.size()) - static_cast<int>(initial.size());
    control.k = std::max(0, std::min(control.k, room));
  }
  return augment(adjusted, initial, control, alpha);
}

const char* control_mode_name(ControlMode mode) {
  switch (mode) {
    case ControlMode::gfwer:
      return "gfwer";
    case ControlMode::pfp:
      return "pfp";
    case ControlMode::fdr:
      return "fdr";
  }
  return "gfwer";
}

ControlMode parse_control_mode(const std::string& name) {
  if (name == "gfwer") return ControlMode::gfwer;
  if (name == "pfp") return ControlMode::pfp;
  if (name == "fdr") return ControlMode::fdr;
  throw std::invalid_argument("unknown control mode: " + name);
}

StackConfig default_internal_stack(int scenario_id) {
  StackConfig stack;
  const bool linear = scenario_id == 1 || scenario_id == 3 || scenario_id == 6 ||
                      scenario_id == 7;
  if (!linear) {
    LearnerSpec stumps;
    stumps.kind = LearnerKind::boosted_stumps;
    stumps.rounds = 100;
    stumps.shrinkage = 0.1;
    stack.candidates.push_back(stumps);
  }
  stack.candidates.push_back(LearnerSpec{LearnerKind::ridge_logistic});
  return stack;
}

double target_specificity(int p) {
  if (p <= 6) return 0.75;
  if (p <= 30) return 0.85;
  return 0.95;
}

namespace {

LearnerSpec parse_learner(const nlohmann::json& j) {
  LearnerSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ridge_logistic")
    spec.kind = LearnerKind::ridge_logistic;
  else if (kind == "ridge_linear")
    spec.kind = LearnerKind::ridge_linear;
  else if (kind == "knn")
    spec.kind = LearnerKind::knn;
  else if (kind == "boosted_stumps")
    spec.kind = LearnerKind::boosted_stumps;
  else
    throw std::invalid_argument("unknown learner kind: " + kind);
  spec.lambda = j.value("lambda", spec.lambda);
  spec.neighbors = j.value("neighbors", spec.neighbors);
  spec.rounds = j.value("rounds", spec.rounds);
  spec.shrinkage = j.value("shrinkage", spec.shrinkage);
  return spec;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config: " + path);
  nlohmann::json j;
  in >> j;

  ExperimentConfig c;
  if (j.contains("scenarios"))
    c.scenarios = j["scenarios"].get<std::vector<int>>();
  else if (j.contains("scenario"))
    c.scenarios = {j["scenario"].get<int>()};
  c.p = j.value("p", c.p);
  if (j.contains("n"))
    c.sample_sizes = j["n"].is_array() ? j["n"].get<std::vector<int>>()
                                       : std::vector<int>{j["n"].get<int>()};
  if (j.contains("missing_prop"))
    c.missing_props = j["missing_prop"].is_array()
                          ? j["missing_prop"].get<std::vector<double>>()
                          : std::vector<double>{j["missing_prop"].get<double>()};
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j["modes"]) c.modes.push_back(parse_control_mode(m.get<std::string>()));
  } else if (j.contains("mode")) {
    c.modes = {parse_control_mode(j["mode"].get<std::string>())};
  }
  c.replicates = j.value("replicates", c.replicates);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.test_n = j.value("test_n", c.test_n);
  c.folds = j.value("folds", c.folds);
  c.budget = j.value("budget", c.budget);
  c.imputations = j.value("imputations", c.imputations);
  c.mice_iterations = j.value("mice_iterations", c.mice_iterations);
  c.donors = j.value("donors", c.donors);
  c.alpha = j.value("alpha", c.alpha);
  c.k = j.value("k", c.k);
  c.q = j.value("q", c.q);
  c.f = j.value("f", c.f);
  if (j.contains("learners"))
    for (const auto& l : j["learners"]) c.stack.candidates.push_back(parse_learner(l));
  c.stack.inner_folds = j.value("inner_folds", c.stack.inner_folds);
  return c;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_selected(const std::vector<int>& selected) {
  std::string out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(selected[i] + 1);
  }
  return out;
}

std::string row_prefix(int scenario, int p, int n, double missing_prop, ControlMode mode) {
  return std::to_string(scenario) + "," + std::to_string(p) + "," + std::to_string(n) + "," +
         format_double(missing_prop) + "," + control_mode_name(mode);
}

// one data draw and one attribution estimate feed every control mode, so the
// modes are compared on identical replicates
std::vector<ReplicateRow> run_replicate(const ScenarioSpec& spec, int n,
                                        const ExperimentConfig& config,
                                        const StackConfig& stack, int rep,
                                        std::uint64_t cfg_seed) {
  const std::uint64_t data_seed = sub_seed(cfg_seed, 0xd0, rep);
  const std::uint64_t pipe_seed = sub_seed(cfg_seed, 0xe5, rep);
  const std::uint64_t eval_seed = sub_seed(cfg_seed, 0xef, rep);

  const GeneratedData gen = gen_scenario(spec, n, data_seed);

  SpvimConfig sp;
  sp.measure = Measure::auc;
  sp.stack = stack;
  sp.folds = config.folds;
  sp.budget = config.budget;

  std::vector<Dataset> completed;
  if (gen.data.complete())
    completed.push_back(gen.data);
  else
    completed = mice_impute(gen.data, config.imputations, config.mice_iterations,
                            config.donors, sub_seed(pipe_seed, 0x1));

  const PooledEstimate pooled = pooled_spvim(completed, sp, sub_seed(pipe_seed, 0x2));
  TestResults tests = test_statistics(pooled);
  tests.p_adjusted = holm_adjust(tests.p_values);
  const std::vector<int> initial = initial_set(tests.p_adjusted, config.alpha);

  const auto [k_auto, q_auto] =
      choose_k_q(n, spec.p, static_cast<int>(gen.truth.size()), target_specificity(spec.p));

  std::vector<ReplicateRow> rows;
  rows.reserve(config.modes.size());
  for (ControlMode mode : config.modes) {
    ErrorControl control;
    control.mode = mode;
    control.k = config.k >= 0 ? config.k : k_auto;
    control.q = config.q > 0.0 ? config.q : q_auto;
    control.f = config.f;

    SelectionResult res = augment_clamped(tests.p_adjusted, initial, control, config.alpha);
    res.tests = tests;
    res.pooled = pooled;

    const ReplicateMetrics metrics =
        evaluate(res, gen.truth, spec, config.test_n, stack, completed, eval_seed);

    ReplicateRow row;
    row.scenario = spec.id;
    row.p = spec.p;
    row.n = n;
    row.missing_prop = spec.missing_prop;
    row.mode = mode;
    row.replicate = rep;
    row.selected = res.final_set;
    row.initial_size = static_cast<int>(res.initial_set.size());
    row.k_used = res.k_used;
    row.test_auc = metrics.test_auc;
    row.sensitivity = metrics.sensitivity;
    row.specificity = metrics.specificity;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.scenarios.empty() || config.sample_sizes.empty() || config.missing_props.empty() ||
      config.modes.empty())
    throw std::invalid_argument("run_experiment: empty configuration axis");
  if (config.replicates < 0)
    throw std::invalid_argument("run_experiment: negative replicate count");

  std::filesystem::create_directories(config.output_dir);
  const auto out_path = [&](const char* name) {
    return (std::filesystem::path(config.output_dir) / name).string();
  };
  std::ofstream rep_out(out_path("replicates.csv"));
  std::ofstream agg_out(out_path("aggregate.csv"));
  std::ofstream prob_out(out_path("selection_probs.csv"));
  if (!rep_out || !agg_out || !prob_out)
    throw std::runtime_error("run_experiment: cannot write under " + config.output_dir);
  rep_out << "scenario,p,n,missing_prop,mode,replicate,n_initial,k_used,n_selected,"
             "selected,test_auc,sensitivity,specificity\n";
  agg_out << "scenario,p,n,missing_prop,mode,replicates,mean_test_auc,se_test_auc,"
             "mean_sensitivity,se_sensitivity,mean_specificity,se_specificity\n";
  prob_out << "scenario,p,n,missing_prop,mode,feature,selection_prob\n";
  rep_out.flush();
  agg_out.flush();
  prob_out.flush();

  ExperimentResult result;
  for (int scenario : config.scenarios) {
    const int use_p = (scenario == 2 || scenario >= 6) ? 6 : config.p;
    for (int n : config.sample_sizes) {
      for (double miss : config.missing_props) {
        const ScenarioSpec spec = scenario_spec(scenario, use_p, miss);
        const StackConfig stack = config.stack.candidates.empty()
                                      ? default_internal_stack(scenario)
                                      : config.stack;
        std::uint64_t cfg_seed = sub_seed(config.seed, 0x5c, scenario);
        cfg_seed = sub_seed(cfg_seed, 0x41, n);
        cfg_seed = sub_seed(cfg_seed, 0x4d, std::llround(miss * 1000.0));

        std::vector<std::vector<ReplicateRow>> by_mode(config.modes.size());
        const std::size_t total = static_cast<std::size_t>(config.replicates);
        const std::size_t chunk = std::max<std::size_t>(1, max_threads());
        for (std::size_t start = 0; start < total; start += chunk) {
          const std::size_t count = std::min(chunk, total - start);
          std::vector<std::vector<ReplicateRow>> batch(count);
          parallel_for(count, [&](std::size_t i) {
            batch[i] =
                run_replicate(spec, n, config, stack, static_cast<int>(start + i), cfg_seed);
          });
          for (auto& rep_rows : batch) {
            for (std::size_t mi = 0; mi < rep_rows.size(); ++mi) {
              auto& row = rep_rows[mi];
              rep_out << row_prefix(row.scenario, row.p, row.n, row.missing_prop, row.mode)
                      << ',' << row.replicate << ',' << row.initial_size << ',' << row.k_used
                      << ',' << row.selected.size() << ',' << join_selected(row.selected)
                      << ',' << format_double(row.test_auc) << ','
                      << format_double(row.sensitivity) << ','
                      << format_double(row.specificity) << '\n';
              by_mode[mi].push_back(row);
              result.replicate_rows.push_back(std::move(row));
            }
            rep_out.flush();
          }
        }

        if (config.replicates > 0) {
          for (std::size_t mi = 0; mi < config.modes.size(); ++mi) {
            const auto& rows = by_mode[mi];
            AggregateRow agg;
            agg.scenario = scenario;
            agg.p = use_p;
            agg.n = n;
            agg.missing_prop = miss;
            agg.mode = config.modes[mi];
            agg.replicates = config.replicates;
            const double r = static_cast<double>(config.replicates);
            double sa = 0.0, ss = 0.0, sp2 = 0.0;
            for (const auto& row : rows) {
              sa += row.test_auc;
              ss += row.sensitivity;
              sp2 += row.specificity;
            }
            agg.mean_test_auc = sa / r;
            agg.mean_sensitivity = ss / r;
            agg.mean_specificity = sp2 / r;
            double va = 0.0, vs = 0.0, vp = 0.0;
            for (const auto& row : rows) {
              va += (row.test_auc - agg.mean_test_auc) * (row.test_auc - agg.mean_test_auc);
              vs += (row.sensitivity - agg.mean_sensitivity) *
                    (row.sensitivity - agg.mean_sensitivity);
              vp += (row.specificity - agg.mean_specificity) *
                    (row.specificity - agg.mean_specificity);
            }
            if (config.replicates > 1) {
              agg.se_test_auc = std::sqrt(va / (r - 1.0) / r);
              agg.se_sensitivity = std::sqrt(vs / (r - 1.0) / r);
              agg.se_specificity = std::sqrt(vp / (r - 1.0) / r);
            }
            agg.selection_probs.assign(static_cast<std::size_t>(use_p), 0.0);
            for (const auto& row : rows)
              for (int j : row.selected) agg.selection_probs[static_cast<std::size_t>(j)] += 1.0;
            for (auto& v : agg.selection_probs) v /= r;

            agg_out << row_prefix(scenario, use_p, n, miss, agg.mode) << ','
                    << config.replicates << ',' << format_double(agg.mean_test_auc) << ','
                    << format_double(agg.se_test_auc) << ','
                    << format_double(agg.mean_sensitivity) << ','
                    << format_double(agg.se_sensitivity) << ','
                    << format_double(agg.mean_specificity) << ','
                    << format_double(agg.se_specificity) << '\n';
            agg_out.flush();
            for (int j = 0; j < use_p; ++j)
              prob_out << row_prefix(scenario, use_p, n, miss, agg.mode) << ',' << (j + 1)
                       << ',' << format_double(agg.selection_probs[static_cast<std::size_t>(j)])
                       << '\n';
            prob_out.flush();

            result.aggregates.push_back(std::move(agg));
          }
        }
      }
    }
  }
  return result;
}

}  // namespace flevr
