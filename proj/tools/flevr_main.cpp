#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flevr/missingness.hpp"
#include "flevr/selection.hpp"
#include "flevr/simharness.hpp"
#include "flevr/spvim.hpp"

namespace {

using nlohmann::ordered_json;

flevr::LearnerSpec learner_from_name(const std::string& name) {
  flevr::LearnerSpec spec;
  if (name == "ridge_logistic")
    spec.kind = flevr::LearnerKind::ridge_logistic;
  else if (name == "ridge_linear")
    spec.kind = flevr::LearnerKind::ridge_linear;
  else if (name == "knn")
    spec.kind = flevr::LearnerKind::knn;
  else if (name == "boosted_stumps")
    spec.kind = flevr::LearnerKind::boosted_stumps;
  else
    throw std::invalid_argument("unknown learner kind: " + name);
  return spec;
}

flevr::StackConfig make_stack(const std::vector<std::string>& names, int inner_folds) {
  flevr::StackConfig stack;
  for (const auto& name : names) stack.candidates.push_back(learner_from_name(name));
  if (stack.candidates.empty()) {
    stack.candidates.push_back(learner_from_name("boosted_stumps"));
    stack.candidates.push_back(learner_from_name("ridge_logistic"));
  }
  stack.inner_folds = inner_folds;
  return stack;
}

flevr::Measure parse_measure(const std::string& name) {
  if (name == "auc") return flevr::Measure::auc;
  if (name == "r_squared") return flevr::Measure::r_squared;
  throw std::invalid_argument("unknown measure: " + name);
}

ordered_json one_based(const std::vector<int>& idx) {
  ordered_json arr = ordered_json::array();
  for (int j : idx) arr.push_back(j + 1);
  return arr;
}

ordered_json pooled_to_json(const flevr::PooledEstimate& pooled) {
  ordered_json j;
  j["imputations"] = pooled.M;
  j["psi_bar"] = pooled.psi_bar;
  j["within_var"] = pooled.within_var;
  j["between_var"] = pooled.between_var;
  j["total_var"] = pooled.total_var;
  return j;
}

void write_json_file(const ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

// flags shared by every subcommand; seed falls back to FLEVR_SEED, then 1
struct CommonFlags {
  std::uint64_t seed = 1;
  CLI::Option* seed_opt = nullptr;
  int threads = 0;

  void attach(CLI::App* cmd) {
    seed_opt = cmd->add_option("--seed", seed, "rng seed (default: FLEVR_SEED env, then 1)");
    cmd->add_option("--threads", threads, "worker thread cap (default: available cores)")
        ->check(CLI::PositiveNumber);
  }

  std::uint64_t resolve_seed() const {
    if (seed_opt->count() > 0) return seed;
    const char* env = std::getenv("FLEVR_SEED");
    if (env == nullptr || *env == '\0') return 1;
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw std::invalid_argument(std::string("FLEVR_SEED is not an integer: ") + env);
    return parsed;
  }

  void apply_threads() const {
    if (threads > 0) flevr::set_max_threads(threads);
  }
};

struct SelectFlags {
  std::string input, outcome;
  std::string output = "selection.json";
  double alpha = 0.05;
  std::string mode = "gfwer";
  int k = 0;
  double q = 0.5;
  double f = 0.2;
  std::string measure = "auc";
  int folds = 5;
  std::int64_t budget = 0;
  int imputations = flevr::default_imputations;
  int mice_iterations = flevr::default_mice_iterations;
  int donors = flevr::default_donors;
  std::vector<std::string> learners;
  int inner_folds = 5;
  CommonFlags common;
};

void attach_estimation_flags(CLI::App* cmd, SelectFlags& fl) {
  cmd->add_option("--input", fl.input, "input csv")->required();
  cmd->add_option("--outcome", fl.outcome, "outcome column name")->required();
  cmd->add_option("--measure", fl.measure, "predictiveness measure: auc or r_squared");
  cmd->add_option("--folds", fl.folds, "cross-fitting folds")->check(CLI::PositiveNumber);
  cmd->add_option("--budget", fl.budget, "subset evaluation budget (0 = default for p)");
  cmd->add_option("--learner", fl.learners,
                  "stack candidate (repeatable): ridge_logistic, ridge_linear, knn, "
                  "boosted_stumps; default: boosted_stumps + ridge_logistic");
  cmd->add_option("--inner-folds", fl.inner_folds, "inner folds for stack weights")
      ->check(CLI::PositiveNumber);
  fl.common.attach(cmd);
}

int cmd_select(const SelectFlags& fl) {
  fl.common.apply_threads();
  const std::uint64_t seed = fl.common.resolve_seed();
  flevr::SelectionConfig config;
  config.measure = parse_measure(fl.measure);
  config.stack = make_stack(fl.learners, fl.inner_folds);
  config.folds = fl.folds;
  config.budget = fl.budget;
  config.imputations = fl.imputations;
  config.mice_iterations = fl.mice_iterations;
  config.donors = fl.donors;
  config.alpha = fl.alpha;
  config.control.mode = flevr::parse_control_mode(fl.mode);
  config.control.k = fl.k;
  config.control.q = fl.q;
  config.control.f = fl.f;

  const flevr::Dataset data = flevr::load_csv(fl.input, fl.outcome);
  const flevr::SelectionResult result = flevr::select(data, config, seed);

  ordered_json j;
  j["seed"] = seed;
  j["alpha"] = result.alpha;
  j["mode"] = flevr::control_mode_name(result.mode);
  j["k_used"] = result.k_used;
  j["q_used"] = result.q_used;  // null unless pfp or fdr
  j["features"] = data.feature_names;
  j["initial_set"] = one_based(result.initial_set);
  j["augmentation_set"] = one_based(result.augmentation_set);
  j["final_set"] = one_based(result.final_set);
  j["t_stats"] = result.tests.t_stats;
  j["p_values"] = result.tests.p_values;
  j["p_adjusted"] = result.tests.p_adjusted;
  ordered_json degen = ordered_json::array();
  for (char d : result.tests.degenerate) degen.push_back(d != 0);
  j["degenerate"] = degen;
  j["pooled"] = pooled_to_json(result.pooled);
  write_json_file(j, fl.output);

  std::printf("final set:");
  for (int idx : result.final_set) std::printf(" %d", idx + 1);
  std::printf("\nadjusted p-values:");
  for (double v : result.tests.p_adjusted) std::printf(" %.6g", v);
  std::printf("\nwrote %s\n", fl.output.c_str());
  return 0;
}

int cmd_spvim(const SelectFlags& fl) {
  fl.common.apply_threads();
  const std::uint64_t seed = fl.common.resolve_seed();
  flevr::SpvimConfig config;
  config.measure = parse_measure(fl.measure);
  config.stack = make_stack(fl.learners, fl.inner_folds);
  config.folds = fl.folds;
  config.budget = fl.budget;

  const flevr::Dataset data = flevr::load_csv(fl.input, fl.outcome);
  const flevr::SpvimEstimate estimate = flevr::estimate_spvim(data, config, seed);

  ordered_json j;
  j["seed"] = seed;
  j["measure"] = fl.measure;
  j["features"] = data.feature_names;
  j["psi"] = estimate.psi;
  j["variances"] = estimate.variances;
  j["eif_variances"] = estimate.eif_variances;
  j["v_null"] = estimate.v_null;
  j["v_full"] = estimate.v_full;
  j["exhaustive"] = estimate.sample.exhaustive;
  j["budget"] = estimate.sample.budget;
  j["distinct_subsets"] = estimate.sample.subsets.size();
  write_json_file(j, fl.output);

  for (std::size_t i = 0; i < estimate.psi.size(); ++i)
    std::printf("%s: psi = %.6g (se %.6g)\n", data.feature_names[i].c_str(), estimate.psi[i],
                std::sqrt(estimate.variances[i]));
  std::printf("wrote %s\n", fl.output.c_str());
  return 0;
}

struct ImputeFlags {
  std::string input, outcome;
  std::string output = "imputed";
  int imputations = flevr::default_imputations;
  int iterations = flevr::default_mice_iterations;
  int donors = flevr::default_donors;
  CommonFlags common;
};

int cmd_impute(const ImputeFlags& fl) {
  fl.common.apply_threads();
  const std::uint64_t seed = fl.common.resolve_seed();
  const flevr::Dataset data = flevr::load_csv(fl.input, fl.outcome);
  const std::vector<flevr::Dataset> completed =
      flevr::mice_impute(data, fl.imputations, fl.iterations, fl.donors, seed);

  std::filesystem::create_directories(fl.output);
  ordered_json files = ordered_json::array();
  for (std::size_t m = 0; m < completed.size(); ++m) {
    const std::string name = "imputed_" + std::to_string(m + 1) + ".csv";
    flevr::write_csv(completed[m], (std::filesystem::path(fl.output) / name).string());
    files.push_back(name);
  }
  ordered_json manifest;
  manifest["outcome"] = fl.outcome;
  manifest["imputations"] = fl.imputations;
  manifest["iterations"] = fl.iterations;
  manifest["donors"] = fl.donors;
  manifest["seed"] = seed;
  manifest["files"] = files;
  write_json_file(manifest, (std::filesystem::path(fl.output) / "manifest.json").string());

  std::printf("wrote %d imputed datasets to %s\n", fl.imputations, fl.output.c_str());
  return 0;
}

struct SimulateFlags {
  std::string config_path;
  std::string output;
  CommonFlags common;
};

int cmd_simulate(const SimulateFlags& fl) {
  fl.common.apply_threads();
  flevr::ExperimentConfig config = flevr::load_experiment_config(fl.config_path);
  if (!fl.output.empty()) config.output_dir = fl.output;
  if (fl.common.seed_opt->count() > 0) config.seed = fl.common.seed;
  const flevr::ExperimentResult result = flevr::run_experiment(config);

  for (const auto& agg : result.aggregates)
    std::printf("scenario %d p=%d n=%d miss=%.2f %s: auc %.4f sens %.4f spec %.4f\n",
                agg.scenario, agg.p, agg.n, agg.missing_prop,
                flevr::control_mode_name(agg.mode), agg.mean_test_auc, agg.mean_sensitivity,
                agg.mean_specificity);
  std::printf("wrote %zu replicate rows to %s\n", result.replicate_rows.size(),
              config.output_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intrinsic variable selection with error rate control"};
  app.require_subcommand(1);

  SelectFlags select_fl;
  CLI::App* select_cmd = app.add_subcommand("select", "run the full selection pipeline");
  attach_estimation_flags(select_cmd, select_fl);
  select_cmd->add_option("--output", select_fl.output, "result json path");
  select_cmd->add_option("--alpha", select_fl.alpha, "initial-set level")
      ->check(CLI::Range(0.0, 1.0));
  select_cmd->add_option("--mode", select_fl.mode, "error control: gfwer, pfp or fdr");
  select_cmd->add_option("--k", select_fl.k, "gfwer: augmentation size");
  select_cmd->add_option("--q", select_fl.q, "pfp: false selection proportion bound");
  select_cmd->add_option("--f", select_fl.f, "fdr: expected false proportion bound");
  select_cmd->add_option("--imputations", select_fl.imputations, "imputed datasets (M)")
      ->check(CLI::PositiveNumber);
  select_cmd->add_option("--mice-iterations", select_fl.mice_iterations, "chained sweeps")
      ->check(CLI::PositiveNumber);
  select_cmd->add_option("--donors", select_fl.donors, "matching donors per cell")
      ->check(CLI::PositiveNumber);

  SelectFlags spvim_fl;
  spvim_fl.output = "spvim.json";
  CLI::App* spvim_cmd = app.add_subcommand("spvim", "estimate attributions only");
  attach_estimation_flags(spvim_cmd, spvim_fl);
  spvim_cmd->add_option("--output", spvim_fl.output, "result json path");

  ImputeFlags impute_fl;
  CLI::App* impute_cmd = app.add_subcommand("impute", "fill missing cells by chained equations");
  impute_cmd->add_option("--input", impute_fl.input, "input csv")->required();
  impute_cmd->add_option("--outcome", impute_fl.outcome, "outcome column name")->required();
  impute_cmd->add_option("--output", impute_fl.output, "output directory");
  impute_cmd->add_option("--imputations", impute_fl.imputations, "imputed datasets (M)")
      ->check(CLI::PositiveNumber);
  impute_cmd->add_option("--iterations", impute_fl.iterations, "chained sweeps")
      ->check(CLI::PositiveNumber);
  impute_cmd->add_option("--donors", impute_fl.donors, "matching donors per cell")
      ->check(CLI::PositiveNumber);
  impute_fl.common.attach(impute_cmd);

  SimulateFlags sim_fl;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "run a benchmark experiment grid");
  sim_cmd->add_option("--config", sim_fl.config_path, "experiment config json")->required();
  sim_cmd->add_option("--output", sim_fl.output, "output directory (overrides config)");
  sim_fl.common.attach(sim_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    if (select_cmd->parsed()) return cmd_select(select_fl);
    if (spvim_cmd->parsed()) return cmd_spvim(spvim_fl);
    if (impute_cmd->parsed()) return cmd_impute(impute_fl);
    return cmd_simulate(sim_fl);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
