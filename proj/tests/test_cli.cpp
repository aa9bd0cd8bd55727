#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "flevr/data.hpp"
#include "flevr/selection.hpp"

using namespace flevr;
namespace fs = std::filesystem;

namespace {

const fs::path scratch = fs::temp_directory_path() / "flevr_cli_test";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// runs a shell command with the cli path substituted for {cli}, capturing
// stdout/stderr under the scratch directory; returns the exit code
int run(std::string cmd, std::string* out = nullptr, std::string* err = nullptr) {
  const std::string placeholder = "{cli}";
  for (std::size_t at = cmd.find(placeholder); at != std::string::npos;
       at = cmd.find(placeholder))
    cmd.replace(at, placeholder.size(), FLEVR_CLI_PATH);
  const fs::path out_path = scratch / "cmd_stdout.txt";
  const fs::path err_path = scratch / "cmd_stderr.txt";
  cmd += " > " + out_path.string() + " 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  if (out) *out = slurp(out_path);
  if (err) *err = slurp(err_path);
  return WEXITSTATUS(status);
}

Dataset fixture(int n, std::uint64_t seed, bool with_missing) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = normal(rng);
    y(i) = unif(rng) < normal_cdf(1.5 * x(i, 0)) ? 1.0 : 0.0;
  }
  Dataset data = make_dataset(std::move(x), std::move(y));
  data.feature_names = {"a", "b", "c"};
  data.outcome_name = "y";
  if (with_missing)
    for (int i = 1; i < n; i += 4) data.obs(i, 2) = 0;
  return data;
}

struct ScratchSetup {
  ScratchSetup() {
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    write_csv(fixture(80, 11u, false), (scratch / "d.csv").string());
    write_csv(fixture(80, 11u, true), (scratch / "dm.csv").string());
  }
};

const ScratchSetup setup_once;

const std::string select_args =
    " --outcome y --alpha 0.05 --mode gfwer --k 2 --learner ridge_logistic --folds 2";

}  // namespace

TEST_CASE("help exits zero with usage text") {
  std::string out;
  CHECK(run("{cli} --help", &out) == 0);
  CHECK(out.find("Usage") != std::string::npos);
  CHECK(run("{cli} select --help", &out) == 0);
  CHECK(out.find("--outcome") != std::string::npos);
}

TEST_CASE("select writes a json result and prints the final set") {
  const fs::path out_json = scratch / "sel.json";
  std::string out;
  const int code = run("{cli} select --input " + (scratch / "d.csv").string() + select_args +
                           " --seed 7 --output " + out_json.string(),
                       &out);
  CHECK(code == 0);
  CHECK(out.find("final set:") != std::string::npos);
  CHECK(out.find("adjusted p-values:") != std::string::npos);

  const std::string body = slurp(out_json);
  CHECK(body.find("\"alpha\": 0.05") != std::string::npos);
  CHECK(body.find("\"mode\": \"gfwer\"") != std::string::npos);
  CHECK(body.find("\"k_used\": 2") != std::string::npos);
  CHECK(body.find("\"final_set\"") != std::string::npos);
  CHECK(body.find("\"psi_bar\"") != std::string::npos);
  // feature indices in the output are 1-based: with p = 3 and k = 2 the final
  // set is everything, so index 3 must appear and index 0 must not
  CHECK(body.find("\"final_set\": [\n    1,\n    2,\n    3\n  ]") != std::string::npos);
}

TEST_CASE("select reruns are byte-identical for the same seed and differ otherwise") {
  const std::string base = "{cli} select --input " + (scratch / "d.csv").string() + select_args;
  CHECK(run(base + " --seed 7 --output " + (scratch / "a.json").string()) == 0);
  CHECK(run(base + " --seed 7 --output " + (scratch / "b.json").string()) == 0);
  CHECK(run(base + " --seed 8 --output " + (scratch / "c.json").string()) == 0);
  CHECK(slurp(scratch / "a.json") == slurp(scratch / "b.json"));
  CHECK(slurp(scratch / "a.json") != slurp(scratch / "c.json"));
}

TEST_CASE("seed falls back to the environment variable") {
  const std::string base = "select --input " + (scratch / "d.csv").string() + select_args;
  CHECK(run("FLEVR_SEED=7 {cli} " + base + " --output " + (scratch / "env.json").string()) == 0);
  CHECK(run("{cli} " + base + " --seed 7 --output " + (scratch / "flag.json").string()) == 0);
  CHECK(slurp(scratch / "env.json") == slurp(scratch / "flag.json"));
  CHECK(run("FLEVR_SEED=abc {cli} " + base) == 2);
}

TEST_CASE("results do not depend on the thread cap") {
  const std::string base = "{cli} select --input " + (scratch / "d.csv").string() + select_args +
                           " --seed 7";
  CHECK(run(base + " --threads 1 --output " + (scratch / "t1.json").string()) == 0);
  CHECK(run(base + " --threads 3 --output " + (scratch / "t3.json").string()) == 0);
  CHECK(slurp(scratch / "t1.json") == slurp(scratch / "t3.json"));
}

TEST_CASE("config errors exit 2 and runtime errors exit 1") {
  std::string err;
  CHECK(run("{cli} select --input " + (scratch / "d.csv").string() +
            " --alpha 0.05 --seed 7") == 2);  // missing --outcome
  CHECK(run("{cli} select --input " + (scratch / "d.csv").string() + select_args +
            " --mode nope") == 2);
  CHECK(run("{cli} select --input " + (scratch / "no_such.csv").string() + select_args,
            nullptr, &err) == 2);
  CHECK(err.find("no_such.csv") != std::string::npos);
  CHECK(run("{cli}") == 2);  // subcommand required
  // unwritable output path surfaces as a runtime failure
  CHECK(run("{cli} select --input " + (scratch / "d.csv").string() + select_args +
            " --seed 7 --output " + (scratch / "missing_dir" / "o.json").string()) == 1);
}

TEST_CASE("spvim subcommand reports attributions") {
  const fs::path out_json = scratch / "sp.json";
  std::string out;
  const int code = run("{cli} spvim --input " + (scratch / "d.csv").string() +
                           " --outcome y --learner ridge_logistic --folds 2 --seed 3 --output " +
                           out_json.string(),
                       &out);
  CHECK(code == 0);
  CHECK(out.find("a: psi") != std::string::npos);
  const std::string body = slurp(out_json);
  CHECK(body.find("\"psi\"") != std::string::npos);
  CHECK(body.find("\"v_full\"") != std::string::npos);
  CHECK(body.find("\"exhaustive\": true") != std::string::npos);
}

TEST_CASE("impute writes complete csvs plus a manifest") {
  const fs::path dir = scratch / "imp";
  CHECK(run("{cli} impute --input " + (scratch / "dm.csv").string() +
            " --outcome y --imputations 3 --iterations 2 --seed 9 --output " + dir.string()) ==
        0);
  const std::string manifest = slurp(dir / "manifest.json");
  CHECK(manifest.find("\"imputations\": 3") != std::string::npos);
  CHECK(manifest.find("\"seed\": 9") != std::string::npos);
  CHECK(manifest.find("imputed_3.csv") != std::string::npos);
  for (int m = 1; m <= 3; ++m) {
    const Dataset filled =
        load_csv((dir / ("imputed_" + std::to_string(m) + ".csv")).string(), "y");
    CHECK(filled.complete());
    CHECK(filled.n() == 80);
    CHECK(filled.p() == 3);
  }
  // reruns reproduce every byte
  CHECK(run("{cli} impute --input " + (scratch / "dm.csv").string() +
            " --outcome y --imputations 3 --iterations 2 --seed 9 --output " +
            (scratch / "imp2").string()) == 0);
  CHECK(slurp(dir / "imputed_2.csv") == slurp(scratch / "imp2" / "imputed_2.csv"));
}

TEST_CASE("simulate runs a config file and rejects bad ones") {
  const fs::path cfg = scratch / "sim.json";
  std::ofstream(cfg) << R"({"scenario": 1, "p": 10, "n": 150, "replicates": 2, "seed": 31,
                           "test_n": 1000, "folds": 2,
                           "learners": [{"kind": "ridge_logistic"}],
                           "output_dir": ")" +
                            (scratch / "simout").string() + R"("})";
  std::string out;
  CHECK(run("{cli} simulate --config " + cfg.string(), &out) == 0);
  CHECK(out.find("scenario 1") != std::string::npos);
  const std::string rows = slurp(scratch / "simout" / "replicates.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 3);  // header + 2 replicates

  const fs::path bad = scratch / "bad.json";
  std::ofstream(bad) << R"({"scenario": 99, "n": 150, "replicates": 1})";
  CHECK(run("{cli} simulate --config " + bad.string()) == 2);
  CHECK(run("{cli} simulate --config " + (scratch / "absent.json").string()) == 1);

  // --output overrides the config destination
  CHECK(run("{cli} simulate --config " + cfg.string() + " --output " +
            (scratch / "simout_b").string()) == 0);
  CHECK(slurp(scratch / "simout" / "replicates.csv") ==
        slurp(scratch / "simout_b" / "replicates.csv"));
}
