#include "flevr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flevr {

bool Dataset::complete() const {
  for (Eigen::Index i = 0; i < obs.rows(); ++i)
    for (Eigen::Index j = 0; j < obs.cols(); ++j)
      if (obs(i, j) == 0) return false;
  return true;
}

bool Dataset::binary_outcome() const {
  bool saw0 = false, saw1 = false;
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (!outcome_observed(i)) continue;
    if (outcome[i] == 0.0) saw0 = true;
    else if (outcome[i] == 1.0) saw1 = true;
    else return false;
  }
  return saw0 && saw1;
}

void Dataset::validate() const {
  if (features.rows() != outcome.size())
    throw std::invalid_argument("dataset: feature rows and outcome length differ");
  if (obs.rows() != features.rows() || obs.cols() != features.cols() + 1)
    throw std::invalid_argument("dataset: observation mask has wrong shape");
  if (static_cast<Eigen::Index>(feature_names.size()) != features.cols())
    throw std::invalid_argument("dataset: feature name count mismatch");
}

Dataset make_dataset(Eigen::MatrixXd features, Eigen::VectorXd outcome) {
  Dataset d;
  d.features = std::move(features);
  d.outcome = std::move(outcome);
  if (d.features.rows() != d.outcome.size())
    throw std::invalid_argument("make_dataset: feature rows and outcome length differ");
  d.obs.setOnes(d.features.rows(), d.features.cols() + 1);
  d.feature_names.resize(static_cast<std::size_t>(d.features.cols()));
  for (Eigen::Index j = 0; j < d.features.cols(); ++j)
    d.feature_names[static_cast<std::size_t>(j)] = "x" + std::to_string(j + 1);
  d.outcome_name = "y";
  return d;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& token, std::size_t row, const std::string& col) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw std::invalid_argument("csv: cannot parse '" + token + "' at data row " +
                                std::to_string(row) + ", column '" + col + "'");
  if (!std::isfinite(value))
    throw std::invalid_argument("csv: non-finite value at data row " +
                                std::to_string(row) + ", column '" + col + "'");
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& outcome_column,
                 const std::string& na_token) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  std::ptrdiff_t outcome_idx = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == outcome_column) outcome_idx = static_cast<std::ptrdiff_t>(j);
  if (outcome_idx < 0) {
    std::string cols;
    for (std::size_t j = 0; j < header.size(); ++j)
      cols += (j ? ", " : "") + header[j];
    throw std::invalid_argument("csv: outcome column '" + outcome_column +
                                "' not found; columns are: " + cols);
  }

  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint8_t>> observed;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    ++row;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("csv: data row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
    std::vector<double> v(fields.size());
    std::vector<std::uint8_t> o(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (fields[j] == na_token) {
        v[j] = 0.0;
        o[j] = 0;
      } else {
        v[j] = parse_number(fields[j], row, header[j]);
        o[j] = 1;
      }
    }
    values.push_back(std::move(v));
    observed.push_back(std::move(o));
  }
  if (values.empty()) throw std::invalid_argument("csv: '" + path + "' has no data rows");

  const Eigen::Index n = static_cast<Eigen::Index>(values.size());
  const Eigen::Index p = static_cast<Eigen::Index>(header.size()) - 1;
  Dataset d;
  d.features.resize(n, p);
  d.outcome.resize(n);
  d.obs.resize(n, p + 1);
  d.outcome_name = outcome_column;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (static_cast<std::ptrdiff_t>(j) != outcome_idx) d.feature_names.push_back(header[j]);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index fj = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == outcome_idx) {
        d.outcome[i] = values[static_cast<std::size_t>(i)][j];
        d.obs(i, 0) = observed[static_cast<std::size_t>(i)][j];
      } else {
        d.features(i, fj) = values[static_cast<std::size_t>(i)][j];
        d.obs(i, fj + 1) = observed[static_cast<std::size_t>(i)][j];
        ++fj;
      }
    }
  }
  d.validate();
  return d;
}

void write_csv(const Dataset& data, const std::string& path, const std::string& na_token) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot write '" + path + "'");
  out << data.outcome_name;
  for (const auto& name : data.feature_names) out << ',' << name;
  out << '\n';
  char buf[64];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf;
  };
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.outcome_observed(i)) put(data.outcome[i]);
    else out << na_token;
    for (Eigen::Index j = 0; j < data.p(); ++j) {
      out << ',';
      if (data.feature_observed(i, j)) put(data.features(i, j));
      else out << na_token;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("csv: write to '" + path + "' failed");
}

std::vector<int> FoldAssignment::rows_in_fold(int fold) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < folds.size(); ++i)
    if (folds[i] == fold) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<int> FoldAssignment::rows_not_in_fold(int fold) const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < folds.size(); ++i)
    if (folds[i] != fold) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<int> fold_labels(const std::vector<double>& outcome, int num_folds,
                             std::uint64_t seed) {
  const std::size_t n = outcome.size();
  if (num_folds < 2) throw std::invalid_argument("fold_labels: need at least 2 folds");
  if (static_cast<std::size_t>(num_folds) * 2 > n)
    throw std::invalid_argument("fold_labels: need at least 2 rows per fold");

  bool saw0 = false, saw1 = false, binary = true;
  for (double y : outcome) {
    if (y == 0.0) saw0 = true;
    else if (y == 1.0) saw1 = true;
    else { binary = false; break; }
  }
  binary = binary && saw0 && saw1;

  Rng rng(sub_seed(seed, 0xf01d5));
  std::vector<int> dealt;
  dealt.reserve(n);
  if (binary) {
    std::vector<int> neg, pos;
    for (std::size_t i = 0; i < n; ++i)
      (outcome[i] == 1.0 ? pos : neg).push_back(static_cast<int>(i));
    if (static_cast<int>(neg.size()) < num_folds || static_cast<int>(pos.size()) < num_folds)
      throw std::invalid_argument("fold_labels: a class has fewer members than folds");
    std::shuffle(neg.begin(), neg.end(), rng);
    std::shuffle(pos.begin(), pos.end(), rng);
    dealt.insert(dealt.end(), neg.begin(), neg.end());
    dealt.insert(dealt.end(), pos.begin(), pos.end());
  } else {
    dealt.resize(n);
    std::iota(dealt.begin(), dealt.end(), 0);
    std::shuffle(dealt.begin(), dealt.end(), rng);
  }

  // dealing the concatenated (class-blocked) list round-robin keeps overall and
  // per-class fold sizes within one of each other
  std::vector<int> labels(n, 0);
  for (std::size_t t = 0; t < dealt.size(); ++t)
    labels[static_cast<std::size_t>(dealt[t])] = static_cast<int>(t % num_folds) + 1;
  return labels;
}

FoldAssignment make_folds(const Dataset& data, int num_folds, std::uint64_t seed) {
  data.validate();
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (!data.outcome_observed(i))
      throw std::invalid_argument("make_folds: outcome has missing entries");
  std::vector<double> y(data.outcome.data(), data.outcome.data() + data.outcome.size());
  FoldAssignment fa;
  fa.num_folds = num_folds;
  try {
    fa.folds = fold_labels(y, num_folds, seed);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("make_folds: ") + e.what());
  }
  return fa;
}

}  // namespace flevr
