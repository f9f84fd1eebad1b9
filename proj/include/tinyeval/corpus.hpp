/*
 * Copyright 2026 The tinyeval Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Benchmark data model: correctness matrices, scenario structure, balance
// weights, train/test splits and score binarization.

#ifndef TINYEVAL_CORPUS_HPP_
#define TINYEVAL_CORPUS_HPP_

#include <Eigen/Dense>
#include <charconv>
#include <chrono>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>

#include "tinyeval/common.hpp"

namespace tinyeval {

// ---------------------------------------------------------------------------
// CSV

namespace csv {

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

/// Reads all non-empty records; strips a UTF-8 BOM and trailing CR.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) rows.push_back(split_record(line));
    pos = end + 1;
  }
  return rows;
}

inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace csv

inline std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

/// Parses an ISO-8601 calendar date (YYYY-MM-DD) into days since 1970-01-01.
inline std::optional<int> parse_iso_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto num = [&](std::size_t at, std::size_t len, auto& out) {
    const auto [p, ec] = std::from_chars(text.data() + at, text.data() + at + len, out);
    return ec == std::errc{} && p == text.data() + at + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

// ---------------------------------------------------------------------------
// Core types

struct ModelMetadata {
  std::optional<int> date;  // days since epoch
  std::string date_text;
  std::optional<std::string> group;
};

/// Dense model x example score table with values in [0, 1].
class CorrectnessMatrix {
 public:
  CorrectnessMatrix() = default;

  CorrectnessMatrix(std::vector<std::string> model_ids, std::vector<std::string> example_ids,
                    Eigen::MatrixXd values,
                    std::map<std::string, ModelMetadata> metadata = {})
      : model_ids_(std::move(model_ids)),
        example_ids_(std::move(example_ids)),
        values_(std::move(values)),
        metadata_(std::move(metadata)) {
    if (values_.rows() != static_cast<Eigen::Index>(model_ids_.size()) ||
        values_.cols() != static_cast<Eigen::Index>(example_ids_.size()))
      throw Error(ErrorKind::kInvalidArgument, "matrix shape does not match id lists");
    for (std::size_t i = 0; i < model_ids_.size(); ++i)
      if (!model_index_.emplace(model_ids_[i], i).second)
        throw Error(ErrorKind::kDuplicateId, "duplicate model id", model_ids_[i]);
    for (std::size_t i = 0; i < example_ids_.size(); ++i)
      if (!example_index_.emplace(example_ids_[i], i).second)
        throw Error(ErrorKind::kDuplicateId, "duplicate example id", example_ids_[i]);
    for (Eigen::Index r = 0; r < values_.rows(); ++r)
      for (Eigen::Index c = 0; c < values_.cols(); ++c) {
        const double v = values_(r, c);
        if (!(v >= 0.0 && v <= 1.0))
          throw Error(ErrorKind::kOutOfRange, "score outside [0,1]",
                      model_ids_[r] + "/" + example_ids_[c]);
      }
    for (const auto& [id, _] : metadata_)
      if (!model_index_.contains(id))
        throw Error(ErrorKind::kUnknownId, "metadata for unknown model", id);
  }

  std::size_t num_models() const { return model_ids_.size(); }
  std::size_t num_examples() const { return example_ids_.size(); }
  const std::vector<std::string>& model_ids() const { return model_ids_; }
  const std::vector<std::string>& example_ids() const { return example_ids_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const std::map<std::string, ModelMetadata>& metadata() const { return metadata_; }

  bool has_model(const std::string& id) const { return model_index_.contains(id); }
  bool has_example(const std::string& id) const { return example_index_.contains(id); }

  std::size_t model_index(const std::string& id) const {
    auto it = model_index_.find(id);
    if (it == model_index_.end()) throw Error(ErrorKind::kUnknownId, "unknown model", id);
    return it->second;
  }
  std::size_t example_index(const std::string& id) const {
    auto it = example_index_.find(id);
    if (it == example_index_.end()) throw Error(ErrorKind::kUnknownId, "unknown example", id);
    return it->second;
  }

  double value(const std::string& model, const std::string& example) const {
    return values_(static_cast<Eigen::Index>(model_index(model)),
                   static_cast<Eigen::Index>(example_index(example)));
  }

  std::vector<std::size_t> example_indices(std::span<const std::string> ids) const {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(example_index(id));
    return out;
  }

  /// Sub-matrix over the given models (in the given order), all examples.
  CorrectnessMatrix select_models(std::span<const std::string> ids) const {
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(ids.size()), values_.cols());
    std::map<std::string, ModelMetadata> meta;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) =
          values_.row(static_cast<Eigen::Index>(model_index(ids[r])));
      if (auto it = metadata_.find(ids[r]); it != metadata_.end()) meta.emplace(*it);
    }
    return CorrectnessMatrix({ids.begin(), ids.end()}, example_ids_, std::move(sub),
                             std::move(meta));
  }

  CorrectnessMatrix with_values(Eigen::MatrixXd values) const {
    return CorrectnessMatrix(model_ids_, example_ids_, std::move(values), metadata_);
  }

  CorrectnessMatrix with_metadata(std::map<std::string, ModelMetadata> metadata) const {
    return CorrectnessMatrix(model_ids_, example_ids_, values_, std::move(metadata));
  }

 private:
  std::vector<std::string> model_ids_;
  std::vector<std::string> example_ids_;
  Eigen::MatrixXd values_;
  std::map<std::string, ModelMetadata> metadata_;
  std::unordered_map<std::string, std::size_t> model_index_;
  std::unordered_map<std::string, std::size_t> example_index_;
};

struct Subscenario {
  std::string id;
  std::vector<std::string> examples;
};

struct Scenario {
  std::string id;
  std::vector<Subscenario> subscenarios;

  /// Examples in subscenario order.
  std::vector<std::string> examples() const {
    std::vector<std::string> out;
    for (const auto& sub : subscenarios) out.insert(out.end(), sub.examples.begin(), sub.examples.end());
    return out;
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& sub : subscenarios) n += sub.examples.size();
    return n;
  }
};

struct BenchmarkSpec {
  std::vector<Scenario> scenarios;

  std::size_t scenario_index(const std::string& id) const {
    for (std::size_t j = 0; j < scenarios.size(); ++j)
      if (scenarios[j].id == id) return j;
    throw Error(ErrorKind::kUnknownId, "unknown scenario", id);
  }
  const Scenario& scenario(const std::string& id) const { return scenarios[scenario_index(id)]; }

  std::vector<std::string> scenario_ids() const {
    std::vector<std::string> out;
    for (const auto& s : scenarios) out.push_back(s.id);
    return out;
  }
};

/// Per-scenario balance weights aligned with Scenario::examples().
struct ScenarioWeights {
  std::string scenario_id;
  std::vector<std::string> examples;
  std::vector<double> normalized;  // sums to 1 within the scenario
  std::vector<double> scaled;      // normalized * scenario size
};

class BalanceWeights {
 public:
  BalanceWeights() = default;
  explicit BalanceWeights(std::vector<ScenarioWeights> per_scenario)
      : per_scenario_(std::move(per_scenario)) {
    for (std::size_t j = 0; j < per_scenario_.size(); ++j)
      for (std::size_t k = 0; k < per_scenario_[j].examples.size(); ++k)
        lookup_[per_scenario_[j].examples[k]] = {j, k};
  }

  const std::vector<ScenarioWeights>& scenarios() const { return per_scenario_; }

  const ScenarioWeights& scenario(const std::string& id) const {
    for (const auto& s : per_scenario_)
      if (s.scenario_id == id) return s;
    throw Error(ErrorKind::kUnknownId, "unknown scenario", id);
  }

  double normalized(const std::string& example) const {
    const auto [j, k] = locate(example);
    return per_scenario_[j].normalized[k];
  }
  double scaled(const std::string& example) const {
    const auto [j, k] = locate(example);
    return per_scenario_[j].scaled[k];
  }

 private:
  std::pair<std::size_t, std::size_t> locate(const std::string& example) const {
    auto it = lookup_.find(example);
    if (it == lookup_.end()) throw Error(ErrorKind::kUnknownId, "example has no weight", example);
    return it->second;
  }

  std::vector<ScenarioWeights> per_scenario_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> lookup_;
};

/// Normalized weight of example i in subscenario k is 1 / (s_j * |I_jk|).
inline BalanceWeights compute_balance_weights(const BenchmarkSpec& spec) {
  std::vector<ScenarioWeights> out;
  for (const auto& scenario : spec.scenarios) {
    ScenarioWeights w;
    w.scenario_id = scenario.id;
    std::size_t nonempty = 0;
    for (const auto& sub : scenario.subscenarios) nonempty += sub.examples.empty() ? 0 : 1;
    const double total = static_cast<double>(scenario.size());
    for (const auto& sub : scenario.subscenarios) {
      const double wi = 1.0 / (static_cast<double>(nonempty) * static_cast<double>(sub.examples.size()));
      for (const auto& ex : sub.examples) {
        w.examples.push_back(ex);
        w.normalized.push_back(wi);
        w.scaled.push_back(wi * total);
      }
    }
    out.push_back(std::move(w));
  }
  return BalanceWeights(std::move(out));
}

/// Checks subscenario disjointness, unique ids and two-way example coverage.
inline void validate(const CorrectnessMatrix& matrix, const BenchmarkSpec& spec) {
  std::set<std::string> scenario_ids;
  std::set<std::string> seen;
  for (const auto& scenario : spec.scenarios) {
    if (!scenario_ids.insert(scenario.id).second)
      throw Error(ErrorKind::kDuplicateId, "duplicate scenario id", scenario.id);
    if (scenario.size() == 0)
      throw Error(ErrorKind::kInvalidArgument, "scenario has no examples", scenario.id);
    std::set<std::string> sub_ids;
    for (const auto& sub : scenario.subscenarios) {
      if (!sub_ids.insert(sub.id).second)
        throw Error(ErrorKind::kDuplicateId, "duplicate subscenario id", scenario.id + "/" + sub.id);
      for (const auto& ex : sub.examples) {
        if (!seen.insert(ex).second)
          throw Error(ErrorKind::kDuplicateId, "example listed more than once in spec", ex);
        if (!matrix.has_example(ex))
          throw Error(ErrorKind::kMissingCoverage, "spec example missing from correctness matrix", ex);
      }
    }
  }
  for (const auto& ex : matrix.example_ids())
    if (!seen.contains(ex))
      throw Error(ErrorKind::kMissingCoverage, "matrix example not assigned to any scenario", ex);
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses the correctness CSV (header `model_id,<example ids...>`).
inline CorrectnessMatrix parse_correctness_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw Error(ErrorKind::kParse, "correctness file is empty");
  const auto& header = rows.front();
  if (header.empty() || header[0] != "model_id")
    throw Error(ErrorKind::kParse, "first header column must be model_id");
  std::vector<std::string> examples(header.begin() + 1, header.end());
  std::vector<std::string> models;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size() - 1),
                         static_cast<Eigen::Index>(examples.size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string& model = row[0];
    if (row.size() != header.size())
      throw Error(ErrorKind::kMissingCoverage,
                  "row has " + std::to_string(row.size() - 1) + " scores, expected " +
                      std::to_string(examples.size()),
                  model);
    for (std::size_t c = 1; c < row.size(); ++c) {
      const std::string cell_id = model + "/" + examples[c - 1];
      if (row[c].empty()) throw Error(ErrorKind::kMissingCoverage, "missing score", cell_id);
      const auto v = parse_double(row[c]);
      if (!v) throw Error(ErrorKind::kParse, "not a number: '" + row[c] + "'", cell_id);
      if (!(*v >= 0.0 && *v <= 1.0))
        throw Error(ErrorKind::kOutOfRange, "score " + row[c] + " outside [0,1]", cell_id);
      values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = *v;
    }
    models.push_back(model);
  }
  return CorrectnessMatrix(std::move(models), std::move(examples), std::move(values));
}

inline std::string to_csv(const CorrectnessMatrix& matrix) {
  std::string out = "model_id";
  for (const auto& ex : matrix.example_ids()) out += "," + csv::escape(ex);
  out += "\n";
  for (std::size_t r = 0; r < matrix.num_models(); ++r) {
    out += csv::escape(matrix.model_ids()[r]);
    for (std::size_t c = 0; c < matrix.num_examples(); ++c)
      out += "," + format_double(matrix.values()(static_cast<Eigen::Index>(r),
                                                 static_cast<Eigen::Index>(c)));
    out += "\n";
  }
  return out;
}

inline BenchmarkSpec parse_spec_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("spec JSON: ") + e.what());
  }
  BenchmarkSpec spec;
  try {
    for (const auto& js : j.at("scenarios")) {
      Scenario s;
      s.id = js.at("id").get<std::string>();
      for (const auto& jsub : js.at("subscenarios")) {
        Subscenario sub;
        sub.id = jsub.at("id").get<std::string>();
        sub.examples = jsub.at("examples").get<std::vector<std::string>>();
        s.subscenarios.push_back(std::move(sub));
      }
      spec.scenarios.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("spec JSON: ") + e.what());
  }
  return spec;
}

inline nlohmann::json to_json(const BenchmarkSpec& spec) {
  nlohmann::json j;
  j["scenarios"] = nlohmann::json::array();
  for (const auto& s : spec.scenarios) {
    nlohmann::json js{{"id", s.id}, {"subscenarios", nlohmann::json::array()}};
    for (const auto& sub : s.subscenarios)
      js["subscenarios"].push_back({{"id", sub.id}, {"examples", sub.examples}});
    j["scenarios"].push_back(std::move(js));
  }
  return j;
}

/// Parses `model_id,date,group`; either of date/group may be blank.
inline std::map<std::string, ModelMetadata> parse_metadata_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "model_id")
    throw Error(ErrorKind::kParse, "metadata header must start with model_id");
  const auto& header = rows[0];
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    return std::nullopt;
  };
  const auto date_col = column("date");
  const auto group_col = column("group");
  std::map<std::string, ModelMetadata> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ModelMetadata meta;
    if (date_col && *date_col < row.size() && !row[*date_col].empty()) {
      meta.date = parse_iso_date(row[*date_col]);
      if (!meta.date)
        throw Error(ErrorKind::kParse, "bad ISO-8601 date '" + row[*date_col] + "'", row[0]);
      meta.date_text = row[*date_col];
    }
    if (group_col && *group_col < row.size() && !row[*group_col].empty())
      meta.group = row[*group_col];
    if (!out.emplace(row[0], std::move(meta)).second)
      throw Error(ErrorKind::kDuplicateId, "duplicate model in metadata", row[0]);
  }
  return out;
}

inline std::string metadata_to_csv(const CorrectnessMatrix& matrix) {
  std::string out = "model_id,date,group\n";
  for (const auto& id : matrix.model_ids()) {
    auto it = matrix.metadata().find(id);
    out += csv::escape(id) + ",";
    if (it != matrix.metadata().end()) {
      out += it->second.date_text + ",";
      out += csv::escape(it->second.group.value_or(""));
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

struct Corpus {
  CorrectnessMatrix matrix;
  BenchmarkSpec spec;
  BalanceWeights weights;
};

/// Loads and validates a correctness CSV plus its spec JSON, and optionally
/// a metadata CSV.
inline Corpus ingest(const std::string& matrix_file, const std::string& spec_file,
                     const std::string& metadata_file = {}) {
  CorrectnessMatrix matrix = parse_correctness_csv(read_file(matrix_file));
  BenchmarkSpec spec = parse_spec_json(read_file(spec_file));
  if (!metadata_file.empty()) matrix = matrix.with_metadata(parse_metadata_csv(read_file(metadata_file)));
  validate(matrix, spec);
  BalanceWeights weights = compute_balance_weights(spec);
  return {std::move(matrix), std::move(spec), std::move(weights)};
}

// ---------------------------------------------------------------------------
// Scores

/// Mean of subscenario means, computed as the balance-weighted row average.
inline double scenario_score(const CorrectnessMatrix& matrix, const BenchmarkSpec& spec,
                             const BalanceWeights& weights, const std::string& model,
                             const std::string& scenario) {
  spec.scenario_index(scenario);
  const auto row = static_cast<Eigen::Index>(matrix.model_index(model));
  const ScenarioWeights& w = weights.scenario(scenario);
  double score = 0.0;
  for (std::size_t k = 0; k < w.examples.size(); ++k)
    score += w.normalized[k] *
             matrix.values()(row, static_cast<Eigen::Index>(matrix.example_index(w.examples[k])));
  return std::clamp(score, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { kRandom, kByDate, kByGroup, kKFold };

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "random") return SplitMode::kRandom;
  if (s == "by_date") return SplitMode::kByDate;
  if (s == "by_group") return SplitMode::kByGroup;
  if (s == "k_fold") return SplitMode::kKFold;
  throw Error(ErrorKind::kInvalidArgument, "unknown split mode '" + s + "'");
}

inline const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::kRandom: return "random";
    case SplitMode::kByDate: return "by_date";
    case SplitMode::kByGroup: return "by_group";
    case SplitMode::kKFold: return "k_fold";
  }
  return "?";
}

struct SplitSpec {
  SplitMode mode = SplitMode::kRandom;
  double test_fraction = 0.25;
  std::size_t folds = 11;
  std::uint64_t seed = 0;
  // by_date only: number of rolling origins; 1 is a single fixed cutoff.
  std::size_t origins = 1;
};

struct ModelSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

namespace detail {

inline std::size_t test_count(std::size_t n, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, "test fraction must lie in (0,1)");
  require(n >= 2, "need at least two models to split");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

// Keeps both lists in matrix order.
inline ModelSplit make_split(const CorrectnessMatrix& matrix, const std::set<std::string>& test) {
  ModelSplit split;
  for (const auto& id : matrix.model_ids()) (test.contains(id) ? split.test : split.train).push_back(id);
  return split;
}

}  // namespace detail

/// k near-equal folds over a seeded permutation of the models.
inline std::vector<std::vector<std::string>> fold_models(const CorrectnessMatrix& matrix,
                                                         std::size_t k, std::uint64_t seed) {
  const std::size_t n = matrix.num_models();
  require(k >= 2 && k <= n, "fold count must lie in [2, number of models]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "k_fold"));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> idx(k);
  for (std::size_t i = 0; i < n; ++i) idx[i % k].push_back(order[i]);
  std::vector<std::vector<std::string>> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(idx[f].begin(), idx[f].end());
    for (auto i : idx[f]) folds[f].push_back(matrix.model_ids()[i]);
  }
  return folds;
}

/// Train/test split for the random, by_date and by_group modes.
inline ModelSplit split_models(const CorrectnessMatrix& matrix, const SplitSpec& split) {
  const std::size_t n = matrix.num_models();
  const auto& ids = matrix.model_ids();
  std::set<std::string> test;
  switch (split.mode) {
    case SplitMode::kRandom: {
      const std::size_t k = detail::test_count(n, split.test_fraction);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(split.seed, "random_split"));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < k; ++i) test.insert(ids[order[i]]);
      break;
    }
    case SplitMode::kByDate: {
      const std::size_t k = detail::test_count(n, split.test_fraction);
      std::vector<std::pair<int, std::string>> dated;
      for (const auto& id : ids) {
        auto it = matrix.metadata().find(id);
        if (it == matrix.metadata().end() || !it->second.date)
          throw Error(ErrorKind::kMissingMetadata, "by_date split needs a release date", id);
        dated.emplace_back(*it->second.date, id);
      }
      std::sort(dated.begin(), dated.end());
      for (std::size_t i = n - k; i < n; ++i) test.insert(dated[i].second);
      break;
    }
    case SplitMode::kByGroup: {
      const std::size_t target = detail::test_count(n, split.test_fraction);
      std::map<std::string, std::vector<std::string>> groups;
      for (const auto& id : ids) {
        auto it = matrix.metadata().find(id);
        if (it == matrix.metadata().end() || !it->second.group)
          throw Error(ErrorKind::kMissingMetadata, "by_group split needs a group tag", id);
        groups[*it->second.group].push_back(id);
      }
      require(groups.size() >= 2, "by_group split needs at least two groups");
      std::vector<std::string> names;
      for (const auto& [g, _] : groups) names.push_back(g);
      Rng rng(derive_seed(split.seed, "group_split"));
      std::shuffle(names.begin(), names.end(), rng);
      for (std::size_t g = 0; g + 1 < names.size() && test.size() < target; ++g)
        for (const auto& id : groups[names[g]]) test.insert(id);
      break;
    }
    case SplitMode::kKFold:
      throw Error(ErrorKind::kInvalidArgument, "use fold_models for k_fold splits");
  }
  return detail::make_split(matrix, test);
}

/// Rolling-origin date splits: the newest origins * k models form `origins`
/// consecutive test blocks of k models; each block trains on every older model.
inline std::vector<ModelSplit> rolling_date_splits(const CorrectnessMatrix& matrix, const SplitSpec& split) {
  const std::size_t n = matrix.num_models();
  const std::size_t k = detail::test_count(n, split.test_fraction);
  if (split.origins * k >= n)
    throw Error(ErrorKind::kInvalidArgument, std::to_string(split.origins) + " origins of " + std::to_string(k) +
                                                 " test models leave no training data");
  std::vector<std::pair<int, std::string>> dated;
  for (const auto& id : matrix.model_ids()) {
    auto it = matrix.metadata().find(id);
    if (it == matrix.metadata().end() || !it->second.date)
      throw Error(ErrorKind::kMissingMetadata, "by_date split needs a release date", id);
    dated.emplace_back(*it->second.date, id);
  }
  std::sort(dated.begin(), dated.end());
  std::vector<ModelSplit> out;
  for (std::size_t o = 0; o < split.origins; ++o) {
    const std::size_t begin = n - (split.origins - o) * k;
    ModelSplit part;
    for (std::size_t i = 0; i < begin + k; ++i) (i < begin ? part.train : part.test).push_back(dated[i].second);
    const auto by_row = [&](const std::string& a, const std::string& b) {
      return matrix.model_index(a) < matrix.model_index(b);
    };
    std::sort(part.train.begin(), part.train.end(), by_row);
    std::sort(part.test.begin(), part.test.end(), by_row);
    out.push_back(std::move(part));
  }
  return out;
}

/// All train/test partitions a split specification implies: one for the
/// holdout modes, k for k_fold (fold f is the test set of partition f), one
/// per origin for rolling date splits.
inline std::vector<ModelSplit> make_splits(const CorrectnessMatrix& matrix, const SplitSpec& split) {
  if (split.mode == SplitMode::kByDate && split.origins > 1) return rolling_date_splits(matrix, split);
  if (split.mode != SplitMode::kKFold) return {split_models(matrix, split)};
  std::vector<ModelSplit> out;
  for (const auto& fold : fold_models(matrix, split.folds, split.seed))
    out.push_back(detail::make_split(matrix, {fold.begin(), fold.end()}));
  return out;
}

// ---------------------------------------------------------------------------
// Binarization

struct BinarizationThreshold {
  std::string scenario_id;
  double cutoff = 0.5;
};

/// Cutoff c whose count of values >= c best matches the sum of the values.
/// Candidates are the distinct positive observed values plus 1 (which also
/// covers the empty count when every value is below 1); ties go to the
/// smallest. Binary and all-zero inputs map to 0.5.
inline double choose_cutoff(std::span<const double> values) {
  const bool binary =
      std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0 || v == 1.0; });
  if (binary) return 0.5;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  double best_c = 0.5;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] <= 0.0 || (i > 0 && sorted[i] == sorted[i - 1])) continue;
    const double count = static_cast<double>(sorted.size() - i);
    const double gap = std::abs(total - count);
    if (gap < best_gap) {
      best_gap = gap;
      best_c = sorted[i];
    }
  }
  if (sorted.back() < 1.0 && total < best_gap && best_gap != std::numeric_limits<double>::infinity()) best_c = 1.0;
  return best_c;
}

struct Binarized {
  CorrectnessMatrix matrix;
  std::vector<BinarizationThreshold> thresholds;
};

inline Eigen::MatrixXd apply_thresholds(const CorrectnessMatrix& matrix, const BenchmarkSpec& spec,
                                        const std::vector<BinarizationThreshold>& thresholds) {
  Eigen::MatrixXd out = matrix.values();
  for (const auto& t : thresholds) {
    for (const auto& ex : spec.scenario(t.scenario_id).examples()) {
      const auto c = static_cast<Eigen::Index>(matrix.example_index(ex));
      for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = out(r, c) >= t.cutoff ? 1.0 : 0.0;
    }
  }
  return out;
}

/// Per-scenario cutoffs chosen on the training models only, then applied to
/// every model in the matrix.
inline Binarized binarize(const CorrectnessMatrix& matrix, const BenchmarkSpec& spec,
                          std::span<const std::string> train_ids) {
  require(!train_ids.empty(), "binarize needs at least one training model");
  std::vector<std::size_t> rows;
  for (const auto& id : train_ids) rows.push_back(matrix.model_index(id));
  std::vector<BinarizationThreshold> thresholds;
  for (const auto& scenario : spec.scenarios) {
    std::vector<double> cells;
    for (const auto& ex : scenario.examples()) {
      const auto c = static_cast<Eigen::Index>(matrix.example_index(ex));
      for (auto r : rows) cells.push_back(matrix.values()(static_cast<Eigen::Index>(r), c));
    }
    thresholds.push_back({scenario.id, choose_cutoff(cells)});
  }
  Eigen::MatrixXd values = apply_thresholds(matrix, spec, thresholds);
  return {matrix.with_values(std::move(values)), std::move(thresholds)};
}

}  // namespace tinyeval

#endif  // TINYEVAL_CORPUS_HPP_
