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

// Score estimators built on an anchor subset:
//
//   naive   sum_i w_i Y_i over the anchors
//   p-IRT   observed scores on the anchors plus IRT-predicted probabilities on
//           the unseen examples, mixed by lambda_hat = |anchors| / |scenario|
//   gp-IRT  lambda * naive + (1 - lambda) * p-IRT, with lambda set from the
//           estimated IRT bias b and the per-example score variance sigma^2:
//           lambda = b^2 / (sigma^2 / n + b^2)

#ifndef TINYEVAL_ESTIMATORS_HPP_
#define TINYEVAL_ESTIMATORS_HPP_

#include <Eigen/Dense>
#include <functional>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "tinyeval/anchors.hpp"
#include "tinyeval/common.hpp"
#include "tinyeval/corpus.hpp"
#include "tinyeval/irt.hpp"

namespace tinyeval {

enum class ScoreMethod { kNaive, kPirt, kGpirt, kAdaptive };

inline const char* to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::kNaive: return "naive";
    case ScoreMethod::kPirt: return "p_irt";
    case ScoreMethod::kGpirt: return "gp_irt";
    case ScoreMethod::kAdaptive: return "adaptive";
  }
  return "?";
}

struct ScoreEstimate {
  std::string scenario_id;
  std::string model_id;
  ScoreMethod method = ScoreMethod::kNaive;
  double value = 0.0;
  double lambda_hat = 0.0;  // |observed| / |scenario|
  double lambda = 0.0;      // weight on the naive estimate
  std::size_t n = 0;        // observed examples
};

struct CalibrationStats {
  std::string scenario_id;
  double sigma2 = 0.0;
  double bias = 0.0;
  double anchor_divisor = 4.0;
};

using Responses = std::unordered_map<std::string, double>;

// ---------------------------------------------------------------------------
// Estimators

/// Weighted anchor average. `responses` may hold extra entries (e.g. other
/// scenarios); every anchor must be present.
inline ScoreEstimate naive_estimate(const AnchorSet& anchors, const Responses& responses,
                                    std::size_t scenario_size, const std::string& model_id = {}) {
  require(scenario_size >= anchors.anchors.size(), "scenario smaller than its anchor set");
  double value = 0.0;
  for (const auto& a : anchors.anchors) {
    auto it = responses.find(a.example_id);
    if (it == responses.end())
      throw Error(ErrorKind::kMissingCoverage, "no response for anchor", a.example_id);
    value += a.weight * it->second;
  }
  ScoreEstimate e;
  e.scenario_id = anchors.scenario_id;
  e.model_id = model_id;
  e.method = ScoreMethod::kNaive;
  e.value = std::clamp(value, 0.0, 1.0);
  e.n = anchors.anchors.size();
  e.lambda_hat = static_cast<double>(e.n) / static_cast<double>(scenario_size);
  e.lambda = 1.0;
  return e;
}

/// p-IRT with balance weights: observed raw scores on `observed` plus
/// predicted probabilities under `theta` for the rest of the scenario.
inline ScoreEstimate pirt_estimate(const IrtModel& model, const Eigen::VectorXd& theta,
                                   std::span<const std::string> observed, const Responses& responses,
                                   const ScenarioWeights& balance, const std::string& model_id = {}) {
  if (static_cast<std::size_t>(theta.size()) != model.dim())
    throw Error(ErrorKind::kInvalidArgument,
                "ability has dimension " + std::to_string(theta.size()) + ", model has " +
                    std::to_string(model.dim()));
  const std::size_t total = balance.examples.size();
  require(total > 0, "empty scenario");
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t k = 0; k < total; ++k) position.emplace(balance.examples[k], k);
  std::vector<char> seen(total, 0);
  double observed_sum = 0.0;
  for (const auto& id : observed) {
    auto it = position.find(id);
    if (it == position.end())
      throw Error(ErrorKind::kUnknownId, "observed example not in scenario " + balance.scenario_id, id);
    if (seen[it->second]) throw Error(ErrorKind::kDuplicateId, "example observed twice", id);
    seen[it->second] = 1;
    auto r = responses.find(id);
    if (r == responses.end()) throw Error(ErrorKind::kMissingCoverage, "no response for observed example", id);
    observed_sum += balance.scaled[it->second] * r->second;
  }
  double unseen_sum = 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    if (seen[k]) continue;
    unseen_sum += balance.scaled[k] * predict_prob(model, balance.examples[k], theta);
  }
  const std::size_t n_obs = observed.size();
  const std::size_t n_unseen = total - n_obs;
  const double lambda_hat = static_cast<double>(n_obs) / static_cast<double>(total);
  double value = 0.0;
  if (n_obs > 0) value += lambda_hat / static_cast<double>(n_obs) * observed_sum;
  if (n_unseen > 0) value += (1.0 - lambda_hat) / static_cast<double>(n_unseen) * unseen_sum;

  ScoreEstimate e;
  e.scenario_id = balance.scenario_id;
  e.model_id = model_id;
  e.method = ScoreMethod::kPirt;
  e.value = std::clamp(value, 0.0, 1.0);
  e.lambda_hat = lambda_hat;
  e.lambda = 0.0;
  e.n = n_obs;
  return e;
}

enum class SamplingKind { kRandom, kAnchor };

/// lambda = b^2 / (s^2 / n + b^2) where s^2 is sigma^2, divided by the
/// anchor divisor for clustered anchors.
inline double gpirt_lambda(const CalibrationStats& stats, std::size_t n, SamplingKind kind) {
  require(n >= 1, "lambda needs at least one observed example");
  require(stats.sigma2 >= 0.0 && stats.bias >= 0.0, "calibration values must be nonnegative");
  require(stats.anchor_divisor > 0.0, "anchor divisor must be positive");
  const double b2 = stats.bias * stats.bias;
  if (b2 == 0.0) return 0.0;
  const double s2 = kind == SamplingKind::kAnchor ? stats.sigma2 / stats.anchor_divisor : stats.sigma2;
  return b2 / (s2 / static_cast<double>(n) + b2);
}

inline ScoreEstimate gpirt_estimate(const ScoreEstimate& naive, const ScoreEstimate& pirt, double lambda) {
  if (naive.model_id != pirt.model_id || naive.scenario_id != pirt.scenario_id)
    throw Error(ErrorKind::kInvalidArgument, "gp-IRT needs estimates for the same model and scenario",
                naive.model_id + "/" + naive.scenario_id + " vs " + pirt.model_id + "/" + pirt.scenario_id);
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
  ScoreEstimate e = pirt;
  e.method = ScoreMethod::kGpirt;
  e.value = std::clamp(lambda * naive.value + (1.0 - lambda) * pirt.value, 0.0, 1.0);
  e.lambda = lambda;
  e.n = naive.n;
  return e;
}

// ---------------------------------------------------------------------------
// Calibration

/// Mean over models of the sample variance of their scores on the scenario.
inline double estimate_sigma2(const CorrectnessMatrix& matrix, std::span<const std::string> train_ids,
                              const Scenario& scenario) {
  const auto examples = scenario.examples();
  if (examples.size() < 2)
    throw Error(ErrorKind::kInvalidArgument, "variance needs at least 2 examples", scenario.id);
  require(!train_ids.empty(), "variance needs at least one training model");
  const auto cols = matrix.example_indices(examples);
  double total = 0.0;
  for (const auto& id : train_ids) {
    const auto r = static_cast<Eigen::Index>(matrix.model_index(id));
    double m = 0.0;
    for (auto c : cols) m += matrix.values()(r, static_cast<Eigen::Index>(c));
    m /= static_cast<double>(cols.size());
    double ss = 0.0;
    for (auto c : cols) {
      const double t = matrix.values()(r, static_cast<Eigen::Index>(c)) - m;
      ss += t * t;
    }
    total += ss / static_cast<double>(cols.size() - 1);
  }
  return total / static_cast<double>(train_ids.size());
}

/// Mean absolute gap between predicted and actual per-model scenario means.
inline double mean_abs_gap(std::span<const double> predicted, std::span<const double> actual) {
  require(predicted.size() == actual.size() && !predicted.empty(), "gap needs matching nonempty inputs");
  double s = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) s += std::abs(predicted[k] - actual[k]);
  return s / static_cast<double>(predicted.size());
}

/// IRT bias per scenario: fit the model on half of the training models,
/// fit abilities of the other half on a random half of every scenario's
/// examples, and compare predicted with actual means on the unseen half.
inline std::vector<double> estimate_bias(const CorrectnessMatrix& raw, const CorrectnessMatrix& binary,
                                         const BenchmarkSpec& spec, std::span<const std::string> train_ids,
                                         std::size_t dim, std::uint64_t seed,
                                         const IrtFitConfig& config = {}) {
  if (train_ids.size() < 8)
    throw Error(ErrorKind::kInvalidArgument,
                "bias estimation needs at least 8 training models, got " + std::to_string(train_ids.size()));
  std::vector<std::string> order(train_ids.begin(), train_ids.end());
  Rng rng(derive_seed(seed, "bias_split"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = order.size() / 2;
  std::vector<std::string> part_one(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::string> part_two(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  std::sort(part_one.begin(), part_one.end(),
            [&](const auto& a, const auto& b) { return raw.model_index(a) < raw.model_index(b); });
  std::sort(part_two.begin(), part_two.end(),
            [&](const auto& a, const auto& b) { return raw.model_index(a) < raw.model_index(b); });

  const IrtModel model = fit_irt(binary.select_models(part_one), dim, derive_seed(seed, "bias_fit"), config);

  const std::size_t J = spec.scenarios.size();
  std::vector<std::vector<double>> predicted(J), actual(J);
  for (const auto& id : part_two) {
    Rng item_rng(derive_seed(seed, "bias_items:" + id));
    const auto row = static_cast<Eigen::Index>(raw.model_index(id));
    std::vector<std::size_t> fit_items;
    std::vector<double> fit_y;
    std::vector<std::vector<std::string>> unseen(J);
    for (std::size_t j = 0; j < J; ++j) {
      auto examples = spec.scenarios[j].examples();
      std::shuffle(examples.begin(), examples.end(), item_rng);
      const std::size_t h = examples.size() / 2;
      for (std::size_t k = 0; k < examples.size(); ++k) {
        if (k < h) {
          fit_items.push_back(model.item_index(examples[k]));
          fit_y.push_back(binary.values()(row, static_cast<Eigen::Index>(binary.example_index(examples[k]))));
        } else {
          unseen[j].push_back(examples[k]);
        }
      }
    }
    const AbilityFit fit = fit_ability(model, fit_items, fit_y);
    for (std::size_t j = 0; j < J; ++j) {
      double p = 0.0, a = 0.0;
      for (const auto& ex : unseen[j]) {
        p += predict_prob(model, ex, fit.theta);
        a += raw.values()(row, static_cast<Eigen::Index>(raw.example_index(ex)));
      }
      predicted[j].push_back(p / static_cast<double>(unseen[j].size()));
      actual[j].push_back(a / static_cast<double>(unseen[j].size()));
    }
  }
  std::vector<double> out(J);
  for (std::size_t j = 0; j < J; ++j) out[j] = mean_abs_gap(predicted[j], actual[j]);
  return out;
}

/// Bias estimate for a single scenario.
inline double estimate_bias(const CorrectnessMatrix& raw, const CorrectnessMatrix& binary,
                            const BenchmarkSpec& spec, std::span<const std::string> train_ids,
                            const std::string& scenario_id, std::size_t dim, std::uint64_t seed,
                            const IrtFitConfig& config = {}) {
  const std::size_t j = spec.scenario_index(scenario_id);
  return estimate_bias(raw, binary, spec, train_ids, dim, seed, config)[j];
}

// ---------------------------------------------------------------------------
// Aggregation

enum class Aggregation { kMean, kMeanWinRate };

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::kMean;
  if (s == "mean_win_rate") return Aggregation::kMeanWinRate;
  throw Error(ErrorKind::kInvalidArgument, "unknown aggregation '" + s + "'");
}

inline const char* to_string(Aggregation a) {
  return a == Aggregation::kMean ? "mean" : "mean_win_rate";
}

/// Benchmark score per model from a models x scenarios score table. Win rates
/// count strict wins plus half of ties against the other models.
inline std::vector<double> benchmark_scores(const Eigen::MatrixXd& scores, Aggregation aggregation) {
  const Eigen::Index models = scores.rows();
  const Eigen::Index scenarios = scores.cols();
  require(scenarios >= 1, "no scenarios to aggregate");
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (std::isnan(scores.data()[i]))
      throw Error(ErrorKind::kMissingCoverage, "missing scenario estimate");
  std::vector<double> out(static_cast<std::size_t>(models), 0.0);
  if (aggregation == Aggregation::kMean) {
    for (Eigen::Index l = 0; l < models; ++l) out[static_cast<std::size_t>(l)] = scores.row(l).mean();
    return out;
  }
  if (models < 2) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  for (Eigen::Index j = 0; j < scenarios; ++j) {
    for (Eigen::Index l = 0; l < models; ++l) {
      double wins = 0.0;
      for (Eigen::Index m = 0; m < models; ++m) {
        if (m == l) continue;
        if (scores(l, j) > scores(m, j)) wins += 1.0;
        else if (scores(l, j) == scores(m, j)) wins += 0.5;
      }
      out[static_cast<std::size_t>(l)] += wins / static_cast<double>(models - 1);
    }
  }
  for (auto& v : out) v /= static_cast<double>(scenarios);
  return out;
}

inline double benchmark_score(std::span<const double> scenario_scores) {
  require(!scenario_scores.empty(), "no scenarios to aggregate");
  return std::accumulate(scenario_scores.begin(), scenario_scores.end(), 0.0) /
         static_cast<double>(scenario_scores.size());
}

// ---------------------------------------------------------------------------
// Adaptive testing

/// Fisher information of the administered items at theta plus a ridge.
inline Eigen::MatrixXd fisher_information(const IrtModel& model, const Eigen::VectorXd& theta,
                                          std::span<const std::string> administered, double ridge = 1e-3) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd info = Eigen::MatrixXd::Identity(d, d) * ridge;
  for (const auto& id : administered) {
    const auto i = static_cast<Eigen::Index>(model.item_index(id));
    const double p = predict_prob(model, static_cast<std::size_t>(i), theta);
    info.noalias() += p * (1.0 - p) * model.alpha().row(i).transpose() * model.alpha().row(i);
  }
  return info;
}

/// D-optimal choice: the remaining item maximizing det(I + p(1-p) a a^T).
/// Ties go to the lowest example id.
inline std::string adaptive_next_item(const IrtModel& model, const Eigen::VectorXd& theta,
                                      std::span<const std::string> administered,
                                      std::span<const std::string> remaining, double ridge = 1e-3) {
  if (remaining.empty()) throw Error(ErrorKind::kInvalidArgument, "no remaining items to choose from");
  if (static_cast<std::size_t>(theta.size()) != model.dim())
    throw Error(ErrorKind::kInvalidArgument, "ability dimension mismatch");
  const Eigen::MatrixXd info = fisher_information(model, theta, administered, ridge);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  // det(I + c a a^T) = det(I) (1 + c a^T I^{-1} a); det(I) is common to all.
  const std::string* best = nullptr;
  double best_gain = -1.0;
  for (const auto& id : remaining) {
    const auto i = static_cast<Eigen::Index>(model.item_index(id));
    const double p = predict_prob(model, static_cast<std::size_t>(i), theta);
    const Eigen::VectorXd a = model.alpha().row(i).transpose();
    const double gain = p * (1.0 - p) * a.dot(ldlt.solve(a));
    if (gain > best_gain || (gain == best_gain && id < *best)) {
      best_gain = gain;
      best = &id;
    }
  }
  return *best;
}

struct AdaptiveOptions {
  std::size_t per_scenario_budget = 10;
  AbilityOptions ability;
};

/// Administers items one at a time, refitting the ability after each
/// response, until every scenario has used its budget. `respond` returns the
/// raw score of an example; `cutoff` maps an example to its binarization
/// threshold. Returns one p-IRT estimate per scenario, tagged adaptive.
inline std::vector<ScoreEstimate> adaptive_estimate(
    const IrtModel& model, const BenchmarkSpec& spec, const BalanceWeights& weights,
    const std::function<double(const std::string&)>& respond,
    const std::function<double(const std::string&)>& cutoff, const AdaptiveOptions& options,
    const std::string& model_id = {}) {
  require(options.per_scenario_budget >= 1, "adaptive budget must be positive");
  const std::size_t J = spec.scenarios.size();
  std::vector<std::vector<std::string>> pool(J);
  std::unordered_map<std::string, std::size_t> scenario_of;
  for (std::size_t j = 0; j < J; ++j) {
    pool[j] = spec.scenarios[j].examples();
    std::sort(pool[j].begin(), pool[j].end());
    for (const auto& id : pool[j]) scenario_of[id] = j;
  }
  std::vector<std::vector<std::string>> chosen(J);
  std::vector<std::string> administered;
  std::vector<std::size_t> items;
  std::vector<double> binary_y;
  Responses raw;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim()));
  for (;;) {
    std::vector<std::string> remaining;
    for (std::size_t j = 0; j < J; ++j)
      if (chosen[j].size() < std::min(options.per_scenario_budget, spec.scenarios[j].size()))
        for (const auto& id : pool[j])
          if (!raw.contains(id)) remaining.push_back(id);
    if (remaining.empty()) break;
    const std::string next = adaptive_next_item(model, theta, administered, remaining, options.ability.ridge);
    const double y = respond(next);
    raw[next] = y;
    administered.push_back(next);
    chosen[scenario_of[next]].push_back(next);
    items.push_back(model.item_index(next));
    binary_y.push_back(y >= cutoff(next) ? 1.0 : 0.0);
    theta = fit_ability(model, items, binary_y, options.ability).theta;
  }
  std::vector<ScoreEstimate> out;
  for (std::size_t j = 0; j < J; ++j) {
    ScoreEstimate e = pirt_estimate(model, theta, chosen[j], raw, weights.scenario(spec.scenarios[j].id), model_id);
    e.method = ScoreMethod::kAdaptive;
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitted model bundle: IRT parameters plus the calibration needed downstream.

struct ModelBundle {
  IrtModel model;
  std::vector<BinarizationThreshold> thresholds;
  std::vector<CalibrationStats> calibration;
  std::vector<DimensionScore> dimension_scores;

  const CalibrationStats& stats(const std::string& scenario_id) const {
    for (const auto& c : calibration)
      if (c.scenario_id == scenario_id) return c;
    throw Error(ErrorKind::kUnknownId, "no calibration for scenario", scenario_id);
  }
  double cutoff(const std::string& scenario_id) const {
    for (const auto& t : thresholds)
      if (t.scenario_id == scenario_id) return t.cutoff;
    throw Error(ErrorKind::kUnknownId, "no binarization threshold for scenario", scenario_id);
  }
};

inline nlohmann::ordered_json to_json(const ModelBundle& bundle) {
  nlohmann::ordered_json j = to_json(bundle.model);
  nlohmann::ordered_json cal = nlohmann::ordered_json::object();
  for (const auto& c : bundle.calibration)
    cal[c.scenario_id] = {{"sigma2", c.sigma2}, {"bias", c.bias}, {"anchor_divisor", c.anchor_divisor}};
  j["calibration"] = std::move(cal);
  nlohmann::ordered_json th = nlohmann::ordered_json::object();
  for (const auto& t : bundle.thresholds) th[t.scenario_id] = t.cutoff;
  j["thresholds"] = std::move(th);
  if (!bundle.dimension_scores.empty()) {
    j["dimension_selection"] = nlohmann::ordered_json::array();
    for (const auto& s : bundle.dimension_scores)
      j["dimension_selection"].push_back({{"dim", s.dim}, {"validation_loglik", s.validation_loglik}});
  }
  return j;
}

inline ModelBundle model_bundle_from_json(const nlohmann::ordered_json& j) {
  ModelBundle b;
  b.model = irt_model_from_json(j);
  try {
    if (j.contains("calibration"))
      for (const auto& [id, c] : j.at("calibration").items())
        b.calibration.push_back({id, c.at("sigma2").get<double>(), c.at("bias").get<double>(),
                                 c.value("anchor_divisor", 4.0)});
    if (j.contains("thresholds"))
      for (const auto& [id, c] : j.at("thresholds").items()) b.thresholds.push_back({id, c.get<double>()});
    if (j.contains("dimension_selection"))
      for (const auto& s : j.at("dimension_selection"))
        b.dimension_scores.push_back({s.at("dim").get<std::size_t>(), s.at("validation_loglik").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("model bundle JSON: ") + e.what());
  }
  return b;
}

inline std::string estimates_csv_header() { return "model_id,scenario_id,method,estimate,lambda_hat,lambda,n\n"; }

inline std::string to_csv_row(const ScoreEstimate& e) {
  return csv::escape(e.model_id) + "," + csv::escape(e.scenario_id) + "," + to_string(e.method) + "," +
         format_double(e.value) + "," + format_double(e.lambda_hat) + "," + format_double(e.lambda) + "," +
         std::to_string(e.n) + "\n";
}

}  // namespace tinyeval

#endif  // TINYEVAL_ESTIMATORS_HPP_
