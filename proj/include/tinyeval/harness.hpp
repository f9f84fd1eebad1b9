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

// End-to-end evaluation: split models, fit the IRT model, select anchors
// with every requested strategy and measure how well each estimator recovers
// held-out benchmark scores.

#ifndef TINYEVAL_HARNESS_HPP_
#define TINYEVAL_HARNESS_HPP_

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>

#include "tinyeval/anchors.hpp"
#include "tinyeval/common.hpp"
#include "tinyeval/corpus.hpp"
#include "tinyeval/estimators.hpp"
#include "tinyeval/irt.hpp"

namespace tinyeval {

// ---------------------------------------------------------------------------
// Metrics

/// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman correlation: Pearson correlation of average-rank vectors.
/// Empty when either side has no rank variance.
inline std::optional<double> spearman(std::span<const double> truth, std::span<const double> estimate) {
  require(truth.size() == estimate.size(), "spearman inputs differ in length");
  if (truth.size() < 2) throw Error(ErrorKind::kInvalidArgument, "spearman needs at least 2 models");
  const auto a = average_ranks(truth);
  const auto b = average_ranks(estimate);
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks

struct SyntheticSpec {
  std::size_t num_models = 300;
  // Subscenario sizes per scenario.
  std::vector<std::vector<std::size_t>> scenarios = {{167, 167, 166}, {167, 167, 166},
                                                     {167, 167, 166}, {167, 167, 166}};
  std::size_t dim = 2;
  double theta_mean = 0.0;
  double theta_variance = 1.0;
  double alpha_mean = 0.5;
  double alpha_variance = 0.25;
  double beta_mean = 0.0;
  double beta_variance = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticBenchmark {
  CorrectnessMatrix matrix;
  BenchmarkSpec spec;
  Eigen::MatrixXd theta;  // models x dim
  Eigen::MatrixXd alpha;  // items x dim
  Eigen::VectorXd beta;
};

inline std::string zero_pad(std::size_t v, std::size_t width) {
  std::string s = std::to_string(v);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

/// Draws abilities and item parameters from independent Gaussians and
/// Bernoulli responses from the 2PL model. Model metadata carries a release
/// date and one of five group tags.
inline SyntheticBenchmark generate_synthetic(const SyntheticSpec& s) {
  require(s.num_models >= 1 && s.dim >= 1 && !s.scenarios.empty(), "synthetic spec needs positive counts");
  require(s.theta_variance >= 0 && s.alpha_variance >= 0 && s.beta_variance >= 0, "variances must be nonnegative");
  Rng rng(derive_seed(s.seed, "synthetic"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SyntheticBenchmark out;
  std::vector<std::string> examples;
  for (std::size_t j = 0; j < s.scenarios.size(); ++j) {
    Scenario sc;
    sc.id = "scenario_" + std::to_string(j);
    for (std::size_t k = 0; k < s.scenarios[j].size(); ++k) {
      require(s.scenarios[j][k] >= 1, "subscenario sizes must be positive");
      Subscenario sub;
      sub.id = "sub_" + std::to_string(k);
      for (std::size_t i = 0; i < s.scenarios[j][k]; ++i) {
        sub.examples.push_back("s" + std::to_string(j) + "_k" + std::to_string(k) + "_q" + zero_pad(i, 4));
        examples.push_back(sub.examples.back());
      }
      sc.subscenarios.push_back(std::move(sub));
    }
    out.spec.scenarios.push_back(std::move(sc));
  }
  const auto L = static_cast<Eigen::Index>(s.num_models);
  const auto I = static_cast<Eigen::Index>(examples.size());
  const auto d = static_cast<Eigen::Index>(s.dim);
  out.theta.resize(L, d);
  out.alpha.resize(I, d);
  out.beta.resize(I);
  const double ts = std::sqrt(s.theta_variance), as = std::sqrt(s.alpha_variance), bs = std::sqrt(s.beta_variance);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index k = 0; k < d; ++k) out.theta(l, k) = s.theta_mean + ts * normal(rng);
  for (Eigen::Index i = 0; i < I; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) out.alpha(i, k) = s.alpha_mean + as * normal(rng);
    out.beta(i) = s.beta_mean + bs * normal(rng);
  }
  Eigen::MatrixXd y(L, I);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index i = 0; i < I; ++i)
      y(l, i) = unif(rng) < sigmoid(out.alpha.row(i).dot(out.theta.row(l)) - out.beta(i)) ? 1.0 : 0.0;

  std::vector<std::string> models;
  std::map<std::string, ModelMetadata> meta;
  const int base_day = *parse_iso_date("2023-01-01");
  for (std::size_t l = 0; l < s.num_models; ++l) {
    models.push_back("model_" + zero_pad(l, 4));
    ModelMetadata m;
    m.date = base_day + static_cast<int>(std::uniform_int_distribution<int>(0, 729)(rng));
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{*m.date}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    m.date_text = buf;
    m.group = "org_" + std::to_string(std::uniform_int_distribution<int>(0, 4)(rng));
    meta.emplace(models.back(), std::move(m));
  }
  out.matrix = CorrectnessMatrix(std::move(models), std::move(examples), std::move(y), std::move(meta));
  return out;
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_models = j.value("num_models", s.num_models);
  if (j.contains("scenarios")) s.scenarios = j.at("scenarios").get<std::vector<std::vector<std::size_t>>>();
  s.dim = j.value("dim", s.dim);
  s.theta_mean = j.value("theta_mean", s.theta_mean);
  s.theta_variance = j.value("theta_variance", s.theta_variance);
  s.alpha_mean = j.value("alpha_mean", s.alpha_mean);
  s.alpha_variance = j.value("alpha_variance", s.alpha_variance);
  s.beta_mean = j.value("beta_mean", s.beta_mean);
  s.beta_variance = j.value("beta_variance", s.beta_variance);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline nlohmann::ordered_json to_json(const SyntheticSpec& s) {
  return {{"num_models", s.num_models},         {"scenarios", s.scenarios},
          {"dim", s.dim},                       {"theta_mean", s.theta_mean},
          {"theta_variance", s.theta_variance}, {"alpha_mean", s.alpha_mean},
          {"alpha_variance", s.alpha_variance}, {"beta_mean", s.beta_mean},
          {"beta_variance", s.beta_variance},   {"seed", s.seed}};
}

// ---------------------------------------------------------------------------
// Experiment configuration

/// An anchor method paired with either its naive estimate ("vanilla") or the
/// gp-IRT combination ("++"). "adaptive" runs D-optimal adaptive testing.
struct Strategy {
  AnchorMethod method = AnchorMethod::kRandom;
  bool plus = false;
  bool adaptive = false;

  std::string name() const {
    if (adaptive) return "adaptive";
    return std::string(to_string(method)) + (plus ? "++" : "");
  }
};

inline Strategy parse_strategy(std::string s) {
  if (s == "adaptive") return {AnchorMethod::kIrt, false, true};
  Strategy st;
  if (s.size() > 2 && s.ends_with("++")) {
    st.plus = true;
    s.resize(s.size() - 2);
  }
  st.method = parse_anchor_method(s);
  return st;
}

inline std::vector<Strategy> default_strategies() {
  std::vector<Strategy> out;
  for (auto m : {AnchorMethod::kRandom, AnchorMethod::kCorrectness, AnchorMethod::kIrt})
    for (bool plus : {false, true}) out.push_back({m, plus, false});
  return out;
}

struct ExperimentConfig {
  std::string matrix_path;
  std::string spec_path;
  std::string metadata_path;
  std::optional<SyntheticSpec> synthetic;  // used when no matrix path is given
  SplitSpec split;
  std::vector<std::size_t> anchor_counts = {10, 30, 60, 100};
  std::vector<Strategy> strategies = default_strategies();
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  Aggregation aggregation = Aggregation::kMean;
  std::vector<std::size_t> dims = {2, 5, 10, 15};
  IrtFitConfig irt;
  double anchor_variance_divisor = 4.0;
  bool pool_scenarios = true;
  int kmeans_restarts = 10;
  std::string output_dir = "tinyeval_out";
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c.matrix_path = j.value("matrix", "");
    c.spec_path = j.value("spec", "");
    c.metadata_path = j.value("metadata", "");
    if (j.contains("synthetic")) c.synthetic = synthetic_spec_from_json(j.at("synthetic"));
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.mode = parse_split_mode(s.value("mode", "random"));
      c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
      c.split.folds = s.value("k", c.split.folds);
      c.split.origins = s.value("origins", c.split.origins);
    }
    if (j.contains("anchor_counts")) c.anchor_counts = j.at("anchor_counts").get<std::vector<std::size_t>>();
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("aggregation")) c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    if (j.contains("dims")) c.dims = j.at("dims").get<std::vector<std::size_t>>();
    if (j.contains("irt")) {
      const auto& f = j.at("irt");
      c.irt.epochs = f.value("epochs", c.irt.epochs);
      c.irt.learning_rate = f.value("learning_rate", c.irt.learning_rate);
      c.irt.mc_samples = f.value("mc_samples", c.irt.mc_samples);
    }
    c.anchor_variance_divisor = j.value("anchor_variance_divisor", c.anchor_variance_divisor);
    c.pool_scenarios = j.value("pool_scenarios", c.pool_scenarios);
    c.kmeans_restarts = j.value("kmeans_restarts", c.kmeans_restarts);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("experiment config: ") + e.what());
  }
  return c;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  if (!c.matrix_path.empty()) j["matrix"] = c.matrix_path;
  if (!c.spec_path.empty()) j["spec"] = c.spec_path;
  if (!c.metadata_path.empty()) j["metadata"] = c.metadata_path;
  if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
  j["split"] = {{"mode", to_string(c.split.mode)}, {"test_fraction", c.split.test_fraction}, {"k", c.split.folds},
                {"origins", c.split.origins}};
  j["anchor_counts"] = c.anchor_counts;
  std::vector<std::string> names;
  for (const auto& s : c.strategies) names.push_back(s.name());
  j["strategies"] = names;
  j["seeds"] = c.seeds;
  j["aggregation"] = to_string(c.aggregation);
  j["dims"] = c.dims;
  j["irt"] = {{"epochs", c.irt.epochs}, {"learning_rate", c.irt.learning_rate}, {"mc_samples", c.irt.mc_samples}};
  j["anchor_variance_divisor"] = c.anchor_variance_divisor;
  j["pool_scenarios"] = c.pool_scenarios;
  j["kmeans_restarts"] = c.kmeans_restarts;
  j["output_dir"] = c.output_dir;
  return j;
}

// ---------------------------------------------------------------------------
// Report types

struct ModelError {
  std::string model_id;
  double truth = 0.0;
  double estimate = 0.0;
  double error = 0.0;  // |estimate - truth|
};

/// One (strategy, anchor count, seed) evaluation.
struct CellResult {
  std::string strategy;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<ModelError> models;             // sorted by model id
  std::vector<double> scenario_mae;           // per scenario, raw scale
  std::optional<double> spearman_rho;
  double mean_ess = 1.0;                      // average anchor-weight ESS
};

struct CellFailure {
  std::string strategy;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct SeedInfo {
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::vector<DimensionScore> dimension_scores;
  std::vector<CalibrationStats> calibration;
  std::vector<BinarizationThreshold> thresholds;
  std::size_t train_models = 0;
  std::size_t test_models = 0;
  double seconds = 0.0;
};

struct CurvePoint {
  std::string strategy;
  std::size_t n = 0;
  double mean_error = 0.0;
  double std_error = 0.0;  // sample std-dev across (seed, model) errors
  std::size_t count = 0;
  std::optional<double> mean_spearman;
};

struct EvaluationReport {
  ExperimentConfig config;
  std::vector<std::string> scenario_ids;
  std::vector<CellResult> cells;
  std::vector<CellFailure> failures;
  std::vector<SeedInfo> seeds;
  double seconds = 0.0;

  /// Aggregates cells over seeds, in config order of strategies and counts.
  std::vector<CurvePoint> curves() const {
    std::vector<CurvePoint> out;
    for (const auto& st : config.strategies) {
      for (auto n : config.anchor_counts) {
        CurvePoint p;
        p.strategy = st.name();
        p.n = n;
        std::vector<double> errors, rhos;
        for (const auto& c : cells) {
          if (c.strategy != p.strategy || c.n != n) continue;
          for (const auto& m : c.models) errors.push_back(m.error);
          if (c.spearman_rho) rhos.push_back(*c.spearman_rho);
        }
        if (errors.empty()) continue;
        p.mean_error = mean(errors);
        p.std_error = sample_stddev(errors);
        p.count = errors.size();
        if (!rhos.empty()) p.mean_spearman = mean(rhos);
        out.push_back(std::move(p));
      }
    }
    return out;
  }

  std::optional<CurvePoint> curve(const std::string& strategy, std::size_t n) const {
    for (auto& p : curves())
      if (p.strategy == strategy && p.n == n) return p;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Pipeline

namespace detail {

struct SeedOutput {
  SeedInfo info;
  std::vector<CellResult> cells;
  std::vector<CellFailure> failures;
};

inline Eigen::MatrixXd true_scenario_scores(const Corpus& corpus, std::span<const std::string> models) {
  const auto J = static_cast<Eigen::Index>(corpus.spec.scenarios.size());
  Eigen::MatrixXd t(static_cast<Eigen::Index>(models.size()), J);
  for (std::size_t l = 0; l < models.size(); ++l)
    for (Eigen::Index j = 0; j < J; ++j)
      t(static_cast<Eigen::Index>(l), j) =
          scenario_score(corpus.matrix, corpus.spec, corpus.weights, models[l],
                         corpus.spec.scenarios[static_cast<std::size_t>(j)].id);
  return t;
}

inline CellResult score_cell(const std::string& strategy, std::size_t n, std::uint64_t seed,
                             std::span<const std::string> test, const Eigen::MatrixXd& truth,
                             const Eigen::MatrixXd& estimate, Aggregation aggregation) {
  CellResult cell;
  cell.strategy = strategy;
  cell.n = n;
  cell.seed = seed;
  const auto true_bench = benchmark_scores(truth, aggregation);
  const auto est_bench = benchmark_scores(estimate, aggregation);
  for (std::size_t l = 0; l < test.size(); ++l)
    cell.models.push_back({test[l], true_bench[l], est_bench[l], std::abs(est_bench[l] - true_bench[l])});
  std::sort(cell.models.begin(), cell.models.end(),
            [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
  cell.scenario_mae.resize(static_cast<std::size_t>(truth.cols()));
  for (Eigen::Index j = 0; j < truth.cols(); ++j)
    cell.scenario_mae[static_cast<std::size_t>(j)] = (estimate.col(j) - truth.col(j)).cwiseAbs().mean();
  if (test.size() >= 2) cell.spearman_rho = spearman(true_bench, est_bench);
  return cell;
}

inline SeedOutput run_partition(const Corpus& corpus, const ExperimentConfig& config, std::uint64_t seed,
                                const ModelSplit& split, std::size_t partition) {
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t pseed = derive_seed(seed, static_cast<std::uint64_t>(partition) + 1000);
  SeedOutput out;
  out.info.seed = seed;
  out.info.train_models = split.train.size();
  out.info.test_models = split.test.size();

  const Binarized bin = binarize(corpus.matrix, corpus.spec, split.train);
  out.info.thresholds = bin.thresholds;
  const CorrectnessMatrix bin_train = bin.matrix.select_models(split.train);

  IrtFitConfig fit_config = config.irt;
  fit_config.record_trace = false;
  const DimensionSelection dims = select_dimension(bin_train, config.dims, derive_seed(pseed, "dims"), fit_config);
  out.info.dim = dims.dim;
  out.info.dimension_scores = dims.scores;
  const IrtModel model = fit_irt(bin_train, dims.dim, derive_seed(pseed, "irt"), fit_config);

  const bool need_plus = std::any_of(config.strategies.begin(), config.strategies.end(),
                                     [](const Strategy& s) { return s.plus; });
  std::vector<double> bias(corpus.spec.scenarios.size(), 0.0);
  if (need_plus)
    bias = estimate_bias(corpus.matrix, bin.matrix, corpus.spec, split.train, dims.dim,
                         derive_seed(pseed, "bias"), fit_config);
  for (std::size_t j = 0; j < corpus.spec.scenarios.size(); ++j) {
    const Scenario& sc = corpus.spec.scenarios[j];
    out.info.calibration.push_back({sc.id, sc.size() >= 2 ? estimate_sigma2(corpus.matrix, split.train, sc) : 0.0,
                                    bias[j], config.anchor_variance_divisor});
  }

  const Eigen::MatrixXd truth = true_scenario_scores(corpus, split.test);
  const auto J = corpus.spec.scenarios.size();
  std::unordered_map<std::string, double> cutoff_by_example;
  for (std::size_t j = 0; j < J; ++j)
    for (const auto& ex : corpus.spec.scenarios[j].examples()) cutoff_by_example[ex] = bin.thresholds[j].cutoff;

  std::vector<AnchorMethod> methods;
  bool want_adaptive = false;
  for (const auto& st : config.strategies) {
    if (st.adaptive) {
      want_adaptive = true;
      continue;
    }
    if (std::find(methods.begin(), methods.end(), st.method) == methods.end()) methods.push_back(st.method);
  }

  for (auto method : methods) {
    for (auto n : config.anchor_counts) {
      std::vector<Strategy> wanted;
      for (const auto& st : config.strategies)
        if (!st.adaptive && st.method == method) wanted.push_back(st);
      try {
        const std::uint64_t aseed = derive_seed(pseed, std::string("anchors:") + to_string(method) + ":" + std::to_string(n));
        std::vector<AnchorSet> anchors;
        double ess_total = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
          const Scenario& sc = corpus.spec.scenarios[j];
          const ScenarioWeights& bw = corpus.weights.scenario(sc.id);
          KMeansOptions km;
          km.restarts = config.kmeans_restarts;
          switch (method) {
            case AnchorMethod::kRandom:
              anchors.push_back(stratified_sample(corpus.spec, sc.id, n, aseed));
              break;
            case AnchorMethod::kCorrectness:
              anchors.push_back(select_anchors(correctness_embeddings(corpus.matrix, split.train, sc), n, bw,
                                               derive_seed(aseed, sc.id), AnchorMethod::kCorrectness, km));
              break;
            case AnchorMethod::kIrt:
              anchors.push_back(select_anchors(irt_embeddings(model, sc), n, bw, derive_seed(aseed, sc.id),
                                               AnchorMethod::kIrt, km));
              break;
          }
          ess_total += ess(anchors.back());
        }
        const SamplingKind kind = method == AnchorMethod::kRandom ? SamplingKind::kRandom : SamplingKind::kAnchor;
        const auto T = static_cast<Eigen::Index>(split.test.size());
        Eigen::MatrixXd naive(T, static_cast<Eigen::Index>(J)), gp(T, static_cast<Eigen::Index>(J));
        for (Eigen::Index l = 0; l < T; ++l) {
          const std::string& id = split.test[static_cast<std::size_t>(l)];
          const auto row = static_cast<Eigen::Index>(corpus.matrix.model_index(id));
          Responses raw;
          std::vector<std::vector<std::size_t>> items(J);
          std::vector<std::vector<double>> ys(J);
          for (std::size_t j = 0; j < J; ++j)
            for (const auto& a : anchors[j].anchors) {
              const auto col = static_cast<Eigen::Index>(corpus.matrix.example_index(a.example_id));
              raw[a.example_id] = corpus.matrix.values()(row, col);
              items[j].push_back(model.item_index(a.example_id));
              ys[j].push_back(bin.matrix.values()(row, col));
            }
          Eigen::VectorXd pooled_theta;
          if (config.pool_scenarios && need_plus) {
            std::vector<std::size_t> all_items;
            std::vector<double> all_y;
            for (std::size_t j = 0; j < J; ++j) {
              all_items.insert(all_items.end(), items[j].begin(), items[j].end());
              all_y.insert(all_y.end(), ys[j].begin(), ys[j].end());
            }
            pooled_theta = fit_ability(model, all_items, all_y).theta;
          }
          for (std::size_t j = 0; j < J; ++j) {
            const Scenario& sc = corpus.spec.scenarios[j];
            const ScoreEstimate nv = naive_estimate(anchors[j], raw, sc.size(), id);
            naive(l, static_cast<Eigen::Index>(j)) = nv.value;
            if (!need_plus) continue;
            const Eigen::VectorXd theta =
                config.pool_scenarios ? pooled_theta : fit_ability(model, items[j], ys[j]).theta;
            const auto observed = anchors[j].example_ids();
            const ScoreEstimate pe = pirt_estimate(model, theta, observed, raw, corpus.weights.scenario(sc.id), id);
            const double lambda = gpirt_lambda(out.info.calibration[j], anchors[j].anchors.size(), kind);
            gp(l, static_cast<Eigen::Index>(j)) = gpirt_estimate(nv, pe, lambda).value;
          }
        }
        for (const auto& st : wanted) {
          CellResult cell = score_cell(st.name(), n, seed, split.test, truth, st.plus ? gp : naive, config.aggregation);
          cell.mean_ess = ess_total / static_cast<double>(J);
          out.cells.push_back(std::move(cell));
        }
      } catch (const std::exception& e) {
        for (const auto& st : wanted) out.failures.push_back({st.name(), n, seed, e.what()});
      }
    }
  }

  if (want_adaptive) {
    for (auto n : config.anchor_counts) {
      try {
        const auto T = static_cast<Eigen::Index>(split.test.size());
        Eigen::MatrixXd est(T, static_cast<Eigen::Index>(J));
        AdaptiveOptions opts;
        opts.per_scenario_budget = n;
        for (Eigen::Index l = 0; l < T; ++l) {
          const std::string& id = split.test[static_cast<std::size_t>(l)];
          const auto row = static_cast<Eigen::Index>(corpus.matrix.model_index(id));
          auto respond = [&](const std::string& ex) {
            return corpus.matrix.values()(row, static_cast<Eigen::Index>(corpus.matrix.example_index(ex)));
          };
          auto cutoff = [&](const std::string& ex) { return cutoff_by_example.at(ex); };
          const auto estimates = adaptive_estimate(model, corpus.spec, corpus.weights, respond, cutoff, opts, id);
          for (std::size_t j = 0; j < J; ++j) est(l, static_cast<Eigen::Index>(j)) = estimates[j].value;
        }
        out.cells.push_back(score_cell("adaptive", n, seed, split.test, truth, est, config.aggregation));
      } catch (const std::exception& e) {
        out.failures.push_back({"adaptive", n, seed, e.what()});
      }
    }
  }
  out.info.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace detail

inline Corpus load_corpus(const ExperimentConfig& config) {
  if (!config.matrix_path.empty()) return ingest(config.matrix_path, config.spec_path, config.metadata_path);
  require(config.synthetic.has_value(), "config needs either a matrix path or a synthetic spec");
  SyntheticBenchmark synth = generate_synthetic(*config.synthetic);
  BalanceWeights w = compute_balance_weights(synth.spec);
  return {std::move(synth.matrix), std::move(synth.spec), std::move(w)};
}

inline void validate(const ExperimentConfig& config, const Corpus& corpus) {
  require(!config.seeds.empty(), "at least one seed is required");
  require(!config.dims.empty(), "at least one IRT dimension is required");
  for (auto n : config.anchor_counts) {
    require(n >= 1, "anchor counts must be positive");
    for (const auto& sc : corpus.spec.scenarios)
      if (n > sc.size())
        throw Error(ErrorKind::kInvalidArgument,
                    "anchor count " + std::to_string(n) + " exceeds scenario size " + std::to_string(sc.size()),
                    sc.id);
  }
}

/// Runs every seed (and every fold for k_fold splits). Seeds run on a
/// worker pool capped by TINYEVAL_THREADS; output order never depends on
/// scheduling.
inline EvaluationReport run_experiment(const ExperimentConfig& config, const Corpus& corpus) {
  validate(config, corpus);
  const auto started = std::chrono::steady_clock::now();
  EvaluationReport report;
  report.config = config;
  report.scenario_ids = corpus.spec.scenario_ids();

  struct Job {
    std::uint64_t seed;
    ModelSplit split;
    std::size_t partition;
  };
  std::vector<Job> jobs;
  for (auto seed : config.seeds) {
    SplitSpec split = config.split;
    split.seed = seed;
    const auto parts = make_splits(corpus.matrix, split);
    for (std::size_t p = 0; p < parts.size(); ++p) jobs.push_back({seed, parts[p], p});
  }
  std::vector<detail::SeedOutput> outputs(jobs.size());
  std::vector<std::string> job_errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    try {
      outputs[k] = detail::run_partition(corpus, config, jobs[k].seed, jobs[k].split, jobs[k].partition);
    } catch (const std::exception& e) {
      job_errors[k] = e.what();
      outputs[k].info.seed = jobs[k].seed;
    }
  });

  // Merge folds of the same seed into one cell per (strategy, n, seed).
  std::map<std::tuple<std::string, std::size_t, std::uint64_t>, CellResult> merged;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!job_errors[k].empty()) {
      for (const auto& st : config.strategies)
        for (auto n : config.anchor_counts) report.failures.push_back({st.name(), n, jobs[k].seed, job_errors[k]});
      continue;
    }
    report.seeds.push_back(outputs[k].info);
    for (auto& f : outputs[k].failures) report.failures.push_back(std::move(f));
    for (auto& c : outputs[k].cells) {
      const auto key = std::make_tuple(c.strategy, c.n, c.seed);
      auto it = merged.find(key);
      if (it == merged.end()) {
        merged.emplace(key, std::move(c));
      } else {
        auto& m = it->second;
        const double before = static_cast<double>(m.models.size()), added = static_cast<double>(c.models.size());
        for (std::size_t j = 0; j < m.scenario_mae.size(); ++j)
          m.scenario_mae[j] = (before * m.scenario_mae[j] + added * c.scenario_mae[j]) / (before + added);
        m.models.insert(m.models.end(), c.models.begin(), c.models.end());
        std::sort(m.models.begin(), m.models.end(),
                  [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
        std::vector<double> t, e;
        for (const auto& me : m.models) {
          t.push_back(me.truth);
          e.push_back(me.estimate);
        }
        m.spearman_rho = t.size() >= 2 ? spearman(t, e) : std::nullopt;
      }
    }
  }
  for (const auto& st : config.strategies)
    for (auto n : config.anchor_counts)
      for (auto seed : config.seeds)
        if (auto it = merged.find({st.name(), n, seed}); it != merged.end()) report.cells.push_back(it->second);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

inline EvaluationReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_corpus(config));
}

// ---------------------------------------------------------------------------
// Report files

inline std::string errors_csv(const EvaluationReport& report) {
  std::string out = "strategy,n,seed,model,error\n";
  for (const auto& c : report.cells)
    for (const auto& m : c.models)
      out += csv::escape(c.strategy) + "," + std::to_string(c.n) + "," + std::to_string(c.seed) + "," +
             csv::escape(m.model_id) + "," + format_double(m.error) + "\n";
  return out;
}

inline std::string curves_csv(const EvaluationReport& report) {
  std::string out = "strategy,n,mean_error,std\n";
  for (const auto& p : report.curves())
    out += csv::escape(p.strategy) + "," + std::to_string(p.n) + "," + format_double(p.mean_error) + "," +
           format_double(p.std_error) + "\n";
  return out;
}

inline nlohmann::ordered_json summary_json(const EvaluationReport& report) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["config"] = to_json(report.config);
  j["scenarios"] = report.scenario_ids;
  j["curves"] = nlohmann::ordered_json::array();
  for (const auto& p : report.curves())
    j["curves"].push_back({{"strategy", p.strategy},
                           {"n", p.n},
                           {"mean_error", p.mean_error},
                           {"std", p.std_error},
                           {"count", p.count},
                           {"mean_spearman", opt(p.mean_spearman)}});
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    std::vector<double> errs;
    for (const auto& m : c.models) errs.push_back(m.error);
    nlohmann::ordered_json per_scenario = nlohmann::ordered_json::object();
    for (std::size_t s = 0; s < c.scenario_mae.size() && s < report.scenario_ids.size(); ++s)
      per_scenario[report.scenario_ids[s]] = c.scenario_mae[s];
    j["cells"].push_back({{"strategy", c.strategy},
                          {"n", c.n},
                          {"seed", c.seed},
                          {"mean_error", mean(errs)},
                          {"std", sample_stddev(errs)},
                          {"spearman", opt(c.spearman_rho)},
                          {"mean_ess", c.mean_ess},
                          {"scenario_mae", per_scenario}});
  }
  j["seeds"] = nlohmann::ordered_json::array();
  for (const auto& s : report.seeds) {
    nlohmann::ordered_json js{{"seed", s.seed},
                              {"dim", s.dim},
                              {"train_models", s.train_models},
                              {"test_models", s.test_models},
                              {"seconds", s.seconds}};
    js["dimension_scores"] = nlohmann::ordered_json::array();
    for (const auto& d : s.dimension_scores)
      js["dimension_scores"].push_back({{"dim", d.dim}, {"validation_loglik", d.validation_loglik}});
    js["calibration"] = nlohmann::ordered_json::object();
    for (const auto& c : s.calibration) js["calibration"][c.scenario_id] = {{"sigma2", c.sigma2}, {"bias", c.bias}};
    js["thresholds"] = nlohmann::ordered_json::object();
    for (const auto& t : s.thresholds) js["thresholds"][t.scenario_id] = t.cutoff;
    j["seeds"].push_back(std::move(js));
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : report.failures)
    j["failures"].push_back({{"strategy", f.strategy}, {"n", f.n}, {"seed", f.seed}, {"message", f.message}});
  j["seconds"] = report.seconds;
  return j;
}

/// Writes summary.json, errors.csv and curves.csv into `dir`.
inline void emit_report(const EvaluationReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create output directory: " + ec.message(), dir);
  const std::filesystem::path root(dir);
  write_file((root / "summary.json").string(), summary_json(report).dump(2) + "\n");
  write_file((root / "errors.csv").string(), errors_csv(report));
  write_file((root / "curves.csv").string(), curves_csv(report));
}

}  // namespace tinyeval

#endif  // TINYEVAL_HARNESS_HPP_
