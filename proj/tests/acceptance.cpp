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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Usage: tinyeval_acceptance <fixture dir>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>

#include "tinyeval/tinyeval.hpp"

namespace {

using namespace tinyeval;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void guarded(int id, const std::string& title, const std::function<Outcome()>& body) {
  try {
    report(id, title, body());
  } catch (const std::exception& e) {
    report(id, title, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- synthetic end-to-end run shared by criteria 1, 2 and 9 -----------------------

struct SyntheticRun {
  EvaluationReport report;
  double seconds = 0.0;
};

SyntheticRun run_synthetic_benchmark() {
  ExperimentConfig c;
  SyntheticSpec s;
  s.num_models = 300;
  s.scenarios.assign(4, {167, 167, 166});
  s.dim = 2;
  s.theta_mean = 0.0;
  s.theta_variance = 1.0;
  s.alpha_mean = 0.5;
  s.alpha_variance = 0.25;
  s.beta_mean = 0.0;
  s.beta_variance = 1.0;
  s.seed = 2024;
  c.synthetic = s;
  c.split.mode = SplitMode::kRandom;
  c.split.test_fraction = 0.25;
  c.anchor_counts = {10, 30, 60, 100};
  c.strategies = default_strategies();
  c.seeds = {0, 1, 2, 3, 4};
  const auto started = std::chrono::steady_clock::now();
  SyntheticRun run{run_experiment(c), 0.0};
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

Outcome criterion1(const SyntheticRun& run) {
  const auto p = run.report.curve("irt++", 100);
  if (!p) return {false, "no irt++ cell at n=100"};
  const bool ok = p->mean_error <= 0.025 && run.seconds <= 15 * 60 && run.report.failures.empty();
  return {ok, fmt("irt++ mean abs error at n=100 = %.2f points (limit 2.5) over 5 seeds; runtime %.0f s (limit 900)",
                  100 * p->mean_error, run.seconds)};
}

Outcome criterion2(const SyntheticRun& run) {
  bool ok = run.report.failures.empty();
  std::string detail;
  const std::vector<std::size_t> ns = {10, 30, 60, 100};
  for (const auto& st : default_strategies()) {
    std::optional<CurvePoint> prev;
    for (auto n : ns) {
      const auto p = run.report.curve(st.name(), n);
      if (!p) return {false, "missing curve point " + st.name()};
      if (prev) {
        const double se = std::max(prev->std_error / std::sqrt(static_cast<double>(prev->count)),
                                   p->std_error / std::sqrt(static_cast<double>(p->count)));
        if (p->mean_error > prev->mean_error + se) {
          ok = false;
          detail += st.name() + " rises at n=" + std::to_string(n) + "; ";
        }
      }
      prev = p;
    }
  }
  double worst_gap = -1.0;
  for (auto method : {"random", "correctness", "irt"})
    for (auto n : ns) {
      const double gap = run.report.curve(std::string(method) + "++", n)->mean_error -
                         run.report.curve(method, n)->mean_error;
      worst_gap = std::max(worst_gap, gap);
      if (gap > 0.005) {
        ok = false;
        detail += std::string(method) + "++ worse than vanilla at n=" + std::to_string(n) + "; ";
      }
    }
  std::string curve;
  for (const auto& st : default_strategies()) {
    curve += st.name() + "[";
    for (auto n : ns) curve += fmt("%.2f", 100 * run.report.curve(st.name(), n)->mean_error) + (n == 100 ? "" : " ");
    curve += "] ";
  }
  return {ok, detail + curve + fmt("largest ++ minus vanilla gap %.2f points (limit 0.5)", 100 * worst_gap)};
}

Outcome criterion9(const SyntheticRun& run) {
  const auto p = run.report.curve("irt++", 100);
  if (!p || !p->mean_spearman) return {false, "no Spearman value for irt++ at n=100"};
  double worst = 1.0;
  for (const auto& c : run.report.cells)
    if (c.strategy == "irt++" && c.n == 100 && c.spearman_rho) worst = std::min(worst, *c.spearman_rho);
  return {*p->mean_spearman >= 0.95,
          fmt("mean Spearman over seeds %.4f (limit 0.95), worst seed %.4f", *p->mean_spearman, worst)};
}

// --- criterion 3: p-IRT against a brute-force evaluation ------------------------------

Outcome criterion3() {
  // Scenario with subscenarios of 2 and 4 items; 3 models with fixed abilities.
  BenchmarkSpec spec;
  spec.scenarios.push_back({"s", {{"a", {"i1", "i2"}}, {"b", {"i3", "i4", "i5", "i6"}}}});
  const std::vector<std::string> items = {"i1", "i2", "i3", "i4", "i5", "i6"};
  const double alpha[6][2] = {{1.0, 0.0}, {0.5, -0.5}, {0.0, 1.2}, {-0.3, 0.8}, {1.5, 0.2}, {0.7, 0.7}};
  const double beta[6] = {0.2, -0.4, 0.0, 0.9, -1.1, 0.3};
  const double theta[3][2] = {{0.5, -0.2}, {-1.0, 1.0}, {1.3, 0.4}};
  const double y[3][6] = {{1, 0, 1, 1, 0, 1}, {0, 0, 1, 0, 1, 1}, {1, 1, 0, 1, 1, 0}};
  const std::vector<std::vector<std::size_t>> subsets = {{}, {0}, {2, 5}, {0, 3, 4}, {1, 2, 3, 4}, {0, 1, 2, 3, 4, 5}};
  const double omega_bar[6] = {1.0 / 4, 1.0 / 4, 1.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 8};

  Eigen::MatrixXd A(6, 2);
  Eigen::VectorXd B(6);
  for (int i = 0; i < 6; ++i) {
    A(i, 0) = alpha[i][0];
    A(i, 1) = alpha[i][1];
    B(i) = beta[i];
  }
  const IrtModel model(items, A, B);
  const auto weights = compute_balance_weights(spec);
  double worst = 0.0;
  int cases = 0;
  for (int l = 0; l < 3; ++l) {
    for (const auto& subset : subsets) {
      std::vector<bool> seen(6, false);
      std::vector<std::string> observed;
      Responses r;
      for (auto i : subset) {
        seen[i] = true;
        observed.push_back(items[i]);
        r[items[i]] = y[l][i];
      }
      // lambda_hat / |I_hat| = (1 - lambda_hat) / |I \ I_hat| = 1 / |I|, so the
      // estimator is a plain sum of normalized weights times score or probability.
      double oracle = 0.0;
      for (int i = 0; i < 6; ++i) {
        const double p = logistic(alpha[i][0] * theta[l][0] + alpha[i][1] * theta[l][1] - beta[i]);
        oracle += omega_bar[i] * (seen[i] ? y[l][i] : p);
      }
      const double got =
          pirt_estimate(model, Eigen::Vector2d(theta[l][0], theta[l][1]), observed, r, weights.scenario("s")).value;
      worst = std::max(worst, std::abs(got - oracle));
      ++cases;
    }
  }
  return {worst <= 1e-12, fmt("%.0f cases, max |difference| %.2e (limit 1e-12)", cases, worst)};
}

// --- criterion 4: Lipschitz bound in the ability ------------------------------------

Outcome criterion4() {
  const double c = 2.0;
  std::mt19937_64 rng(404);
  std::normal_distribution<double> g(0.0, 1.0);
  BenchmarkSpec spec;
  Scenario sc{"s", {}};
  std::vector<std::string> items;
  for (int k = 0; k < 3; ++k) {
    Subscenario sub{"sub" + std::to_string(k), {}};
    for (int i = 0; i < 10 + 7 * k; ++i) {
      sub.examples.push_back("k" + std::to_string(k) + "_" + std::to_string(i));
      items.push_back(sub.examples.back());
    }
    sc.subscenarios.push_back(sub);
  }
  spec.scenarios.push_back(sc);
  const auto n = static_cast<Eigen::Index>(items.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd B(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < 3; ++k) A(i, k) = g(rng);
    A.row(i) *= c * std::min(1.0, 1.0 / A.row(i).norm());  // ||alpha_i|| <= c
    B(i) = g(rng);
  }
  const IrtModel model(items, A, B);
  const auto weights = compute_balance_weights(spec);
  double worst_ratio = 0.0;
  int violations = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::string> observed;
    Responses r;
    for (const auto& id : items)
      if (rng() % 4 == 0) {
        observed.push_back(id);
        r[id] = static_cast<double>(rng() % 2);
      }
    Eigen::Vector3d t(g(rng), g(rng), g(rng)), th(g(rng), g(rng), g(rng));
    const double gap = std::abs(pirt_estimate(model, th, observed, r, weights.scenario("s")).value -
                                pirt_estimate(model, t, observed, r, weights.scenario("s")).value);
    const double bound = c * (th - t).norm();
    if (gap > bound) ++violations;
    worst_ratio = std::max(worst_ratio, gap / bound);
  }
  return {violations == 0, fmt("%.0f violations in 100 pairs; largest gap/bound %.3f", violations, worst_ratio)};
}

// --- criterion 5: lambda heuristic --------------------------------------------------

Outcome criterion5() {
  const double sigma2 = 0.01;
  const std::vector<double> biases = {0.0, 0.005, 0.01, 0.02, 0.05, 0.1};
  bool increasing = true, dominating = true;
  for (std::size_t b = 0; b < biases.size(); ++b)
    for (std::size_t n = 1; n <= 1000; ++n) {
      const double here = gpirt_lambda({"s", sigma2, biases[b]}, n, SamplingKind::kRandom);
      if (biases[b] > 0 && !(gpirt_lambda({"s", sigma2, biases[b]}, n + 1, SamplingKind::kRandom) > here))
        increasing = false;
      if (b > 0 && !(here > gpirt_lambda({"s", sigma2, biases[b - 1]}, n, SamplingKind::kRandom))) dominating = false;
    }
  const double spot = gpirt_lambda({"s", sigma2, 0.02}, 100, SamplingKind::kRandom);
  const bool ok = increasing && dominating && std::abs(spot - 0.8) <= 1e-12;
  return {ok, std::string("increasing in n: ") + (increasing ? "yes" : "no") +
                  ", larger bias dominates: " + (dominating ? "yes" : "no") +
                  fmt(", lambda(n=100, b=0.02) = %.15f", spot)};
}

// --- criterion 6: stratified sampling --------------------------------------------------

Outcome criterion6() {
  std::mt19937_64 rng(606);
  int bad_counts = 0, bad_weights = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    BenchmarkSpec spec;
    Scenario sc{"s", {}};
    const std::size_t K = 1 + rng() % 6;
    std::size_t smallest = SIZE_MAX;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t size = 1 + rng() % 40;
      smallest = std::min(smallest, size);
      Subscenario sub{"sub" + std::to_string(k), {}};
      for (std::size_t i = 0; i < size; ++i) sub.examples.push_back(std::to_string(k) + "_" + std::to_string(i));
      sc.subscenarios.push_back(sub);
    }
    spec.scenarios.push_back(sc);
    // Sizes at which every subscenario can take an equal share.
    const std::size_t n = 1 + rng() % (K * smallest);
    const AnchorSet set = stratified_sample(spec, "s", n, rng());
    std::vector<std::size_t> counts(K, 0);
    for (const auto& a : set.anchors) {
      ++counts[std::stoul(a.example_id.substr(0, a.example_id.find('_')))];
      if (a.weight != 1.0 / static_cast<double>(n)) ++bad_weights;
    }
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi - *lo > 1 || set.anchors.size() != n) ++bad_counts;
  }
  return {bad_counts == 0 && bad_weights == 0,
          fmt("1000 pairs: %.0f count-spread violations, %.0f weights differing from 1/n", bad_counts, bad_weights)};
}

// --- criterion 7: k-means against exhaustive partitions ---------------------------------

double best_partition_inertia(const Eigen::MatrixXd& x, std::size_t k) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t)> assign = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      if (used != k) return;
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        Eigen::VectorXd centre = Eigen::VectorXd::Zero(x.cols());
        double m = 0;
        for (std::size_t p = 0; p < n; ++p)
          if (label[p] == c) {
            centre += x.row(static_cast<Eigen::Index>(p)).transpose();
            ++m;
          }
        centre /= m;
        for (std::size_t p = 0; p < n; ++p)
          if (label[p] == c) total += (x.row(static_cast<Eigen::Index>(p)).transpose() - centre).squaredNorm();
      }
      best = std::min(best, total);
      return;
    }
    // Canonical labelling: point i joins an existing cluster or opens the next one.
    for (std::size_t c = 0; c <= used && c < k; ++c) {
      label[i] = c;
      assign(i + 1, std::max(used, c + 1));
    }
  };
  assign(0, 0);
  return best;
}

Outcome criterion7() {
  std::mt19937_64 rng(707);
  std::normal_distribution<double> g(0.0, 1.0);
  int misses = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto n = static_cast<Eigen::Index>(3 + rng() % 6);
    const std::size_t k = 1 + rng() % 3;
    const auto dim = static_cast<Eigen::Index>(1 + rng() % 3);
    Eigen::MatrixXd x(n, dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    const double optimum = best_partition_inertia(x, k);
    KMeansOptions opts;
    opts.restarts = 10;
    const double got = kmeans(x, k, rng(), opts).inertia;
    const double rel = (got - optimum) / std::max(optimum, 1e-12);
    worst = std::max(worst, rel);
    if (rel > 1e-9) ++misses;
  }
  return {misses == 0, fmt("%.0f of 50 instances above the exhaustive optimum; worst relative excess %.2e", misses,
                           worst)};
}

// --- criterion 8: ability gradient --------------------------------------------------

Outcome criterion8() {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = static_cast<Eigen::Index>(1 + rep % 5);
    const auto n = static_cast<Eigen::Index>(5 + rng() % 40);
    Eigen::MatrixXd A(n, d);
    Eigen::VectorXd B(n);
    std::vector<std::string> ids;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) A(i, k) = g(rng);
      B(i) = g(rng);
      ids.push_back("q" + std::to_string(i));
    }
    const IrtModel model(ids, A, B);
    std::vector<std::size_t> items;
    std::vector<double> ys;
    for (Eigen::Index i = 0; i < n; ++i) {
      items.push_back(static_cast<std::size_t>(i));
      ys.push_back(static_cast<double>(rng() % 2));
    }
    Eigen::VectorXd theta(d);
    for (Eigen::Index k = 0; k < d; ++k) theta(k) = g(rng);
    const Eigen::VectorXd analytic = ability_gradient(model, items, ys, theta);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < d; ++k) {
      Eigen::VectorXd up = theta, down = theta;
      up(k) += h;
      down(k) -= h;
      const double numeric =
          (ability_objective(model, items, ys, up) - ability_objective(model, items, ys, down)) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic(k)) / std::max(1.0, std::abs(analytic(k))));
    }
  }
  return {worst <= 1e-5, fmt("20 configurations, max relative error %.2e (limit 1e-5)", worst)};
}

// --- criterion 10: fixture through the evaluation pipeline ------------------------------

Outcome criterion10(const std::filesystem::path& data) {
  ExperimentConfig c = experiment_config_from_json(nlohmann::json::parse(read_file((data / "config.json").string())));
  c.matrix_path = (data / "matrix.csv").string();
  c.spec_path = (data / "spec.json").string();
  c.metadata_path = (data / "metadata.csv").string();
  const Corpus corpus = load_corpus(c);
  if (corpus.matrix.num_models() != 10 || corpus.matrix.num_examples() != 200)
    return {false, "fixture is not 10 x 200"};
  const auto report = run_experiment(c, corpus);
  const auto out = std::filesystem::temp_directory_path() / "tinyeval_acceptance_fixture";
  std::filesystem::remove_all(out);
  emit_report(report, out.string());
  const auto curves = csv::parse(read_file((out / "curves.csv").string()));
  const auto errors = csv::parse(read_file((out / "errors.csv").string()));
  const std::size_t expected_points = c.strategies.size() * c.anchor_counts.size();
  bool ok = report.failures.empty() && !curves.empty() &&
            curves[0] == std::vector<std::string>{"strategy", "n", "mean_error", "std"} &&
            curves.size() == expected_points + 1 && !errors.empty() &&
            errors[0] == std::vector<std::string>{"strategy", "n", "seed", "model", "error"};
  for (std::size_t r = 1; ok && r < curves.size(); ++r) {
    const double e = std::stod(curves[r][2]);
    ok = curves[r].size() == 4 && std::isfinite(e) && e >= 0.0 && e <= 1.0;
  }
  return {ok, fmt("%.0f curve rows, %.0f error rows, %.0f failed cells", static_cast<double>(curves.size() - 1),
                  static_cast<double>(errors.size() - 1), static_cast<double>(report.failures.size()))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path data = argc > 1 ? argv[1] : "tests/data";

  guarded(3, "p-IRT brute-force oracle", criterion3);
  guarded(4, "Lipschitz bound in ability", criterion4);
  guarded(5, "lambda heuristic", criterion5);
  guarded(6, "stratified sampling", criterion6);
  guarded(7, "k-means exhaustive optimum", criterion7);
  guarded(8, "ability gradient", criterion8);
  guarded(10, "fixture evaluation and report format", [&] { return criterion10(data); });

  std::optional<SyntheticRun> run;
  try {
    run = run_synthetic_benchmark();
  } catch (const std::exception& e) {
    const Outcome failed{false, std::string("synthetic run failed: ") + e.what()};
    report(1, "synthetic end-to-end error", failed);
    report(2, "error-curve shape", failed);
    report(9, "rank fidelity", failed);
  }
  if (run) {
    guarded(1, "synthetic end-to-end error", [&] { return criterion1(*run); });
    guarded(2, "error-curve shape", [&] { return criterion2(*run); });
    guarded(9, "rank fidelity", [&] { return criterion9(*run); });
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
