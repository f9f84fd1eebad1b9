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

// Library walkthrough: generate a small synthetic benchmark, fit the IRT
// model on training models, pick 30 IRT anchors per scenario and estimate
// held-out models' scores three ways.

#include <iostream>

#include "tinyeval/tinyeval.hpp"

int main() {
  using namespace tinyeval;

  SyntheticSpec synth;
  synth.num_models = 120;
  synth.scenarios = {{100, 100}, {150, 50}};
  synth.seed = 7;
  const SyntheticBenchmark bench = generate_synthetic(synth);
  const BalanceWeights weights = compute_balance_weights(bench.spec);

  SplitSpec split_spec;
  split_spec.test_fraction = 0.1;
  split_spec.seed = 7;
  const ModelSplit split = split_models(bench.matrix, split_spec);

  const Binarized bin = binarize(bench.matrix, bench.spec, split.train);
  IrtFitConfig fit;
  fit.epochs = 500;
  fit.record_trace = false;
  const IrtModel model = fit_irt(bin.matrix.select_models(split.train), 2, 7, fit);
  const auto bias = estimate_bias(bench.matrix, bin.matrix, bench.spec, split.train, 2, 7, fit);

  std::vector<AnchorSet> anchors;
  for (const auto& sc : bench.spec.scenarios)
    anchors.push_back(select_anchors(irt_embeddings(model, sc), 30, weights.scenario(sc.id), 7, AnchorMethod::kIrt));

  // Mean absolute error over held-out models, per estimator.
  double err_naive = 0.0, err_pirt = 0.0, err_gp = 0.0;
  std::size_t cells = 0;
  for (const auto& target : split.test) {
    Responses responses;
    std::vector<std::size_t> items;
    std::vector<double> ys;
    for (const auto& set : anchors)
      for (const auto& a : set.anchors) {
        responses[a.example_id] = bench.matrix.value(target, a.example_id);
        items.push_back(model.item_index(a.example_id));
        ys.push_back(bin.matrix.value(target, a.example_id));
      }
    const Eigen::VectorXd theta = fit_ability(model, items, ys).theta;
    if (&target == &split.test.front()) std::cout << "model " << target << "\n";
    for (std::size_t j = 0; j < bench.spec.scenarios.size(); ++j) {
      const Scenario& sc = bench.spec.scenarios[j];
      const CalibrationStats stats{sc.id, estimate_sigma2(bench.matrix, split.train, sc), bias[j]};
      const ScoreEstimate nv = naive_estimate(anchors[j], responses, sc.size(), target);
      const ScoreEstimate pe =
          pirt_estimate(model, theta, anchors[j].example_ids(), responses, weights.scenario(sc.id), target);
      const ScoreEstimate gp = gpirt_estimate(nv, pe, gpirt_lambda(stats, 30, SamplingKind::kAnchor));
      const double truth = scenario_score(bench.matrix, bench.spec, weights, target, sc.id);
      if (&target == &split.test.front())
        std::cout << "  " << sc.id << ": truth " << truth << "  naive " << nv.value << "  p-IRT " << pe.value
                  << "  gp-IRT " << gp.value << "\n";
      err_naive += std::abs(nv.value - truth);
      err_pirt += std::abs(pe.value - truth);
      err_gp += std::abs(gp.value - truth);
      ++cells;
    }
  }
  const double denom = static_cast<double>(cells);
  std::cout << "mean abs error over " << split.test.size() << " held-out models: naive " << err_naive / denom
            << "  p-IRT " << err_pirt / denom << "  gp-IRT " << err_gp / denom << "\n";
  return 0;
}
