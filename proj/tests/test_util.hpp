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

// Shared fixtures for the unit tests.

#ifndef TINYEVAL_TESTS_TEST_UTIL_HPP_
#define TINYEVAL_TESTS_TEST_UTIL_HPP_

#include <string>
#include <vector>

#include "tinyeval/tinyeval.hpp"

namespace tinyeval::testing {

/// One scenario per profile entry; subscenario k of scenario j holds
/// examples "j_k_i".
inline BenchmarkSpec make_spec(const std::vector<std::vector<std::size_t>>& profile) {
  BenchmarkSpec spec;
  for (std::size_t j = 0; j < profile.size(); ++j) {
    Scenario sc{"sc" + std::to_string(j), {}};
    for (std::size_t k = 0; k < profile[j].size(); ++k) {
      Subscenario sub{"sub" + std::to_string(k), {}};
      for (std::size_t i = 0; i < profile[j][k]; ++i)
        sub.examples.push_back(std::to_string(j) + "_" + std::to_string(k) + "_" + std::to_string(i));
      sc.subscenarios.push_back(std::move(sub));
    }
    spec.scenarios.push_back(std::move(sc));
  }
  return spec;
}

inline std::vector<std::string> all_examples(const BenchmarkSpec& spec) {
  std::vector<std::string> out;
  for (const auto& sc : spec.scenarios)
    for (const auto& ex : sc.examples()) out.push_back(ex);
  return out;
}

inline std::vector<std::string> model_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("m" + std::to_string(i));
  return out;
}

inline CorrectnessMatrix matrix_for(const BenchmarkSpec& spec, const Eigen::MatrixXd& values) {
  return CorrectnessMatrix(model_names(static_cast<std::size_t>(values.rows())), all_examples(spec), values);
}

/// Small IRT model with explicit parameters.
inline IrtModel make_model(const std::vector<std::string>& items, const Eigen::MatrixXd& alpha,
                           const Eigen::VectorXd& beta) {
  return IrtModel(items, alpha, beta, {}, Eigen::MatrixXd(0, alpha.cols()), {}, {});
}

}  // namespace tinyeval::testing

#endif  // TINYEVAL_TESTS_TEST_UTIL_HPP_
