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

// Weighted anchor subsets: stratified random sampling and clustering of
// example embeddings (correctness columns or fitted IRT item parameters).

#ifndef TINYEVAL_ANCHORS_HPP_
#define TINYEVAL_ANCHORS_HPP_

#include <Eigen/Dense>
#include <map>
#include <nlohmann/json.hpp>

#include "tinyeval/common.hpp"
#include "tinyeval/corpus.hpp"
#include "tinyeval/irt.hpp"

namespace tinyeval {

enum class AnchorMethod { kRandom, kCorrectness, kIrt };

inline const char* to_string(AnchorMethod m) {
  switch (m) {
    case AnchorMethod::kRandom: return "random";
    case AnchorMethod::kCorrectness: return "correctness";
    case AnchorMethod::kIrt: return "irt";
  }
  return "?";
}

inline AnchorMethod parse_anchor_method(const std::string& s) {
  if (s == "random") return AnchorMethod::kRandom;
  if (s == "correctness") return AnchorMethod::kCorrectness;
  if (s == "irt") return AnchorMethod::kIrt;
  throw Error(ErrorKind::kInvalidArgument, "unknown anchor method '" + s + "'");
}

struct Anchor {
  std::string example_id;
  double weight = 0.0;
};

struct AnchorSet {
  std::string scenario_id;
  AnchorMethod method = AnchorMethod::kRandom;
  std::vector<Anchor> anchors;

  std::vector<std::string> example_ids() const {
    std::vector<std::string> out;
    for (const auto& a : anchors) out.push_back(a.example_id);
    return out;
  }
};

/// Checks nonnegative weights summing to one and distinct members of the scenario.
inline void validate(const AnchorSet& set, const Scenario& scenario) {
  if (set.anchors.empty()) throw Error(ErrorKind::kInvalidArgument, "anchor set is empty", set.scenario_id);
  const auto members = scenario.examples();
  const std::set<std::string> member_set(members.begin(), members.end());
  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& a : set.anchors) {
    if (!(a.weight >= 0.0)) throw Error(ErrorKind::kOutOfRange, "negative anchor weight", a.example_id);
    if (!member_set.contains(a.example_id))
      throw Error(ErrorKind::kUnknownId, "anchor is not an example of scenario " + scenario.id, a.example_id);
    if (!seen.insert(a.example_id).second)
      throw Error(ErrorKind::kDuplicateId, "anchor listed twice", a.example_id);
    total += a.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw Error(ErrorKind::kOutOfRange, "anchor weights sum to " + format_double(total), set.scenario_id);
}

// ---------------------------------------------------------------------------
// Stratified random sampling

/// Per-subscenario sample counts whose spread is minimal subject to the
/// subscenario sizes; the subscenarios receiving the remainder are random.
inline std::vector<std::size_t> stratified_counts(std::span<const std::size_t> sizes, std::size_t n,
                                                  Rng& rng) {
  std::vector<std::size_t> counts(sizes.size(), 0);
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < sizes.size(); ++k)
    if (sizes[k] > 0) active.push_back(k);
  std::size_t remaining = n;
  // Saturate subscenarios smaller than the current fair share, then repeat.
  for (bool changed = true; changed && !active.empty();) {
    changed = false;
    const std::size_t share = remaining / active.size();
    std::vector<std::size_t> next;
    for (auto k : active) {
      if (sizes[k] <= share) {
        counts[k] = sizes[k];
        remaining -= sizes[k];
        changed = true;
      } else {
        next.push_back(k);
      }
    }
    active = std::move(next);
  }
  if (active.empty()) return counts;
  const std::size_t base = remaining / active.size();
  std::size_t extra = remaining % active.size();
  std::shuffle(active.begin(), active.end(), rng);
  for (auto k : active) {
    counts[k] = base + (extra > 0 ? 1 : 0);
    if (extra > 0) --extra;
  }
  return counts;
}

/// Samples n examples of a scenario, spreading them as evenly as possible
/// over subscenarios. All weights are 1/n.
inline AnchorSet stratified_sample(const BenchmarkSpec& spec, const std::string& scenario_id,
                                   std::size_t n, std::uint64_t seed) {
  const Scenario& scenario = spec.scenario(scenario_id);
  if (n < 1) throw Error(ErrorKind::kInvalidArgument, "sample size must be at least 1", scenario_id);
  if (n > scenario.size())
    throw Error(ErrorKind::kInvalidArgument,
                "sample size " + std::to_string(n) + " exceeds scenario size " +
                    std::to_string(scenario.size()),
                scenario_id);
  Rng rng(derive_seed(seed, "stratified:" + scenario_id));
  std::vector<std::size_t> sizes;
  for (const auto& sub : scenario.subscenarios) sizes.push_back(sub.examples.size());
  const auto counts = stratified_counts(sizes, n, rng);
  AnchorSet out{scenario_id, AnchorMethod::kRandom, {}};
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < scenario.subscenarios.size(); ++k) {
    std::vector<std::size_t> pick(scenario.subscenarios[k].examples.size());
    std::iota(pick.begin(), pick.end(), 0);
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(counts[k]);
    std::sort(pick.begin(), pick.end());
    for (auto i : pick) out.anchors.push_back({scenario.subscenarios[k].examples[i], w});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

/// One row per example; all rows share a dimension.
struct ExampleEmbeddings {
  std::vector<std::string> example_ids;
  Eigen::MatrixXd vectors;
};

/// Column i of the training correctness matrix, for every example of the scenario.
inline ExampleEmbeddings correctness_embeddings(const CorrectnessMatrix& matrix,
                                                std::span<const std::string> train_ids,
                                                const Scenario& scenario) {
  if (train_ids.empty()) throw Error(ErrorKind::kInvalidArgument, "correctness embeddings need training models");
  ExampleEmbeddings out;
  out.example_ids = scenario.examples();
  out.vectors.resize(static_cast<Eigen::Index>(out.example_ids.size()),
                     static_cast<Eigen::Index>(train_ids.size()));
  std::vector<Eigen::Index> rows;
  for (const auto& id : train_ids) rows.push_back(static_cast<Eigen::Index>(matrix.model_index(id)));
  for (std::size_t i = 0; i < out.example_ids.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(matrix.example_index(out.example_ids[i]));
    for (std::size_t l = 0; l < rows.size(); ++l)
      out.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = matrix.values()(rows[l], c);
  }
  return out;
}

/// (alpha_i, beta_i) for every example of the scenario.
inline ExampleEmbeddings irt_embeddings(const IrtModel& model, const Scenario& scenario) {
  ExampleEmbeddings out;
  out.example_ids = scenario.examples();
  const auto d = static_cast<Eigen::Index>(model.dim());
  out.vectors.resize(static_cast<Eigen::Index>(out.example_ids.size()), d + 1);
  for (std::size_t i = 0; i < out.example_ids.size(); ++i) {
    const auto item = static_cast<Eigen::Index>(model.item_index(out.example_ids[i]));
    const auto r = static_cast<Eigen::Index>(i);
    out.vectors.row(r).head(d) = model.alpha().row(item);
    out.vectors(r, d) = model.beta()(item);
  }
  return out;
}

// ---------------------------------------------------------------------------
// K-means

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;            // K x dim
  std::vector<std::size_t> assignment;  // cluster per point
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_trace;  // after every centroid update
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double sq_dist(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

inline KMeansResult lloyd(const RowMatrix& x, std::size_t k, Rng& rng, int max_iterations) {
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  const auto kk = static_cast<Eigen::Index>(k);

  // k-means++ seeding.
  RowMatrix centers(kk, dim);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  auto take = [&](Eigen::Index c, Eigen::Index p) {
    centers.row(c) = x.row(p);
    chosen[static_cast<std::size_t>(p)] = 1;
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], sq_dist(x.row(i).data(), centers.row(c).data(), dim));
  };
  take(0, std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  for (Eigen::Index c = 1; c < kk; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> dist(d2.begin(), d2.end());
      pick = dist(rng);
    } else {
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) free.push_back(i);
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    take(c, pick);
  }

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  auto assign = [&](bool first) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      std::size_t best = first ? 0 : res.assignment[si];
      double best_d = sq_dist(x.row(i).data(), centers.row(static_cast<Eigen::Index>(best)).data(), dim);
      for (Eigen::Index c = 0; c < kk; ++c) {
        const double dc = sq_dist(x.row(i).data(), centers.row(c).data(), dim);
        // Strict improvement only, so an equidistant current cluster is kept.
        if (dc < best_d) {
          best_d = dc;
          best = static_cast<std::size_t>(c);
        }
      }
      changed |= best != res.assignment[si];
      res.assignment[si] = best;
      dist[si] = best_d;
    }
    return changed;
  };
  auto repair_and_update = [&] {
    std::vector<std::size_t> size(k, 0);
    for (auto a : res.assignment) ++size[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (size[c] > 0) continue;
      // Move the point farthest from its centroid (from a cluster that can spare it).
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        if (size[res.assignment[si]] < 2) continue;
        if (far < 0 || dist[si] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      const auto sf = static_cast<std::size_t>(far);
      --size[res.assignment[sf]];
      res.assignment[sf] = c;
      dist[sf] = 0.0;
      ++size[c];
    }
    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      centers.row(static_cast<Eigen::Index>(res.assignment[static_cast<std::size_t>(i)])) += x.row(i);
    for (std::size_t c = 0; c < k; ++c) centers.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(size[c]);
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      dist[si] = sq_dist(x.row(i).data(), centers.row(static_cast<Eigen::Index>(res.assignment[si])).data(), dim);
      inertia += dist[si];
    }
    res.inertia_trace.push_back(inertia);
    res.inertia = inertia;
  };

  assign(true);
  repair_and_update();
  for (res.iterations = 1; res.iterations < max_iterations; ++res.iterations) {
    if (!assign(false)) break;
    repair_and_update();
  }

  // Hartigan refinement: move single points while that strictly lowers the
  // inertia, accounting for the centroid shift the move causes.
  std::vector<double> size(k, 0.0);
  for (auto a : res.assignment) size[a] += 1.0;
  bool moved = true;
  for (int pass = 0; moved && pass < max_iterations; ++pass) {
    moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const std::size_t from = res.assignment[si];
      if (size[from] < 2.0) continue;
      const auto cf = static_cast<Eigen::Index>(from);
      const double removal = size[from] / (size[from] - 1.0) * sq_dist(x.row(i).data(), centers.row(cf).data(), dim);
      std::size_t to = from;
      double best_gain = 1e-12 * (1.0 + removal);
      for (std::size_t c = 0; c < k; ++c) {
        if (c == from) continue;
        const auto cc = static_cast<Eigen::Index>(c);
        const double addition = size[c] / (size[c] + 1.0) * sq_dist(x.row(i).data(), centers.row(cc).data(), dim);
        if (removal - addition > best_gain) {
          best_gain = removal - addition;
          to = c;
        }
      }
      if (to == from) continue;
      const auto ct = static_cast<Eigen::Index>(to);
      centers.row(cf) = (centers.row(cf) * size[from] - x.row(i)) / (size[from] - 1.0);
      centers.row(ct) = (centers.row(ct) * size[to] + x.row(i)) / (size[to] + 1.0);
      size[from] -= 1.0;
      size[to] += 1.0;
      res.assignment[si] = to;
      moved = true;
    }
    if (moved) repair_and_update();  // exact centroids and inertia after the pass
  }
  res.centroids = centers;
  return res;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding and a final Hartigan pass; keeps
/// the restart with the lowest inertia. Every cluster is nonempty;
/// deterministic given the seed.
inline KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "K must be at least 1");
  if (k > static_cast<std::size_t>(points.rows()))
    throw Error(ErrorKind::kInvalidArgument,
                "K = " + std::to_string(k) + " exceeds number of points " + std::to_string(points.rows()));
  require(options.restarts >= 1, "restarts must be positive");
  const detail::RowMatrix x = points;
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < options.restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansResult res = detail::lloyd(x, k, rng, options.max_iterations);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

/// Clusters the embeddings into K groups and picks, for every cluster, the
/// member nearest its centroid (ties: lowest example id). Anchor weight is
/// the balance-weight mass of the cluster.
inline AnchorSet select_anchors(const ExampleEmbeddings& embeddings, std::size_t k,
                                const ScenarioWeights& balance, std::uint64_t seed,
                                AnchorMethod method, const KMeansOptions& options = {}) {
  const KMeansResult km = kmeans(embeddings.vectors, k, seed, options);
  std::unordered_map<std::string, double> omega;
  for (std::size_t i = 0; i < balance.examples.size(); ++i) omega[balance.examples[i]] = balance.normalized[i];

  std::vector<double> mass(k, 0.0);
  std::vector<std::ptrdiff_t> nearest(k, -1);
  std::vector<double> nearest_d(k, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < embeddings.example_ids.size(); ++i) {
    const std::string& id = embeddings.example_ids[i];
    auto it = omega.find(id);
    if (it == omega.end()) throw Error(ErrorKind::kUnknownId, "example has no balance weight", id);
    const std::size_t c = km.assignment[i];
    mass[c] += it->second;
    const double d = (embeddings.vectors.row(static_cast<Eigen::Index>(i)) -
                      km.centroids.row(static_cast<Eigen::Index>(c)))
                         .squaredNorm();
    const bool better =
        nearest[c] < 0 || d < nearest_d[c] ||
        (d == nearest_d[c] && id < embeddings.example_ids[static_cast<std::size_t>(nearest[c])]);
    if (better) {
      nearest[c] = static_cast<std::ptrdiff_t>(i);
      nearest_d[c] = d;
    }
  }
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  std::vector<std::pair<std::size_t, double>> picked;
  for (std::size_t c = 0; c < k; ++c) picked.emplace_back(static_cast<std::size_t>(nearest[c]), mass[c] / total);
  std::sort(picked.begin(), picked.end());
  AnchorSet out{balance.scenario_id, method, {}};
  for (const auto& [i, w] : picked) out.anchors.push_back({embeddings.example_ids[i], w});
  return out;
}

/// Effective sample size of the weights, relative to the anchor count.
inline double ess(const AnchorSet& set) {
  double s = 0.0, s2 = 0.0;
  for (const auto& a : set.anchors) {
    s += a.weight;
    s2 += a.weight * a.weight;
  }
  if (set.anchors.empty() || s2 == 0.0) return 0.0;
  return (s * s / s2) / static_cast<double>(set.anchors.size());
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const AnchorSet& set) {
  nlohmann::ordered_json j;
  j["scenario"] = set.scenario_id;
  j["method"] = to_string(set.method);
  j["anchors"] = nlohmann::ordered_json::array();
  for (const auto& a : set.anchors) j["anchors"].push_back({{"example", a.example_id}, {"weight", a.weight}});
  return j;
}

inline AnchorSet anchor_set_from_json(const nlohmann::ordered_json& j) {
  try {
    AnchorSet set;
    set.scenario_id = j.at("scenario").get<std::string>();
    set.method = parse_anchor_method(j.at("method").get<std::string>());
    for (const auto& a : j.at("anchors"))
      set.anchors.push_back({a.at("example").get<std::string>(), a.at("weight").get<double>()});
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("anchor JSON: ") + e.what());
  }
}

/// A file holds either one anchor set object or an array of them.
inline std::vector<AnchorSet> anchor_sets_from_json(const nlohmann::ordered_json& j) {
  std::vector<AnchorSet> out;
  if (j.is_array())
    for (const auto& e : j) out.push_back(anchor_set_from_json(e));
  else
    out.push_back(anchor_set_from_json(j));
  return out;
}

}  // namespace tinyeval

#endif  // TINYEVAL_ANCHORS_HPP_
