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

// tinyeval command line: synth, fit, anchors, estimate, evaluate.
// Every subcommand takes --config <json>; explicit flags override it.

#include <CLI/CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "tinyeval/tinyeval.hpp"

namespace {

using nlohmann::json;
using namespace tinyeval;

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("config: ") + e.what(), path);
  }
}

// Returns the flag value if it was given, else the config entry, else `fallback`.
template <typename T>
T pick(const CLI::App* app, const char* flag, const T& flag_value, const json& cfg, const char* key,
       const T& fallback) {
  if (app->count(flag) > 0) return flag_value;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

// Like pick for file paths; a relative path taken from the config resolves
// against the config file's directory.
std::string pick_path(const CLI::App* app, const char* flag, const std::string& flag_value, const json& cfg,
                      const char* key, const std::string& config_path) {
  if (app->count(flag) > 0) return flag_value;
  if (!cfg.contains(key)) return {};
  const std::filesystem::path p = cfg.at(key).get<std::string>();
  return p.is_relative() ? (std::filesystem::path(config_path).parent_path() / p).string() : p.string();
}

std::uint64_t require_seed(const CLI::App* app, std::uint64_t flag_value, const json& cfg) {
  if (app->count("--seed") > 0) return flag_value;
  if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
  throw Error(ErrorKind::kInvalidArgument, "--seed is required for this command");
}

void ensure_parent(const std::string& file) {
  const auto parent = std::filesystem::path(file).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string config, out = "synthetic";
  std::uint64_t seed = 0;
  std::size_t models = 0, dim = 0;
};

void run_synth(const CLI::App* app, const SynthArgs& a) {
  const json cfg = load_config(a.config);
  SyntheticSpec spec = synthetic_spec_from_json(cfg);
  spec.seed = require_seed(app, a.seed, cfg);
  if (app->count("--models")) spec.num_models = a.models;
  if (app->count("--dim")) spec.dim = a.dim;
  const std::string out = pick<std::string>(app, "--out", a.out, cfg, "out", "synthetic");
  const SyntheticBenchmark bench = generate_synthetic(spec);
  std::filesystem::create_directories(out);
  const std::filesystem::path root(out);
  write_file((root / "matrix.csv").string(), to_csv(bench.matrix));
  write_file((root / "spec.json").string(), to_json(bench.spec).dump(2) + "\n");
  write_file((root / "metadata.csv").string(), metadata_to_csv(bench.matrix));
  nlohmann::ordered_json truth;
  truth["synthetic"] = to_json(spec);
  for (Eigen::Index l = 0; l < bench.theta.rows(); ++l) {
    std::vector<double> t;
    for (Eigen::Index k = 0; k < bench.theta.cols(); ++k) t.push_back(bench.theta(l, k));
    truth["theta"][bench.matrix.model_ids()[static_cast<std::size_t>(l)]] = t;
  }
  for (Eigen::Index i = 0; i < bench.alpha.rows(); ++i) {
    std::vector<double> al;
    for (Eigen::Index k = 0; k < bench.alpha.cols(); ++k) al.push_back(bench.alpha(i, k));
    truth["items"][bench.matrix.example_ids()[static_cast<std::size_t>(i)]] = {{"alpha", al},
                                                                              {"beta", bench.beta(i)}};
  }
  write_file((root / "truth.json").string(), truth.dump(2) + "\n");
  std::cout << "wrote " << bench.matrix.num_models() << " x " << bench.matrix.num_examples() << " benchmark to "
            << out << "\n";
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
  std::string config, matrix, spec, metadata, out;
  std::uint64_t seed = 0;
  std::vector<std::size_t> dims;
  int epochs = 0;
};

void run_fit(const CLI::App* app, const FitArgs& a) {
  const json cfg = load_config(a.config);
  const std::uint64_t seed = require_seed(app, a.seed, cfg);
  const Corpus corpus = ingest(pick_path(app, "--matrix", a.matrix, cfg, "matrix", a.config),
                               pick_path(app, "--spec", a.spec, cfg, "spec", a.config),
                               pick_path(app, "--metadata", a.metadata, cfg, "metadata", a.config));
  const auto dims = pick<std::vector<std::size_t>>(app, "--dims", a.dims, cfg, "dims", {2, 5, 10, 15});
  IrtFitConfig fit;
  fit.epochs = pick<int>(app, "--epochs", a.epochs, cfg, "epochs", fit.epochs);
  fit.record_trace = false;
  const std::string out = pick<std::string>(app, "--out", a.out, cfg, "out", "model.json");

  const auto& train = corpus.matrix.model_ids();
  const Binarized bin = binarize(corpus.matrix, corpus.spec, train);
  const DimensionSelection sel = select_dimension(bin.matrix, dims, derive_seed(seed, "dims"), fit);
  ModelBundle bundle{fit_irt(bin.matrix, sel.dim, derive_seed(seed, "irt"), fit), bin.thresholds, {}, sel.scores};
  std::vector<double> bias(corpus.spec.scenarios.size(), 0.0);
  if (train.size() >= 8)
    bias = estimate_bias(corpus.matrix, bin.matrix, corpus.spec, train, sel.dim, derive_seed(seed, "bias"), fit);
  else
    std::cerr << "warning: fewer than 8 models, bias set to 0 (gp-IRT reduces to p-IRT)\n";
  const double divisor = cfg.value("anchor_variance_divisor", 4.0);
  for (std::size_t j = 0; j < corpus.spec.scenarios.size(); ++j) {
    const auto& sc = corpus.spec.scenarios[j];
    bundle.calibration.push_back(
        {sc.id, sc.size() >= 2 ? estimate_sigma2(corpus.matrix, train, sc) : 0.0, bias[j], divisor});
  }
  ensure_parent(out);
  write_file(out, to_json(bundle).dump(2) + "\n");
  std::cout << "fitted d=" << sel.dim << " on " << train.size() << " models; wrote " << out << "\n";
}

// --- anchors ----------------------------------------------------------------

struct AnchorArgs {
  std::string config, matrix, spec, model, method, out;
  std::uint64_t seed = 0;
  std::size_t n = 0;
};

void run_anchors(const CLI::App* app, const AnchorArgs& a) {
  const json cfg = load_config(a.config);
  const std::uint64_t seed = require_seed(app, a.seed, cfg);
  const AnchorMethod method = parse_anchor_method(pick<std::string>(app, "--method", a.method, cfg, "method", "irt"));
  const std::size_t n = pick<std::size_t>(app, "--n", a.n, cfg, "n", 100);
  const std::string out = pick<std::string>(app, "--out", a.out, cfg, "out", "anchors.json");
  const BenchmarkSpec spec = parse_spec_json(read_file(pick_path(app, "--spec", a.spec, cfg, "spec", a.config)));
  const BalanceWeights weights = compute_balance_weights(spec);

  std::optional<CorrectnessMatrix> matrix;
  std::optional<IrtModel> model;
  if (method == AnchorMethod::kCorrectness) {
    matrix = parse_correctness_csv(read_file(pick_path(app, "--matrix", a.matrix, cfg, "matrix", a.config)));
    validate(*matrix, spec);
  }
  if (method == AnchorMethod::kIrt)
    model = model_bundle_from_json(json::parse(read_file(pick_path(app, "--model", a.model, cfg, "model", a.config))))
                .model;

  nlohmann::ordered_json result = nlohmann::ordered_json::array();
  for (const auto& sc : spec.scenarios) {
    const std::uint64_t s = derive_seed(seed, sc.id);
    AnchorSet set;
    if (method == AnchorMethod::kRandom)
      set = stratified_sample(spec, sc.id, n, s);
    else if (method == AnchorMethod::kCorrectness)
      set = select_anchors(correctness_embeddings(*matrix, matrix->model_ids(), sc), n, weights.scenario(sc.id), s,
                           method);
    else
      set = select_anchors(irt_embeddings(*model, sc), n, weights.scenario(sc.id), s, method);
    result.push_back(to_json(set));
    std::cout << sc.id << ": " << set.anchors.size() << " anchors, ess " << ess(set) << "\n";
  }
  ensure_parent(out);
  write_file(out, result.dump(2) + "\n");
}

// --- estimate ---------------------------------------------------------------

struct EstimateArgs {
  std::string config, model, anchors, responses, spec, out;
};

void run_estimate(const CLI::App* app, const EstimateArgs& a) {
  const json cfg = load_config(a.config);
  const ModelBundle bundle =
      model_bundle_from_json(json::parse(read_file(pick_path(app, "--model", a.model, cfg, "model", a.config))));
  const auto sets =
      anchor_sets_from_json(json::parse(read_file(pick_path(app, "--anchors", a.anchors, cfg, "anchors", a.config))));
  const BenchmarkSpec spec = parse_spec_json(read_file(pick_path(app, "--spec", a.spec, cfg, "spec", a.config)));
  const BalanceWeights weights = compute_balance_weights(spec);
  const CorrectnessMatrix responses =
      parse_correctness_csv(read_file(pick_path(app, "--responses", a.responses, cfg, "responses", a.config)));
  const std::string out = pick<std::string>(app, "--out", a.out, cfg, "out", "");

  for (const auto& set : sets) validate(set, spec.scenario(set.scenario_id));
  std::string text = estimates_csv_header();
  for (const auto& model_id : responses.model_ids()) {
    Responses raw;
    std::vector<std::size_t> items;
    std::vector<double> ys;
    for (const auto& set : sets) {
      const double cutoff = bundle.cutoff(set.scenario_id);
      for (const auto& anchor : set.anchors) {
        if (!responses.has_example(anchor.example_id))
          throw Error(ErrorKind::kMissingCoverage, "responses lack anchor example", anchor.example_id);
        const double y = responses.value(model_id, anchor.example_id);
        raw[anchor.example_id] = y;
        items.push_back(bundle.model.item_index(anchor.example_id));
        ys.push_back(y >= cutoff ? 1.0 : 0.0);
      }
    }
    const Eigen::VectorXd theta = fit_ability(bundle.model, items, ys).theta;
    for (const auto& set : sets) {
      const Scenario& sc = spec.scenario(set.scenario_id);
      const ScoreEstimate nv = naive_estimate(set, raw, sc.size(), model_id);
      const ScoreEstimate pe =
          pirt_estimate(bundle.model, theta, set.example_ids(), raw, weights.scenario(sc.id), model_id);
      const SamplingKind kind = set.method == AnchorMethod::kRandom ? SamplingKind::kRandom : SamplingKind::kAnchor;
      const ScoreEstimate gp =
          gpirt_estimate(nv, pe, gpirt_lambda(bundle.stats(sc.id), set.anchors.size(), kind));
      text += to_csv_row(nv) + to_csv_row(pe) + to_csv_row(gp);
    }
  }
  if (out.empty()) {
    std::cout << text;
  } else {
    ensure_parent(out);
    write_file(out, text);
  }
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string config, matrix, spec, metadata, out, split, aggregation;
  std::uint64_t seed = 0;
  std::size_t restarts = 5;
  double test_fraction = 0.25;
  std::size_t folds = 11, origins = 1;
  std::vector<std::size_t> counts, dims;
  std::vector<std::string> strategies;
  int epochs = 0;
};

void run_evaluate(const CLI::App* app, const EvaluateArgs& a) {
  const json cfg = load_config(a.config);
  ExperimentConfig c = experiment_config_from_json(cfg);
  // Data paths inside a config file are relative to that file.
  const auto base = std::filesystem::path(a.config).parent_path();
  for (std::string* path : {&c.matrix_path, &c.spec_path, &c.metadata_path})
    if (!path->empty() && std::filesystem::path(*path).is_relative()) *path = (base / *path).string();
  if (app->count("--matrix")) {
    c.matrix_path = a.matrix;
    c.synthetic.reset();
  }
  if (app->count("--spec")) c.spec_path = a.spec;
  if (app->count("--metadata")) c.metadata_path = a.metadata;
  if (app->count("--out")) c.output_dir = a.out;
  if (app->count("--split")) c.split.mode = parse_split_mode(a.split);
  if (app->count("--test-fraction")) c.split.test_fraction = a.test_fraction;
  if (app->count("--folds")) c.split.folds = a.folds;
  if (app->count("--origins")) c.split.origins = a.origins;
  if (app->count("--aggregation")) c.aggregation = parse_aggregation(a.aggregation);
  if (app->count("--anchor-counts")) c.anchor_counts = a.counts;
  if (app->count("--dims")) c.dims = a.dims;
  if (app->count("--epochs")) c.irt.epochs = a.epochs;
  if (app->count("--strategies")) {
    c.strategies.clear();
    for (const auto& s : a.strategies) c.strategies.push_back(parse_strategy(s));
  }
  // The base seed expands into one derived seed per restart.
  if (app->count("--seed")) {
    c.seeds.clear();
    for (std::size_t r = 0; r < a.restarts; ++r) c.seeds.push_back(a.seed + r);
  } else if (!cfg.contains("seeds")) {
    throw Error(ErrorKind::kInvalidArgument, "--seed is required (or a \"seeds\" list in the config)");
  }
  const EvaluationReport report = run_experiment(c);
  emit_report(report, c.output_dir);
  for (const auto& p : report.curves())
    std::cout << p.strategy << " n=" << p.n << " mean_error=" << p.mean_error << " std=" << p.std_error << "\n";
  for (const auto& f : report.failures)
    std::cerr << "failed cell " << f.strategy << " n=" << f.n << " seed=" << f.seed << ": " << f.message << "\n";
  std::cout << "wrote report to " << c.output_dir << " (" << report.seconds << " s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyeval: estimate benchmark scores from a few anchor examples"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic IRT benchmark");
  s->add_option("--config", synth.config, "JSON config");
  s->add_option("--seed", synth.seed, "random seed (required)");
  s->add_option("--models", synth.models, "number of models");
  s->add_option("--dim", synth.dim, "latent dimension");
  s->add_option("--out", synth.out, "output directory");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit the IRT model and calibration on a correctness matrix");
  f->add_option("--config", fit.config, "JSON config");
  f->add_option("--matrix", fit.matrix, "correctness CSV");
  f->add_option("--spec", fit.spec, "benchmark spec JSON");
  f->add_option("--metadata", fit.metadata, "model metadata CSV");
  f->add_option("--seed", fit.seed, "random seed (required)");
  f->add_option("--dims", fit.dims, "candidate dimensions");
  f->add_option("--epochs", fit.epochs, "optimizer epochs");
  f->add_option("--out", fit.out, "model JSON output");

  AnchorArgs anchors;
  auto* an = app.add_subcommand("anchors", "select weighted anchor examples per scenario");
  an->add_option("--config", anchors.config, "JSON config");
  an->add_option("--matrix", anchors.matrix, "correctness CSV (correctness method)");
  an->add_option("--spec", anchors.spec, "benchmark spec JSON");
  an->add_option("--model", anchors.model, "model JSON (irt method)");
  an->add_option("--method", anchors.method, "random | correctness | irt");
  an->add_option("--n", anchors.n, "anchors per scenario");
  an->add_option("--seed", anchors.seed, "random seed (required)");
  an->add_option("--out", anchors.out, "anchor JSON output");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "estimate scenario scores from anchor responses");
  e->add_option("--config", est.config, "JSON config");
  e->add_option("--model", est.model, "model JSON");
  e->add_option("--anchors", est.anchors, "anchor JSON");
  e->add_option("--responses", est.responses, "CSV of new models' scores on the anchors");
  e->add_option("--spec", est.spec, "benchmark spec JSON");
  e->add_option("--out", est.out, "estimates CSV (stdout when omitted)");

  EvaluateArgs ev;
  auto* v = app.add_subcommand("evaluate", "run the full train/test evaluation sweep");
  v->add_option("--config", ev.config, "experiment JSON config");
  v->add_option("--matrix", ev.matrix, "correctness CSV");
  v->add_option("--spec", ev.spec, "benchmark spec JSON");
  v->add_option("--metadata", ev.metadata, "model metadata CSV");
  v->add_option("--seed", ev.seed, "base seed");
  v->add_option("--restarts", ev.restarts, "number of seeds derived from the base seed");
  v->add_option("--split", ev.split, "random | by_date | by_group | k_fold");
  v->add_option("--test-fraction", ev.test_fraction, "test fraction");
  v->add_option("--folds", ev.folds, "fold count for k_fold");
  v->add_option("--origins", ev.origins, "rolling origins for by_date");
  v->add_option("--aggregation", ev.aggregation, "mean | mean_win_rate");
  v->add_option("--anchor-counts", ev.counts, "anchor counts per scenario");
  v->add_option("--dims", ev.dims, "candidate IRT dimensions");
  v->add_option("--strategies", ev.strategies, "strategies, e.g. random irt++ adaptive");
  v->add_option("--epochs", ev.epochs, "optimizer epochs");
  v->add_option("--out", ev.out, "output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) run_synth(s, synth);
    if (*f) run_fit(f, fit);
    if (*an) run_anchors(an, anchors);
    if (*e) run_estimate(e, est);
    if (*v) run_evaluate(v, ev);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what();
    if (!err.id().empty()) std::cerr << " [" << err.id() << "]";
    std::cerr << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
