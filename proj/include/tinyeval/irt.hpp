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

// Multidimensional two-parameter logistic IRT model.
//
//   P(Y_il = 1) = sigmoid(alpha_i . theta_l - beta_i)
//
// Item parameters and abilities are fitted jointly by mean-field Gaussian
// variational inference under a hierarchical prior:
//
//   theta_l ~ N(mu_theta 1, I / u_theta)   alpha_i ~ N(mu_alpha 1, I / u_alpha)
//   beta_i  ~ N(mu_beta, 1 / u_beta)       mu_* ~ N(0, 10)   u_* ~ Gamma(1, 1)
//
// The evidence lower bound is maximized with Adam on reparameterized Monte
// Carlo gradients. Positive precisions are optimized on the log scale.

#ifndef TINYEVAL_IRT_HPP_
#define TINYEVAL_IRT_HPP_

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <unordered_map>

#include "tinyeval/common.hpp"
#include "tinyeval/corpus.hpp"

namespace tinyeval {

/// Variational means of the hierarchical prior parameters.
struct PriorParameters {
  double mu_theta = 0.0;
  double u_theta = 1.0;
  double mu_alpha = 0.0;
  double u_alpha = 1.0;
  double mu_beta = 0.0;
  double u_beta = 1.0;
};

struct IrtFitConfig {
  int epochs = 2000;
  double learning_rate = 0.1;
  int mc_samples = 1;
  // Hyperprior: mu_* ~ N(0, hyper_mean_variance), u_* ~ Gamma(shape, rate).
  double hyper_mean_variance = 10.0;
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;
  // Initial variational means ~ N(0, init_scale^2); initial log std-dev.
  double init_scale = 0.1;
  double init_log_std = -2.3;
  bool record_trace = true;
};

struct FitDiagnostics {
  double final_objective = 0.0;
  int iterations = 0;
  std::vector<double> objective_trace;  // ELBO estimate per epoch
};

class IrtModel {
 public:
  IrtModel() = default;
  IrtModel(std::vector<std::string> example_ids, Eigen::MatrixXd alpha, Eigen::VectorXd beta,
           std::vector<std::string> train_model_ids = {}, Eigen::MatrixXd theta = {},
           PriorParameters priors = {}, FitDiagnostics diagnostics = {})
      : example_ids_(std::move(example_ids)),
        alpha_(std::move(alpha)),
        beta_(std::move(beta)),
        train_model_ids_(std::move(train_model_ids)),
        theta_(std::move(theta)),
        priors_(priors),
        diagnostics_(std::move(diagnostics)) {
    if (alpha_.rows() != static_cast<Eigen::Index>(example_ids_.size()) ||
        beta_.size() != alpha_.rows())
      throw Error(ErrorKind::kInvalidArgument, "item parameter shapes do not match example ids");
    if (theta_.size() == 0) theta_.resize(0, alpha_.cols());
    if (theta_.rows() != static_cast<Eigen::Index>(train_model_ids_.size()) ||
        theta_.cols() != alpha_.cols())
      throw Error(ErrorKind::kInvalidArgument, "ability shapes do not match model ids");
    if (!alpha_.allFinite() || !beta_.allFinite() || !theta_.allFinite())
      throw Error(ErrorKind::kDivergence, "non-finite IRT parameters");
    for (std::size_t i = 0; i < example_ids_.size(); ++i)
      if (!index_.emplace(example_ids_[i], i).second)
        throw Error(ErrorKind::kDuplicateId, "duplicate item", example_ids_[i]);
  }

  std::size_t dim() const { return static_cast<std::size_t>(alpha_.cols()); }
  std::size_t num_items() const { return example_ids_.size(); }
  const std::vector<std::string>& example_ids() const { return example_ids_; }
  const Eigen::MatrixXd& alpha() const { return alpha_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  const std::vector<std::string>& train_model_ids() const { return train_model_ids_; }
  const Eigen::MatrixXd& train_abilities() const { return theta_; }
  const PriorParameters& priors() const { return priors_; }
  const FitDiagnostics& diagnostics() const { return diagnostics_; }

  bool has_item(const std::string& id) const { return index_.contains(id); }
  std::size_t item_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::kUnknownId, "item not in IRT model", id);
    return it->second;
  }
  std::vector<std::size_t> item_indices(std::span<const std::string> ids) const {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(item_index(id));
    return out;
  }

 private:
  std::vector<std::string> example_ids_;
  Eigen::MatrixXd alpha_;  // items x dim
  Eigen::VectorXd beta_;
  std::vector<std::string> train_model_ids_;
  Eigen::MatrixXd theta_;  // models x dim
  PriorParameters priors_;
  FitDiagnostics diagnostics_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Prediction

inline double predict_prob(const Eigen::Ref<const Eigen::VectorXd>& alpha, double beta,
                           const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (alpha.size() != theta.size())
    throw Error(ErrorKind::kInvalidArgument,
                "dimension mismatch: item has " + std::to_string(alpha.size()) +
                    " loadings, ability has " + std::to_string(theta.size()));
  return sigmoid(alpha.dot(theta) - beta);
}

inline double predict_prob(const IrtModel& model, std::size_t item, const Eigen::VectorXd& theta) {
  return predict_prob(model.alpha().row(static_cast<Eigen::Index>(item)).transpose(),
                      model.beta()(static_cast<Eigen::Index>(item)), theta);
}

inline double predict_prob(const IrtModel& model, const std::string& example,
                           const Eigen::VectorXd& theta) {
  return predict_prob(model, model.item_index(example), theta);
}

// ---------------------------------------------------------------------------
// Ability fitting: ridge-penalized logistic regression with fixed items.

struct AbilityOptions {
  double ridge = 1e-3;
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
  // When set, adds the fitted N(mu_theta 1, I / u_theta) prior (MAP).
  std::optional<PriorParameters> prior;
};

struct AbilityFit {
  Eigen::VectorXd theta;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline void check_binary(std::span<const double> ys) {
  for (double y : ys)
    if (y != 0.0 && y != 1.0) throw Error(ErrorKind::kInvalidArgument, "responses must be binary");
}

}  // namespace detail

/// sum_i [y_i eta_i - softplus(eta_i)] - penalty(theta), eta_i = alpha_i . theta - beta_i.
inline double ability_objective(const IrtModel& model, std::span<const std::size_t> items,
                                std::span<const double> ys, const Eigen::VectorXd& theta,
                                const AbilityOptions& options = {}) {
  double obj = -options.ridge * theta.squaredNorm();
  if (options.prior)
    obj -= 0.5 * options.prior->u_theta *
           (theta.array() - options.prior->mu_theta).matrix().squaredNorm();
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(items[k]);
    const double eta = model.alpha().row(i).dot(theta) - model.beta()(i);
    obj += ys[k] * eta - softplus(eta);
  }
  return obj;
}

inline Eigen::VectorXd ability_gradient(const IrtModel& model, std::span<const std::size_t> items,
                                        std::span<const double> ys, const Eigen::VectorXd& theta,
                                        const AbilityOptions& options = {}) {
  Eigen::VectorXd g = -2.0 * options.ridge * theta;
  if (options.prior)
    g.array() -= options.prior->u_theta * (theta.array() - options.prior->mu_theta);
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(items[k]);
    const double p = sigmoid(model.alpha().row(i).dot(theta) - model.beta()(i));
    g += (ys[k] - p) * model.alpha().row(i).transpose();
  }
  return g;
}

/// Maximizes the ability objective by damped Newton iteration, falling back
/// to gradient steps when the Newton direction fails to ascend.
inline AbilityFit fit_ability(const IrtModel& model, std::span<const std::size_t> items,
                              std::span<const double> ys, const AbilityOptions& options = {}) {
  if (items.empty()) throw Error(ErrorKind::kInvalidArgument, "no responses to fit an ability on");
  require(items.size() == ys.size(), "items and responses differ in length");
  detail::check_binary(ys);
  const auto d = static_cast<Eigen::Index>(model.dim());
  AbilityFit fit;
  fit.theta = Eigen::VectorXd::Zero(d);
  double obj = ability_objective(model, items, ys, fit.theta, options);
  for (fit.iterations = 0; fit.iterations < options.max_iterations; ++fit.iterations) {
    Eigen::VectorXd g = ability_gradient(model, items, ys, fit.theta, options);
    if (g.norm() < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    // Negative Hessian: sum p(1-p) a a^T + penalty curvature.
    Eigen::MatrixXd neg_h = Eigen::MatrixXd::Identity(d, d) * (2.0 * options.ridge);
    if (options.prior) neg_h.diagonal().array() += options.prior->u_theta;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(items[k]);
      const double p = sigmoid(model.alpha().row(i).dot(fit.theta) - model.beta()(i));
      neg_h.noalias() += p * (1.0 - p) * model.alpha().row(i).transpose() * model.alpha().row(i);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(g) <= 0.0) step = g;
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      Eigen::VectorXd candidate = fit.theta + t * step;
      const double cand_obj = ability_objective(model, items, ys, candidate, options);
      if (cand_obj >= obj) {
        improved = cand_obj > obj || t * step.norm() < 1e-14;
        fit.theta = std::move(candidate);
        obj = cand_obj;
        break;
      }
    }
    if (!improved) {
      fit.converged = g.norm() < 1e-6;
      break;
    }
  }
  return fit;
}

inline AbilityFit fit_ability(const IrtModel& model,
                              std::span<const std::pair<std::string, double>> responses,
                              const AbilityOptions& options = {}) {
  std::vector<std::size_t> items;
  std::vector<double> ys;
  for (const auto& [id, y] : responses) {
    items.push_back(model.item_index(id));
    ys.push_back(y);
  }
  return fit_ability(model, items, ys, options);
}

// ---------------------------------------------------------------------------
// Variational fit

namespace detail {

// One block of factorized Gaussian variational parameters with Adam state.
struct VariationalBlock {
  Eigen::ArrayXXd mean, log_std;
  Eigen::ArrayXXd m_mean, v_mean, m_log_std, v_log_std;
  Eigen::ArrayXXd eps, sample;

  VariationalBlock(Eigen::Index rows, Eigen::Index cols, double init_scale, double init_log_std,
                   Rng& rng) {
    std::normal_distribution<double> normal(0.0, init_scale);
    mean.resize(rows, cols);
    for (Eigen::Index i = 0; i < mean.size(); ++i) mean(i) = normal(rng);
    log_std = Eigen::ArrayXXd::Constant(rows, cols, init_log_std);
    m_mean = v_mean = m_log_std = v_log_std = Eigen::ArrayXXd::Zero(rows, cols);
    eps.resize(rows, cols);
  }

  void draw(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(rng);
    sample = mean + log_std.exp() * eps;
  }

  // Gaussian entropy up to an additive constant.
  double entropy() const { return log_std.sum(); }

  void adam_step(const Eigen::ArrayXXd& g_mean, const Eigen::ArrayXXd& g_log_std, double lr,
                 int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    m_mean = b1 * m_mean + (1 - b1) * g_mean;
    v_mean = b2 * v_mean + (1 - b2) * g_mean.square();
    m_log_std = b1 * m_log_std + (1 - b1) * g_log_std;
    v_log_std = b2 * v_log_std + (1 - b2) * g_log_std.square();
    mean += lr * (m_mean / c1) / ((v_mean / c2).sqrt() + eps_adam);
    log_std += lr * (m_log_std / c1) / ((v_log_std / c2).sqrt() + eps_adam);
  }
};

}  // namespace detail

/// Fits the 2PL model to a binary training matrix. Point estimates are the
/// variational means; deterministic given the seed.
inline IrtModel fit_irt(const CorrectnessMatrix& binary, std::size_t dim, std::uint64_t seed,
                        const IrtFitConfig& config = {}) {
  require(dim >= 1, "IRT dimension must be at least 1");
  require(binary.num_models() >= 1 && binary.num_examples() >= 1, "empty training matrix");
  require(config.epochs >= 1 && config.mc_samples >= 1, "epochs and mc_samples must be positive");
  const Eigen::MatrixXd& y = binary.values();
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y.data()[i] != 0.0 && y.data()[i] != 1.0)
      throw Error(ErrorKind::kInvalidArgument, "fit_irt needs binary correctness; run binarize first");

  const auto num_models = static_cast<Eigen::Index>(binary.num_models());
  const auto num_items = static_cast<Eigen::Index>(binary.num_examples());
  const auto d = static_cast<Eigen::Index>(dim);
  Rng rng(derive_seed(seed, "fit_irt"));

  using detail::VariationalBlock;
  VariationalBlock theta(num_models, d, config.init_scale, config.init_log_std, rng);
  VariationalBlock alpha(num_items, d, config.init_scale, config.init_log_std, rng);
  VariationalBlock beta(num_items, 1, config.init_scale, config.init_log_std, rng);
  // Rows: mu_theta, log u_theta, mu_alpha, log u_alpha, mu_beta, log u_beta.
  VariationalBlock hyper(6, 1, 0.0, config.init_log_std, rng);

  const double hv = config.hyper_mean_variance;
  const double shape = config.gamma_shape;
  const double rate = config.gamma_rate;
  const double log_2pi = std::log(2.0 * M_PI);
  const double total_latent = static_cast<double>(theta.mean.size() + alpha.mean.size() +
                                                  beta.mean.size() + hyper.mean.size());

  FitDiagnostics diag;
  if (config.record_trace) diag.objective_trace.reserve(static_cast<std::size_t>(config.epochs));

  Eigen::MatrixXd eta(num_models, num_items);
  Eigen::MatrixXd resid(num_models, num_items);
  Eigen::ArrayXXd z(num_models, num_items);
  Eigen::ArrayXXd g_theta, g_alpha, g_beta, g_hyper;
  Eigen::ArrayXXd gm_theta, gs_theta, gm_alpha, gs_alpha, gm_beta, gs_beta, gm_hyper, gs_hyper;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    gm_theta = gs_theta = Eigen::ArrayXXd::Zero(num_models, d);
    gm_alpha = gs_alpha = Eigen::ArrayXXd::Zero(num_items, d);
    gm_beta = gs_beta = Eigen::ArrayXXd::Zero(num_items, 1);
    gm_hyper = gs_hyper = Eigen::ArrayXXd::Zero(6, 1);
    double objective = 0.0;

    for (int s = 0; s < config.mc_samples; ++s) {
      theta.draw(rng);
      alpha.draw(rng);
      beta.draw(rng);
      hyper.draw(rng);
      const Eigen::MatrixXd th = theta.sample.matrix();
      const Eigen::MatrixXd al = alpha.sample.matrix();
      const Eigen::VectorXd be = beta.sample.col(0).matrix();

      eta.noalias() = th * al.transpose();
      eta.rowwise() -= be.transpose();
      // z = exp(-eta): sigmoid(eta) = 1 / (1 + z) and
      // log p(y | eta) = -log(1 + z) - (1 - y) eta. The clamp only guards overflow.
      z = (-eta.array()).min(700.0).exp();
      resid = y.array() - (1.0 + z).inverse();
      const bool want_objective = config.record_trace || epoch == config.epochs;
      double loglik = 0.0;
      if (want_objective) loglik = -((1.0 + z).log() + (1.0 - y.array()) * eta.array()).sum();
      g_theta = (resid * al).array();
      g_alpha = (resid.transpose() * th).array();
      g_beta = -resid.colwise().sum().transpose().array();

      const double mu_t = hyper.sample(0), lu_t = hyper.sample(1), u_t = std::exp(lu_t);
      const double mu_a = hyper.sample(2), lu_a = hyper.sample(3), u_a = std::exp(lu_a);
      const double mu_b = hyper.sample(4), lu_b = hyper.sample(5), u_b = std::exp(lu_b);
      const Eigen::ArrayXXd dt = theta.sample - mu_t;
      const Eigen::ArrayXXd da = alpha.sample - mu_a;
      const Eigen::ArrayXXd db = beta.sample - mu_b;
      const double st = dt.square().sum(), sa = da.square().sum(), sb = db.square().sum();
      const double nt = static_cast<double>(dt.size());
      const double na = static_cast<double>(da.size());
      const double nb = static_cast<double>(db.size());

      g_theta -= u_t * dt;
      g_alpha -= u_a * da;
      g_beta -= u_b * db;
      g_hyper.resize(6, 1);
      g_hyper(0) = u_t * dt.sum() - mu_t / hv;
      g_hyper(1) = 0.5 * nt - 0.5 * u_t * st + shape - rate * u_t;
      g_hyper(2) = u_a * da.sum() - mu_a / hv;
      g_hyper(3) = 0.5 * na - 0.5 * u_a * sa + shape - rate * u_a;
      g_hyper(4) = u_b * db.sum() - mu_b / hv;
      g_hyper(5) = 0.5 * nb - 0.5 * u_b * sb + shape - rate * u_b;

      if (want_objective) {
        double log_joint = loglik;
        log_joint += 0.5 * nt * (lu_t - log_2pi) - 0.5 * u_t * st;
        log_joint += 0.5 * na * (lu_a - log_2pi) - 0.5 * u_a * sa;
        log_joint += 0.5 * nb * (lu_b - log_2pi) - 0.5 * u_b * sb;
        for (double mu : {mu_t, mu_a, mu_b}) log_joint += -0.5 * (std::log(2 * M_PI * hv) + mu * mu / hv);
        // Gamma log density of u plus the log-Jacobian of u = exp(v).
        for (double lu : {lu_t, lu_a, lu_b})
          log_joint += shape * std::log(rate) - std::lgamma(shape) + shape * lu - rate * std::exp(lu);
        objective += log_joint;
      }

      gm_theta += g_theta;
      gs_theta += g_theta * theta.eps * theta.log_std.exp();
      gm_alpha += g_alpha;
      gs_alpha += g_alpha * alpha.eps * alpha.log_std.exp();
      gm_beta += g_beta;
      gs_beta += g_beta * beta.eps * beta.log_std.exp();
      gm_hyper += g_hyper;
      gs_hyper += g_hyper * hyper.eps * hyper.log_std.exp();
    }

    const double inv = 1.0 / config.mc_samples;
    // Entropy term contributes +1 to every log-std gradient.
    theta.adam_step(gm_theta * inv, gs_theta * inv + 1.0, config.learning_rate, epoch);
    alpha.adam_step(gm_alpha * inv, gs_alpha * inv + 1.0, config.learning_rate, epoch);
    beta.adam_step(gm_beta * inv, gs_beta * inv + 1.0, config.learning_rate, epoch);
    hyper.adam_step(gm_hyper * inv, gs_hyper * inv + 1.0, config.learning_rate, epoch);

    if (config.record_trace || epoch == config.epochs) {
      const double entropy = theta.entropy() + alpha.entropy() + beta.entropy() + hyper.entropy() +
                             0.5 * total_latent * (1.0 + log_2pi);
      const double elbo = objective * inv + entropy;
      if (!std::isfinite(elbo))
        throw Error(ErrorKind::kDivergence,
                    "ELBO became non-finite at epoch " + std::to_string(epoch) + " (dim " +
                        std::to_string(dim) + ", lr " + format_double(config.learning_rate) + ")");
      if (config.record_trace) diag.objective_trace.push_back(elbo);
      diag.final_objective = elbo;
    }
    if (!theta.mean.allFinite() || !alpha.mean.allFinite() || !beta.mean.allFinite())
      throw Error(ErrorKind::kDivergence,
                  "variational parameters became non-finite at epoch " + std::to_string(epoch));
    diag.iterations = epoch;
  }

  PriorParameters priors;
  auto lognormal_mean = [&](int row) {
    return std::exp(hyper.mean(row) + 0.5 * std::exp(2.0 * hyper.log_std(row)));
  };
  priors.mu_theta = hyper.mean(0);
  priors.u_theta = lognormal_mean(1);
  priors.mu_alpha = hyper.mean(2);
  priors.u_alpha = lognormal_mean(3);
  priors.mu_beta = hyper.mean(4);
  priors.u_beta = lognormal_mean(5);

  return IrtModel(binary.example_ids(), alpha.mean.matrix(), beta.mean.col(0).matrix(),
                  binary.model_ids(), theta.mean.matrix(), priors, std::move(diag));
}

// ---------------------------------------------------------------------------
// Dimension selection

struct DimensionScore {
  std::size_t dim = 0;
  double validation_loglik = 0.0;  // mean per held-out response
};

struct DimensionSelection {
  std::size_t dim = 0;
  std::vector<DimensionScore> scores;
};

/// Highest validation log-likelihood; ties go to the smaller dimension.
inline std::size_t best_dimension(std::span<const DimensionScore> scores) {
  require(!scores.empty(), "no dimension scores");
  const DimensionScore* best = &scores.front();
  for (const auto& s : scores)
    if (s.validation_loglik > best->validation_loglik ||
        (s.validation_loglik == best->validation_loglik && s.dim < best->dim))
      best = &s;
  return best->dim;
}

/// Mean held-out log-likelihood for a fitted model: for every validation
/// model, abilities are fitted on `fit_items` and scored on the rest.
inline double heldout_loglik(const IrtModel& model, const CorrectnessMatrix& binary,
                             std::span<const std::string> validation_models, std::uint64_t seed) {
  double total = 0.0;
  std::size_t count = 0;
  const std::size_t n = binary.num_examples();
  for (const auto& id : validation_models) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, id));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t half = n / 2;
    const auto row = static_cast<Eigen::Index>(binary.model_index(id));
    std::vector<std::size_t> fit_items, eval_items;
    std::vector<double> fit_y;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t col = order[k];
      const std::size_t item = model.item_index(binary.example_ids()[col]);
      if (k < half) {
        fit_items.push_back(item);
        fit_y.push_back(binary.values()(row, static_cast<Eigen::Index>(col)));
      } else {
        eval_items.push_back(item);
      }
    }
    if (fit_items.empty()) continue;
    const AbilityFit fit = fit_ability(model, fit_items, fit_y);
    for (std::size_t k = half; k < n; ++k) {
      const std::size_t col = order[k];
      const double yv = binary.values()(row, static_cast<Eigen::Index>(col));
      const std::size_t item = eval_items[k - half];
      const auto i = static_cast<Eigen::Index>(item);
      const double eta = model.alpha().row(i).dot(fit.theta) - model.beta()(i);
      total += yv * eta - softplus(eta);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

/// Chooses the latent dimension with the best held-out predictive
/// log-likelihood on an 80/20 split of the training models. Ties go to the
/// smaller dimension.
inline DimensionSelection select_dimension(const CorrectnessMatrix& binary,
                                           std::vector<std::size_t> candidates, std::uint64_t seed,
                                           const IrtFitConfig& config = {}) {
  require(!candidates.empty(), "no candidate dimensions");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.size() == 1) return {candidates[0], {{candidates[0], 0.0}}};
  if (binary.num_models() < 8)
    throw Error(ErrorKind::kInvalidArgument,
                "dimension selection needs at least 8 training models, got " +
                    std::to_string(binary.num_models()));
  SplitSpec split;
  split.test_fraction = 0.2;
  split.seed = derive_seed(seed, "dimension_split");
  const ModelSplit parts = split_models(binary, split);
  const CorrectnessMatrix fit_part = binary.select_models(parts.train);

  DimensionSelection out;
  out.scores.resize(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const IrtModel model = fit_irt(fit_part, candidates[k], derive_seed(seed, candidates[k]), config);
    out.scores[k] = {candidates[k],
                     heldout_loglik(model, binary, parts.test, derive_seed(seed, "heldout_items"))};
  }
  out.dim = best_dimension(out.scores);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const PriorParameters& p) {
  return {{"mu_theta", p.mu_theta}, {"u_theta", p.u_theta}, {"mu_alpha", p.mu_alpha},
          {"u_alpha", p.u_alpha},   {"mu_beta", p.mu_beta}, {"u_beta", p.u_beta}};
}

inline nlohmann::ordered_json to_json(const IrtModel& model) {
  nlohmann::ordered_json j;
  j["dim"] = model.dim();
  nlohmann::ordered_json items = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < model.num_items(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::vector<double> a;
    for (Eigen::Index k = 0; k < model.alpha().cols(); ++k) a.push_back(model.alpha()(r, k));
    items[model.example_ids()[i]] = {{"alpha", a}, {"beta", model.beta()(r)}};
  }
  j["items"] = std::move(items);
  nlohmann::ordered_json abilities = nlohmann::ordered_json::object();
  for (std::size_t l = 0; l < model.train_model_ids().size(); ++l) {
    std::vector<double> t;
    for (Eigen::Index k = 0; k < model.train_abilities().cols(); ++k)
      t.push_back(model.train_abilities()(static_cast<Eigen::Index>(l), k));
    abilities[model.train_model_ids()[l]] = t;
  }
  j["train_abilities"] = std::move(abilities);
  j["priors"] = to_json(model.priors());
  j["diagnostics"] = {{"final_objective", model.diagnostics().final_objective},
                      {"iterations", model.diagnostics().iterations}};
  return j;
}

inline IrtModel irt_model_from_json(const nlohmann::ordered_json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<std::string> ids;
    const auto& items = j.at("items");
    Eigen::MatrixXd alpha(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd beta(static_cast<Eigen::Index>(items.size()));
    Eigen::Index r = 0;
    for (const auto& [id, item] : items.items()) {
      const auto a = item.at("alpha").get<std::vector<double>>();
      if (a.size() != dim) throw Error(ErrorKind::kParse, "alpha length differs from dim", id);
      for (std::size_t k = 0; k < dim; ++k) alpha(r, static_cast<Eigen::Index>(k)) = a[k];
      beta(r) = item.at("beta").get<double>();
      ids.push_back(id);
      ++r;
    }
    std::vector<std::string> models;
    Eigen::MatrixXd theta(0, static_cast<Eigen::Index>(dim));
    if (j.contains("train_abilities")) {
      const auto& ab = j.at("train_abilities");
      theta.resize(static_cast<Eigen::Index>(ab.size()), static_cast<Eigen::Index>(dim));
      Eigen::Index l = 0;
      for (const auto& [id, t] : ab.items()) {
        const auto v = t.get<std::vector<double>>();
        if (v.size() != dim) throw Error(ErrorKind::kParse, "ability length differs from dim", id);
        for (std::size_t k = 0; k < dim; ++k) theta(l, static_cast<Eigen::Index>(k)) = v[k];
        models.push_back(id);
        ++l;
      }
    }
    PriorParameters p;
    if (j.contains("priors")) {
      const auto& jp = j.at("priors");
      p.mu_theta = jp.value("mu_theta", 0.0);
      p.u_theta = jp.value("u_theta", 1.0);
      p.mu_alpha = jp.value("mu_alpha", 0.0);
      p.u_alpha = jp.value("u_alpha", 1.0);
      p.mu_beta = jp.value("mu_beta", 0.0);
      p.u_beta = jp.value("u_beta", 1.0);
    }
    FitDiagnostics diag;
    if (j.contains("diagnostics")) {
      diag.final_objective = j["diagnostics"].value("final_objective", 0.0);
      diag.iterations = j["diagnostics"].value("iterations", 0);
    }
    return IrtModel(std::move(ids), std::move(alpha), std::move(beta), std::move(models),
                    std::move(theta), p, std::move(diag));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("IRT model JSON: ") + e.what());
  }
}

}  // namespace tinyeval

#endif  // TINYEVAL_IRT_HPP_
