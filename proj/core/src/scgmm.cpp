#include "wdl/scgmm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "wdl/errors.hpp"

namespace wdl {
namespace {

constexpr std::size_t kMinTrainingRows = 20;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t h, double v) {
  // +0.0 and -0.0 hash alike.
  const std::uint64_t bits = v == 0.0 ? 0 : std::bit_cast<std::uint64_t>(v);
  return splitmix64(h ^ splitmix64(bits));
}

std::uint64_t row_key(const DistributionalDataset& data, std::size_t i, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  for (double v : data.covariates().row(i)) h = hash_combine(h, v);
  const auto& g = data.outcomes()[i];
  for (std::size_t idx : g.order()) {
    h = hash_combine(h, g.points()[idx]);
    h = hash_combine(h, g.weight(idx));
  }
  return h;
}

// Constant starting values from the pooled training outcomes: equal-mass
// slice means for the component means, the pooled sd for every log-sd.
NaturalParams initial_naturals(std::span<const EmpiricalDistribution* const> outcomes, std::size_t k_count,
                               bool zero_init) {
  NaturalParams base{std::vector<double>(k_count, 0.0), std::vector<double>(k_count, 0.0),
                     std::vector<double>(k_count, 0.0)};
  if (zero_init) return base;

  std::vector<std::pair<double, double>> pooled;
  const double per_sample = 1.0 / static_cast<double>(outcomes.size());
  for (const auto* g : outcomes) {
    for (std::size_t j = 0; j < g->size(); ++j) pooled.emplace_back(g->points()[j], per_sample * g->weight(j));
  }
  std::stable_sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double total = 0.0;
  double mean = 0.0;
  for (const auto& [v, w] : pooled) {
    total += w;
    mean += w * v;
  }
  mean /= total;
  double var = 0.0;
  for (const auto& [v, w] : pooled) var += w * (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / total), kSdFloor);

  std::vector<double> slice_sum(k_count, 0.0);
  std::vector<double> slice_weight(k_count, 0.0);
  double before = 0.0;
  for (const auto& [v, w] : pooled) {
    const double mid = (before + 0.5 * w) / total;
    before += w;
    const auto slot = std::min(k_count - 1, static_cast<std::size_t>(mid * static_cast<double>(k_count)));
    slice_sum[slot] += w * v;
    slice_weight[slot] += w;
  }
  double last = pooled.front().first;
  for (std::size_t k = 0; k < k_count; ++k) {
    base.mu[k] = slice_weight[k] > 0.0 ? slice_sum[k] / slice_weight[k] : last;
    last = base.mu[k];
    base.z[k] = std::log(sd);
  }
  return base;
}

std::vector<double> centered_logits(std::span<const double> weights) {
  std::vector<double> out(weights.size());
  double mean = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out[k] = std::log(std::max(weights[k], kWeightFloor));
    mean += out[k];
  }
  mean /= static_cast<double>(weights.size());
  for (auto& v : out) v -= mean;
  return out;
}

double mean_loss(std::span<const QuantileFunction> observed, std::span<const GaussianMixtureParams> thetas,
                 const LevelGrid& grid) {
  if (observed.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    total += w2_squared(observed[i], gmm_quantile_function(thetas[i], grid));
  }
  return total / static_cast<double>(observed.size());
}

void check_finite(std::span<const double> values, const char* what, std::size_t iteration) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what + " residual", iteration);
  }
}

}  // namespace

GaussianMixtureParams link(const NaturalParams& natural) {
  const std::size_t k_count = natural.size();
  if (k_count == 0 || natural.alpha.size() != k_count || natural.z.size() != k_count) {
    throw InvalidInputError("natural parameter vectors must share a positive length");
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    if (!std::isfinite(natural.alpha[k]) || !std::isfinite(natural.mu[k]) || !std::isfinite(natural.z[k])) {
      throw InvalidInputError("natural parameters must be finite");
    }
  }
  const double max_alpha = *std::max_element(natural.alpha.begin(), natural.alpha.end());
  std::vector<double> weights(k_count);
  double total = 0.0;
  for (std::size_t k = 0; k < k_count; ++k) {
    weights[k] = std::exp(natural.alpha[k] - max_alpha);
    total += weights[k];
  }
  std::vector<GaussianComponent> comps(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    comps[k] = {weights[k] / total, natural.mu[k], std::clamp(std::exp(natural.z[k]), kSdFloor, kSdCeiling)};
  }
  return GaussianMixtureParams(std::move(comps));
}

NaturalParams unlink(const GaussianMixtureParams& theta) {
  NaturalParams out;
  out.alpha = centered_logits(theta.weights());
  for (const auto& c : theta.components()) {
    out.mu.push_back(c.mean);
    out.z.push_back(std::log(c.sd));
  }
  return out;
}

void ScgmmConfig::validate() const {
  if (components < 1) throw InvalidInputError("components must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInputError("learning_rate must be positive");
  if (max_boost_iters < 1) throw InvalidInputError("max_boost_iters must be at least 1");
  if (early_stop_patience < 1) throw InvalidInputError("early_stop_patience must be at least 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidInputError("validation_fraction must lie in (0, 1)");
  }
  if (!(gradient_step > 0.0)) throw InvalidInputError("gradient_step must be positive");
  if (gradient_iters < 1) throw InvalidInputError("gradient_iters must be at least 1");
  tree.validate();
}

DistributionalDataset::DistributionalDataset(Matrix covariates, std::vector<EmpiricalDistribution> outcomes)
    : covariates_(std::move(covariates)), outcomes_(std::move(outcomes)) {
  if (covariates_.rows() != outcomes_.size()) {
    throw InvalidInputError("dataset has " + std::to_string(covariates_.rows()) + " covariate rows but " +
                            std::to_string(outcomes_.size()) + " outcomes");
  }
  for (double v : covariates_.data()) {
    if (!std::isfinite(v)) throw InvalidInputError("covariates must be finite");
  }
}

DistributionalDataset DistributionalDataset::from_quantiles(Matrix covariates,
                                                            std::span<const QuantileFunction> outcomes) {
  std::vector<EmpiricalDistribution> samples;
  samples.reserve(outcomes.size());
  for (const auto& q : outcomes) samples.push_back(EmpiricalDistribution::from_quantiles(q));
  return DistributionalDataset(std::move(covariates), std::move(samples));
}

DistributionalDataset DistributionalDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<EmpiricalDistribution> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(outcomes_.at(i));
  return DistributionalDataset(covariates_.select_rows(indices), std::move(picked));
}

ScgmmModel::ScgmmModel(ScgmmConfig config, std::size_t input_dim, std::vector<TreeEnsemble> alpha,
                       std::vector<TreeEnsemble> mu, std::vector<TreeEnsemble> z, TrainingTrace trace)
    : config_(std::move(config)),
      input_dim_(input_dim),
      alpha_(std::move(alpha)),
      mu_(std::move(mu)),
      z_(std::move(z)),
      trace_(std::move(trace)) {
  if (mu_.empty() || alpha_.size() != mu_.size() || z_.size() != mu_.size()) {
    throw InvalidInputError("model needs alpha, mu and z ensembles for every component");
  }
  for (const auto* group : {&alpha_, &mu_, &z_}) {
    for (const auto& e : *group) {
      if (e.input_dim() != input_dim_) throw InvalidInputError("ensemble dimension does not match the model");
    }
  }
}

NaturalParams ScgmmModel::naturals(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw InvalidInputError("covariate vector has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(input_dim_));
  }
  NaturalParams out;
  for (std::size_t k = 0; k < components(); ++k) {
    out.alpha.push_back(alpha_[k].predict(x));
    out.mu.push_back(mu_[k].predict(x));
    out.z.push_back(z_[k].predict(x));
  }
  return out;
}

TrainValidationSplit split_rows(const DistributionalDataset& data, double validation_fraction, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 2) throw InvalidInputError("need at least 2 rows to split");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) keyed[i] = {row_key(data, i, seed), i};
  std::sort(keyed.begin(), keyed.end());
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n))), 1, n - 1);
  TrainValidationSplit split;
  for (std::size_t j = 0; j < n; ++j) (j < n_val ? split.validation : split.train).push_back(keyed[j].second);
  return split;
}

ScgmmModel train(const DistributionalDataset& data, const ScgmmConfig& cfg, const TrainingObserver& observer) {
  cfg.validate();
  if (data.size() < kMinTrainingRows) {
    throw InvalidInputError("training needs at least 20 rows, got " + std::to_string(data.size()));
  }
  if (data.dim() < 1) throw InvalidInputError("training needs at least one covariate");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.outcomes()[i].distinct_count() < 2) {
      throw InvalidInputError("outcome at row " + std::to_string(i) + " is degenerate");
    }
  }

  const std::size_t k_count = cfg.components;
  const std::size_t dim = data.dim();
  const double eta = cfg.learning_rate;
  const LevelGrid& grid = cfg.grid;

  const TrainValidationSplit split = split_rows(data, cfg.validation_fraction, cfg.seed);
  const Matrix x_train = data.covariates().select_rows(split.train);
  const Matrix x_val = data.covariates().select_rows(split.validation);
  const std::size_t n_train = split.train.size();
  const std::size_t n_val = split.validation.size();

  std::vector<const EmpiricalDistribution*> g_train;
  std::vector<QuantileFunction> q_train;
  std::vector<QuantileFunction> q_val;
  for (std::size_t i : split.train) {
    g_train.push_back(&data.outcomes()[i]);
    q_train.push_back(empirical_quantiles(data.outcomes()[i], grid));
  }
  for (std::size_t i : split.validation) q_val.push_back(empirical_quantiles(data.outcomes()[i], grid));

  TreeParams tree_params = cfg.tree;
  tree_params.min_samples_leaf = std::min(tree_params.min_samples_leaf, std::max<std::size_t>(1, n_train / 2));

  MmConfig weight_cfg;
  weight_cfg.gradient_step = cfg.gradient_step;
  weight_cfg.gradient_iters = cfg.gradient_iters;

  const NaturalParams base = initial_naturals(g_train, k_count, cfg.zero_init);
  std::vector<TreeEnsemble> alpha;
  std::vector<TreeEnsemble> mu;
  std::vector<TreeEnsemble> z;
  for (std::size_t k = 0; k < k_count; ++k) {
    alpha.emplace_back(base.alpha[k], eta, dim);
    mu.emplace_back(base.mu[k], eta, dim);
    z.emplace_back(base.z[k], eta, dim);
  }
  std::vector<NaturalParams> raw_train(n_train, base);
  std::vector<NaturalParams> raw_val(n_val, base);

  auto link_all = [](std::span<const NaturalParams> raw) {
    std::vector<GaussianMixtureParams> out;
    out.reserve(raw.size());
    for (const auto& r : raw) out.push_back(link(r));
    return out;
  };
  // Fits one tree to the residuals and folds its contribution into the cached
  // raw predictions of both row sets.
  auto boost = [&](TreeEnsemble& ensemble, std::span<const double> residuals,
                   std::vector<double> NaturalParams::*field, std::size_t k) {
    TreeFit fit = fit_tree_with_assignments(x_train, residuals, tree_params);
    const auto nodes = fit.tree.nodes();
    for (std::size_t i = 0; i < n_train; ++i) (raw_train[i].*field)[k] += eta * nodes[fit.leaf_of_row[i]].value;
    for (std::size_t i = 0; i < n_val; ++i) (raw_val[i].*field)[k] += eta * fit.tree.predict(x_val.row(i));
    ensemble.append(std::move(fit.tree));
  };

  std::vector<GaussianMixtureParams> theta_train = link_all(raw_train);
  std::vector<GaussianMixtureParams> theta_val = link_all(raw_val);
  std::vector<MixtureDecomposition> decompositions;
  decompositions.reserve(n_train);
  for (std::size_t i = 0; i < n_train; ++i) decompositions.push_back(decompose(*g_train[i], theta_train[i]));

  TrainingTrace trace;
  trace.records.push_back({0, mean_loss(q_train, theta_train, grid), mean_loss(q_val, theta_val, grid)});
  if (observer) observer(trace.records.back());
  double best_val = trace.records.back().validation_loss;
  std::size_t best_iter = 0;
  std::size_t since_best = 0;

  std::vector<std::vector<double>> residual(k_count, std::vector<double>(n_train));
  std::vector<GaussianMixtureParams> shaped;
  shaped.reserve(n_train);

  for (std::size_t m = 1; m <= cfg.max_boost_iters; ++m) {
    // Step 1: per-sample component shapes from the current decompositions,
    // sorted by mean, then one tree per mean and log-sd.
    shaped.clear();
    for (std::size_t i = 0; i < n_train; ++i) {
      shaped.push_back(update_components(decompositions[i], theta_train[i], grid));
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t i = 0; i < n_train; ++i) residual[k][i] = shaped[i][k].mean - raw_train[i].mu[k];
      check_finite(residual[k], "mean", m);
      boost(mu[k], residual[k], &NaturalParams::mu, k);
      for (std::size_t i = 0; i < n_train; ++i) residual[k][i] = std::log(shaped[i][k].sd) - raw_train[i].z[k];
      check_finite(residual[k], "log-sd", m);
      boost(z[k], residual[k], &NaturalParams::z, k);
    }

    // Step 2: per-sample weights given the new shapes, as centred logits.
    if (k_count > 1) {
      for (std::size_t i = 0; i < n_train; ++i) {
        const std::vector<double> weights =
            cfg.pi_update == WeightUpdate::kEmApprox
                ? update_weights_em(decompositions[i], shaped[i])
                : update_weights_gradient(*g_train[i], shaped[i], weight_cfg, grid);
        const std::vector<double> target = centered_logits(weights);
        const double current_mean =
            std::accumulate(raw_train[i].alpha.begin(), raw_train[i].alpha.end(), 0.0) / static_cast<double>(k_count);
        for (std::size_t k = 0; k < k_count; ++k) residual[k][i] = target[k] - (raw_train[i].alpha[k] - current_mean);
      }
      for (std::size_t k = 0; k < k_count; ++k) {
        check_finite(residual[k], "logit", m);
        boost(alpha[k], residual[k], &NaturalParams::alpha, k);
      }
    }

    // Step 3: decompositions for the updated model.
    theta_train = link_all(raw_train);
    theta_val = link_all(raw_val);
    for (std::size_t i = 0; i < n_train; ++i) decompositions[i] = decompose(*g_train[i], theta_train[i]);

    trace.records.push_back({m, mean_loss(q_train, theta_train, grid), mean_loss(q_val, theta_val, grid)});
    if (observer) observer(trace.records.back());
    const double val = trace.records.back().validation_loss;
    if (!std::isfinite(val)) throw NumericalError("non-finite validation loss", m);
    if (val < best_val) {
      best_val = val;
      best_iter = m;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }

  // Each iteration appended exactly one tree to every ensemble, except that
  // the logits are untouched when K = 1.
  for (std::size_t k = 0; k < k_count; ++k) {
    alpha[k].truncate(k_count > 1 ? best_iter : 0);
    mu[k].truncate(best_iter);
    z[k].truncate(best_iter);
  }
  trace.best_iteration = best_iter;
  return ScgmmModel(cfg, dim, std::move(alpha), std::move(mu), std::move(z), std::move(trace));
}

GaussianMixtureParams predict_params(const ScgmmModel& model, std::span<const double> x) {
  return link(model.naturals(x));
}

QuantileFunction predict_quantiles(const ScgmmModel& model, std::span<const double> x, const LevelGrid& grid) {
  return gmm_quantile_function(predict_params(model, x), grid);
}

}  // namespace wdl
