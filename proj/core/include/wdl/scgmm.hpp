#pragma once

// Semi-parametric conditional Gaussian mixtures: every mixture parameter is
// a boosted-tree function of the covariates, fitted by interleaving the
// majorization-minimization sub-steps with one tree per parameter per
// component at each boosting iteration.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wdl/distributions.hpp"
#include "wdl/matrix.hpp"
#include "wdl/mm.hpp"
#include "wdl/tree.hpp"

namespace wdl {

// Unconstrained parameters: softmax logits, means and log-sds.
struct NaturalParams {
  std::vector<double> alpha;
  std::vector<double> mu;
  std::vector<double> z;

  std::size_t size() const { return mu.size(); }
};

inline constexpr double kSdCeiling = 1e6;
// Weights are floored here before taking logs.
inline constexpr double kWeightFloor = 1e-12;

GaussianMixtureParams link(const NaturalParams& natural);
NaturalParams unlink(const GaussianMixtureParams& theta);

struct ScgmmConfig {
  std::size_t components = 2;
  double learning_rate = 0.1;
  std::size_t max_boost_iters = 100;
  std::size_t early_stop_patience = 5;
  double validation_fraction = 0.2;
  TreeParams tree;
  LevelGrid grid = default_grid();
  std::uint64_t seed = 0;
  WeightUpdate pi_update = WeightUpdate::kEmApprox;
  // Used only by the projected-gradient weight update.
  double gradient_step = 0.05;
  std::size_t gradient_iters = 50;
  // Start every ensemble at zero instead of from pooled outcome statistics.
  bool zero_init = false;

  void validate() const;
};

// Covariate rows paired with outcome distributions.
class DistributionalDataset {
 public:
  DistributionalDataset(Matrix covariates, std::vector<EmpiricalDistribution> outcomes);

  // Each quantile function becomes an equally weighted sample of its values.
  static DistributionalDataset from_quantiles(Matrix covariates, std::span<const QuantileFunction> outcomes);

  const Matrix& covariates() const { return covariates_; }
  std::span<const EmpiricalDistribution> outcomes() const { return outcomes_; }
  std::size_t size() const { return outcomes_.size(); }
  std::size_t dim() const { return covariates_.cols(); }

  DistributionalDataset subset(std::span<const std::size_t> indices) const;

 private:
  Matrix covariates_;
  std::vector<EmpiricalDistribution> outcomes_;
};

struct TrainingRecord {
  std::size_t iteration;  // 0 is the initial constant model
  double train_loss;
  double validation_loss;
};

struct TrainingTrace {
  std::vector<TrainingRecord> records;
  std::size_t best_iteration = 0;
};

class ScgmmModel {
 public:
  ScgmmModel(ScgmmConfig config, std::size_t input_dim, std::vector<TreeEnsemble> alpha,
             std::vector<TreeEnsemble> mu, std::vector<TreeEnsemble> z, TrainingTrace trace = {});

  const ScgmmConfig& config() const { return config_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t components() const { return mu_.size(); }
  const TreeEnsemble& alpha(std::size_t k) const { return alpha_[k]; }
  const TreeEnsemble& mu(std::size_t k) const { return mu_[k]; }
  const TreeEnsemble& z(std::size_t k) const { return z_[k]; }
  const TrainingTrace& trace() const { return trace_; }

  NaturalParams naturals(std::span<const double> x) const;

 private:
  ScgmmConfig config_;
  std::size_t input_dim_;
  std::vector<TreeEnsemble> alpha_;
  std::vector<TreeEnsemble> mu_;
  std::vector<TreeEnsemble> z_;
  TrainingTrace trace_;
};

using TrainingObserver = std::function<void(const TrainingRecord&)>;

// Boosted MM training with early stopping on a held-out share of `data`.
ScgmmModel train(const DistributionalDataset& data, const ScgmmConfig& cfg, const TrainingObserver& observer = {});

// Rows of `data` used for fitting and for early stopping, in processing order.
struct TrainValidationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Membership depends on the seed and row contents only, so permuting rows
// permutes the split with them.
TrainValidationSplit split_rows(const DistributionalDataset& data, double validation_fraction, std::uint64_t seed);

GaussianMixtureParams predict_params(const ScgmmModel& model, std::span<const double> x);
QuantileFunction predict_quantiles(const ScgmmModel& model, std::span<const double> x, const LevelGrid& grid);

}  // namespace wdl
