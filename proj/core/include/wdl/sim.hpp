#pragma once

// Synthetic distribution-on-scalar data, sparse-quantile helpers and the
// nested cross-validation harness used to score trained models.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "wdl/distributions.hpp"
#include "wdl/eval.hpp"
#include "wdl/scgmm.hpp"

namespace wdl {

enum class Scenario { kMixture, kLinear };

// Normal location and gamma scale, both linear in x on average.
struct LinearScenarioParams {
  double mu0 = 0.0;
  double sigma0 = 3.0;
  double mu_variance = 0.25;
  double sigma_variance = 1.0;
  std::array<double, 3> beta{1.0, -1.0, 3.0};
  std::array<double, 3> gamma{0.1, 0.2, 0.3};
};

struct SimConfig {
  std::size_t samples = 200;
  std::size_t points = 300;
  double omega = 0.1;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::kMixture;
  LinearScenarioParams linear;
  // Level grid of the linear scenario's quantile outcomes.
  LevelGrid grid = default_grid();

  void validate() const;
};

// Two-component mixture at covariate x (three entries) with mean shift eps.
GaussianMixtureParams mixture_truth(std::span<const double> x, double eps);

// Draws `count` values from the mixture at x with mean shift eps.
std::vector<double> sample_mixture(std::span<const double> x, double eps, std::size_t count, std::mt19937_64& rng);

struct LocationScaleDraw {
  double mean;
  double sd;
};

// One (mu, sigma) draw of the linear scenario at x.
LocationScaleDraw sample_linear_params(std::span<const double> x, const LinearScenarioParams& params,
                                       std::mt19937_64& rng);

// x ~ U[-1, 1]^3. Mixture outcomes are raw draws; linear outcomes are exact
// Gaussian quantile functions on cfg.grid.
DistributionalDataset simulate_mixture(const SimConfig& cfg);
DistributionalDataset simulate_linear(const SimConfig& cfg);
DistributionalDataset simulate(const SimConfig& cfg);

// {0.1, ..., 0.9}.
LevelGrid sparse_levels();

// Restriction of q to `levels`, each of which must be a level of q's grid.
QuantileFunction sparsify(const QuantileFunction& q, const LevelGrid& levels);
// Linear interpolation in level; constant beyond the outermost sparse levels.
QuantileFunction densify(const QuantileFunction& sparse, const LevelGrid& target);
// W2^2 Riemann sum on the shared sparse levels.
double quasi_w2(const QuantileFunction& q1, const QuantileFunction& q2);

struct NestedCvConfig {
  std::size_t folds = 5;
  double inner_validation_fraction = 0.2;
  std::vector<double> learning_rates{0.05, 0.1, 0.2};
  std::uint64_t seed = 0;
};

struct CvFold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  // Winning learning rate, with max_boost_iters set to its best iteration.
  ScgmmConfig tuned;
  ScgmmModel model;  // fitted on `train` with `tuned`
  double validation_loss;
};

// Outer folds are disjoint and cover every row. Inside each fold, every
// candidate learning rate is trained with the inner validation split driving
// early stopping; the candidate with the lowest validation loss wins.
std::vector<CvFold> nested_cv(const DistributionalDataset& data, const ScgmmConfig& base, const NestedCvConfig& cv);

// Just the outer split, as (train, test) index lists per fold.
std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> outer_folds(std::size_t rows,
                                                                                       std::size_t folds,
                                                                                       std::uint64_t seed);

struct CvScore {
  std::vector<EvalReport> folds;
  double mean_loss;
  double mean_r_squared;
};

// Scores every fold's model on its test rows. Predictions are taken on the
// grid of the observed quantile functions.
CvScore score_folds(std::span<const CvFold> folds, const Matrix& x, std::span<const QuantileFunction> observed);

}  // namespace wdl
