#pragma once

// Distribution representations and the one-dimensional 2-Wasserstein metric.
//
// Quantile functions sampled on a shared level grid are the canonical form:
// every distance in the library is computed between two QuantileFunction
// objects on identical grids.

#include <cstddef>
#include <span>
#include <vector>

namespace wdl {

// Smallest standard deviation a Gaussian component may carry.
inline constexpr double kSdFloor = 1e-6;

// Strictly increasing probabilities inside (0, 1).
class LevelGrid {
 public:
  explicit LevelGrid(std::vector<double> levels);

  // {1/(count+1), ..., count/(count+1)}.
  static LevelGrid uniform(std::size_t count);

  std::span<const double> levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t i) const { return levels_[i]; }

  bool operator==(const LevelGrid&) const = default;

 private:
  std::vector<double> levels_;
};

// {0.01, 0.02, ..., 0.99}.
LevelGrid default_grid();

// Non-decreasing finite values, one per grid level.
class QuantileFunction {
 public:
  QuantileFunction(LevelGrid grid, std::vector<double> values);

  const LevelGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  LevelGrid grid_;
  std::vector<double> values_;
};

// A finite sample, optionally weighted. Unweighted samples put mass 1/n on
// every point.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> points);
  EmpiricalDistribution(std::vector<double> points, std::vector<double> weights);

  // Grid values treated as equally weighted atoms.
  static EmpiricalDistribution from_quantiles(const QuantileFunction& q);

  std::span<const double> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool weighted() const { return !weights_.empty(); }
  double weight(std::size_t i) const;
  std::vector<double> weights() const;

  // Point indices in ascending order of value; ties keep input order.
  std::span<const std::size_t> order() const { return order_; }

  std::size_t distinct_count() const;

 private:
  std::vector<double> points_;
  std::vector<double> weights_;
  std::vector<std::size_t> order_;
};

struct GaussianComponent {
  double weight;
  double mean;
  double sd;
};

// K-component Gaussian mixture. Components are stored in ascending order of
// mean; construction sorts them and floors every sd at kSdFloor.
class GaussianMixtureParams {
 public:
  explicit GaussianMixtureParams(std::vector<GaussianComponent> components);

  static GaussianMixtureParams single(double mean, double sd);

  std::span<const GaussianComponent> components() const { return components_; }
  std::size_t size() const { return components_.size(); }
  const GaussianComponent& operator[](std::size_t k) const { return components_[k]; }

  std::vector<double> weights() const;

  // Same components with new weights (aligned with the stored order).
  GaussianMixtureParams with_weights(std::span<const double> weights) const;

 private:
  std::vector<GaussianComponent> components_;
};

double normal_pdf(double z);
double normal_log_pdf(double x, double mean, double sd);
double normal_cdf(double z);
// Standard normal inverse cdf; p must lie in (0, 1).
double normal_quantile(double p);

// Left-continuous weighted quantile: the smallest point whose cumulative
// weight reaches each level.
QuantileFunction empirical_quantiles(const EmpiricalDistribution& dist, const LevelGrid& grid);

// Single-level version accepting the closed interval [0, 1]; level 0 maps to
// the minimum point.
double empirical_quantile(const EmpiricalDistribution& dist, double level);

double gmm_pdf(const GaussianMixtureParams& theta, double x);
double gmm_cdf(const GaussianMixtureParams& theta, double x);

// Bisection inverse of gmm_cdf; level must lie in (0, 1).
double gmm_quantile(const GaussianMixtureParams& theta, double level);

QuantileFunction gmm_quantile_function(const GaussianMixtureParams& theta, const LevelGrid& grid);
QuantileFunction gaussian_quantile_function(double mean, double sd, const LevelGrid& grid);

// Riemann approximation of W2^2: sum of squared differences over (|grid| + 1).
double w2_squared(const QuantileFunction& q1, const QuantileFunction& q2);

// Closed-form W2 between two Gaussians.
double gaussian_w2(double mean1, double sd1, double mean2, double sd2);

}  // namespace wdl
