#include "wdl/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "wdl/errors.hpp"

namespace wdl {
namespace {

// Cumulative-weight comparisons tolerate this much rounding.
constexpr double kCumulativeSlack = 1e-12;

constexpr int kMaxBracketWidenings = 200;
constexpr int kMaxBisectionSteps = 200;

void require(bool condition, const char* message) {
  if (!condition) throw InvalidInputError(message);
}

}  // namespace

LevelGrid::LevelGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  require(!levels_.empty(), "level grid must not be empty");
  require(levels_.front() > 0.0 && levels_.back() < 1.0, "grid levels must lie in (0, 1)");
  for (std::size_t i = 1; i < levels_.size(); ++i) {
    require(levels_[i] > levels_[i - 1], "grid levels must be strictly increasing");
  }
}

LevelGrid LevelGrid::uniform(std::size_t count) {
  require(count >= 1, "uniform grid needs at least one level");
  std::vector<double> levels(count);
  const double denom = static_cast<double>(count + 1);
  for (std::size_t i = 0; i < count; ++i) levels[i] = static_cast<double>(i + 1) / denom;
  return LevelGrid(std::move(levels));
}

LevelGrid default_grid() { return LevelGrid::uniform(99); }

QuantileFunction::QuantileFunction(LevelGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  require(values_.size() == grid_.size(), "quantile values must match the grid length");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    require(std::isfinite(values_[i]), "quantile values must be finite");
    if (i > 0) require(values_[i] >= values_[i - 1], "quantile values must be non-decreasing");
  }
}

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> points)
    : EmpiricalDistribution(std::move(points), {}) {}

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> points, std::vector<double> weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  require(points_.size() >= 2, "empirical distribution needs at least 2 points");
  for (double p : points_) require(std::isfinite(p), "empirical points must be finite");
  if (!weights_.empty()) {
    require(weights_.size() == points_.size(), "weights must match points");
    double total = 0.0;
    for (double w : weights_) {
      require(std::isfinite(w) && w >= 0.0, "weights must be non-negative");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-12, "weights must sum to 1");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(),
                   [this](std::size_t a, std::size_t b) { return points_[a] < points_[b]; });
}

EmpiricalDistribution EmpiricalDistribution::from_quantiles(const QuantileFunction& q) {
  return EmpiricalDistribution(std::vector<double>(q.values().begin(), q.values().end()));
}

double EmpiricalDistribution::weight(std::size_t i) const {
  return weights_.empty() ? 1.0 / static_cast<double>(points_.size()) : weights_[i];
}

std::vector<double> EmpiricalDistribution::weights() const {
  if (!weights_.empty()) return weights_;
  return std::vector<double>(points_.size(), 1.0 / static_cast<double>(points_.size()));
}

std::size_t EmpiricalDistribution::distinct_count() const {
  std::size_t count = 0;
  for (std::size_t j = 0; j < order_.size(); ++j) {
    if (j == 0 || points_[order_[j]] != points_[order_[j - 1]]) ++count;
  }
  return count;
}

GaussianMixtureParams::GaussianMixtureParams(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  require(!components_.empty(), "mixture needs at least one component");
  double total = 0.0;
  for (auto& c : components_) {
    require(std::isfinite(c.weight) && std::isfinite(c.mean) && std::isfinite(c.sd),
            "mixture parameters must be finite");
    require(c.weight >= 0.0, "mixture weights must be non-negative");
    require(c.sd >= 0.0, "component sd must be non-negative");
    c.sd = std::max(c.sd, kSdFloor);
    total += c.weight;
  }
  require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
  std::stable_sort(components_.begin(), components_.end(),
                   [](const GaussianComponent& a, const GaussianComponent& b) { return a.mean < b.mean; });
}

GaussianMixtureParams GaussianMixtureParams::single(double mean, double sd) {
  return GaussianMixtureParams({{1.0, mean, sd}});
}

std::vector<double> GaussianMixtureParams::weights() const {
  std::vector<double> w(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) w[k] = components_[k].weight;
  return w;
}

GaussianMixtureParams GaussianMixtureParams::with_weights(std::span<const double> weights) const {
  require(weights.size() == components_.size(), "weight vector must match component count");
  std::vector<GaussianComponent> out(components_.begin(), components_.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k].weight = weights[k];
  return GaussianMixtureParams(std::move(out));
}

double normal_pdf(double z) {
  static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double normal_log_pdf(double x, double mean, double sd) {
  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

// Wichura's AS241 (PPND16), accurate to about 1e-16.
double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal quantile level must lie in (0, 1)");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
             4.5921953931549871457e+4) * r + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
             2.1213794301586595867e+4) * r + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
             1.27045825245236838258e+0) * r + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
             1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
             2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
             7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

QuantileFunction empirical_quantiles(const EmpiricalDistribution& dist, const LevelGrid& grid) {
  const auto points = dist.points();
  const auto order = dist.order();
  const std::size_t n = points.size();
  std::vector<double> values(grid.size());
  std::size_t j = 0;
  double cumulative = dist.weight(order[0]);
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const double level = grid[l];
    while (j + 1 < n && cumulative < level - kCumulativeSlack) {
      ++j;
      cumulative = dist.weighted() ? cumulative + dist.weight(order[j])
                                   : static_cast<double>(j + 1) / static_cast<double>(n);
    }
    values[l] = points[order[j]];
  }
  return QuantileFunction(grid, std::move(values));
}

double empirical_quantile(const EmpiricalDistribution& dist, double level) {
  const auto points = dist.points();
  const auto order = dist.order();
  const std::size_t n = points.size();
  if (level <= 0.0) return points[order.front()];
  double cumulative = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cumulative = dist.weighted() ? cumulative + dist.weight(order[j])
                                 : static_cast<double>(j + 1) / static_cast<double>(n);
    if (cumulative >= level - kCumulativeSlack) return points[order[j]];
  }
  return points[order.back()];
}

double gmm_pdf(const GaussianMixtureParams& theta, double x) {
  double total = 0.0;
  for (const auto& c : theta.components()) total += c.weight * normal_pdf((x - c.mean) / c.sd) / c.sd;
  return total;
}

double gmm_cdf(const GaussianMixtureParams& theta, double x) {
  double total = 0.0;
  for (const auto& c : theta.components()) total += c.weight * normal_cdf((x - c.mean) / c.sd);
  return std::clamp(total, 0.0, 1.0);
}

double gmm_quantile(const GaussianMixtureParams& theta, double level) {
  require(level > 0.0 && level < 1.0, "quantile level must lie in (0, 1)");
  double lo = theta[0].mean - 10.0 * theta[0].sd;
  double hi = theta[0].mean + 10.0 * theta[0].sd;
  for (const auto& c : theta.components()) {
    lo = std::min(lo, c.mean - 10.0 * c.sd);
    hi = std::max(hi, c.mean + 10.0 * c.sd);
  }
  for (int i = 0; gmm_cdf(theta, lo) > level; ++i) {
    if (i == kMaxBracketWidenings) throw NumericalError("gmm_quantile: lower bracket did not converge");
    lo -= hi - lo;
  }
  for (int i = 0; gmm_cdf(theta, hi) < level; ++i) {
    if (i == kMaxBracketWidenings) throw NumericalError("gmm_quantile: upper bracket did not converge");
    hi += hi - lo;
  }
  // Shrink [lo, hi] until it is a few ulps wide; cdf(lo) <= level <= cdf(hi)
  // holds throughout.
  for (int step = 0; step < kMaxBisectionSteps; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (hi - lo <= 1e-13 * std::max(1.0, std::abs(mid))) break;
    const double f = gmm_cdf(theta, mid);
    if (f == level) return mid;
    if (f < level) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

QuantileFunction gmm_quantile_function(const GaussianMixtureParams& theta, const LevelGrid& grid) {
  std::vector<double> values(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) values[l] = gmm_quantile(theta, grid[l]);
  // Bisection rounding can leave neighbouring levels a few ulps out of order
  // on flat stretches of the cdf.
  for (std::size_t l = 1; l < values.size(); ++l) values[l] = std::max(values[l], values[l - 1]);
  return QuantileFunction(grid, std::move(values));
}

QuantileFunction gaussian_quantile_function(double mean, double sd, const LevelGrid& grid) {
  require(sd > 0.0, "sd must be positive");
  std::vector<double> values(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) values[l] = mean + sd * normal_quantile(grid[l]);
  return QuantileFunction(grid, std::move(values));
}

double w2_squared(const QuantileFunction& q1, const QuantileFunction& q2) {
  require(q1.grid() == q2.grid(), "w2_squared requires identical level grids");
  double total = 0.0;
  for (std::size_t l = 0; l < q1.size(); ++l) {
    const double d = q1[l] - q2[l];
    total += d * d;
  }
  return total / static_cast<double>(q1.size() + 1);
}

double gaussian_w2(double mean1, double sd1, double mean2, double sd2) {
  require(sd1 > 0.0 && sd2 > 0.0, "gaussian_w2 requires positive sds");
  return std::hypot(mean1 - mean2, sd1 - sd2);
}

}  // namespace wdl
