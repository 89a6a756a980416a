#include "wdl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>

#include "wdl/errors.hpp"

namespace wdl {
namespace {

constexpr std::size_t kCovariates = 3;
constexpr double kLevelMatchTol = 1e-12;

Matrix draw_covariates(std::size_t rows, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix x(rows, kCovariates);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < kCovariates; ++j) x(i, j) = unit(rng);
  }
  return x;
}

void check_covariates(std::span<const double> x) {
  if (x.size() != kCovariates) throw InvalidInputError("simulation covariates must have 3 entries");
}

double dot(const std::array<double, 3>& a, std::span<const double> x) { return a[0] * x[0] + a[1] * x[1] + a[2] * x[2]; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void SimConfig::validate() const {
  if (samples < 2) throw InvalidInputError("simulation needs at least 2 samples");
  if (points < 2) throw InvalidInputError("simulation needs at least 2 points per sample");
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw InvalidInputError("omega must be a non-negative number");
  if (!(linear.mu_variance >= 0.0) || !(linear.sigma_variance >= 0.0)) {
    throw InvalidInputError("linear scenario variances must be non-negative");
  }
  if (!(linear.sigma0 - std::abs(linear.gamma[0]) - std::abs(linear.gamma[1]) - std::abs(linear.gamma[2]) > 0.0)) {
    throw InvalidInputError("linear scenario scale must stay positive on [-1, 1]^3");
  }
}

GaussianMixtureParams mixture_truth(std::span<const double> x, double eps) {
  check_covariates(x);
  const double w1 = 1.0 / (1.0 + std::exp(x[2]));
  return GaussianMixtureParams({{w1, x[0] + eps, std::abs(x[1]) + 0.5},
                                {1.0 - w1, 2.0 * x[1] * x[1] + 2.0 + eps, std::abs(x[0]) + 0.5}});
}

std::vector<double> sample_mixture(std::span<const double> x, double eps, std::size_t count, std::mt19937_64& rng) {
  check_covariates(x);
  // Draw directly from the labelled components; the stored mixture may have
  // reordered them by mean.
  const double w1 = 1.0 / (1.0 + std::exp(x[2]));
  const double m1 = x[0] + eps;
  const double s1 = std::abs(x[1]) + 0.5;
  const double m2 = 2.0 * x[1] * x[1] + 2.0 + eps;
  const double s2 = std::abs(x[0]) + 0.5;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(count);
  for (auto& y : out) {
    const bool first = unit(rng) < w1;
    const double z = normal(rng);
    y = first ? m1 + s1 * z : m2 + s2 * z;
  }
  return out;
}

LocationScaleDraw sample_linear_params(std::span<const double> x, const LinearScenarioParams& params,
                                       std::mt19937_64& rng) {
  check_covariates(x);
  const double mean = params.mu0 + dot(params.beta, x);
  const double scale_mean = params.sigma0 + dot(params.gamma, x);
  if (!(scale_mean > 0.0)) throw InvalidInputError("linear scenario scale mean must be positive");

  double mu = mean;
  if (params.mu_variance > 0.0) mu = std::normal_distribution<double>(mean, std::sqrt(params.mu_variance))(rng);
  double sigma = scale_mean;
  if (params.sigma_variance > 0.0) {
    std::gamma_distribution<double> gamma(scale_mean * scale_mean / params.sigma_variance,
                                          params.sigma_variance / scale_mean);
    // Zero is possible only through underflow; redraw in that case.
    do {
      sigma = gamma(rng);
    } while (!(sigma > 0.0));
  }
  return {mu, sigma};
}

DistributionalDataset simulate_mixture(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Matrix x = draw_covariates(cfg.samples, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<EmpiricalDistribution> outcomes;
  outcomes.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const double eps = cfg.omega * noise(rng);
    outcomes.emplace_back(sample_mixture(x.row(i), eps, cfg.points, rng));
  }
  return DistributionalDataset(std::move(x), std::move(outcomes));
}

DistributionalDataset simulate_linear(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Matrix x = draw_covariates(cfg.samples, rng);
  std::vector<QuantileFunction> outcomes;
  outcomes.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const LocationScaleDraw draw = sample_linear_params(x.row(i), cfg.linear, rng);
    outcomes.push_back(gaussian_quantile_function(draw.mean, draw.sd, cfg.grid));
  }
  return DistributionalDataset::from_quantiles(std::move(x), outcomes);
}

DistributionalDataset simulate(const SimConfig& cfg) {
  return cfg.scenario == Scenario::kMixture ? simulate_mixture(cfg) : simulate_linear(cfg);
}

LevelGrid sparse_levels() { return LevelGrid::uniform(9); }

QuantileFunction sparsify(const QuantileFunction& q, const LevelGrid& levels) {
  const auto dense = q.grid().levels();
  std::vector<double> values;
  values.reserve(levels.size());
  for (double s : levels.levels()) {
    const auto it = std::lower_bound(dense.begin(), dense.end(), s - kLevelMatchTol);
    if (it == dense.end() || std::abs(*it - s) > kLevelMatchTol) {
      throw InvalidInputError("level " + std::to_string(s) + " is not on the source grid");
    }
    values.push_back(q[static_cast<std::size_t>(it - dense.begin())]);
  }
  return QuantileFunction(levels, std::move(values));
}

QuantileFunction densify(const QuantileFunction& sparse, const LevelGrid& target) {
  const auto from = sparse.grid().levels();
  const auto vals = sparse.values();
  std::vector<double> out;
  out.reserve(target.size());
  for (double s : target.levels()) {
    if (s <= from.front()) {
      out.push_back(vals.front());
    } else if (s >= from.back()) {
      out.push_back(vals.back());
    } else {
      const auto hi = static_cast<std::size_t>(std::upper_bound(from.begin(), from.end(), s) - from.begin());
      const std::size_t lo = hi - 1;
      const double t = (s - from[lo]) / (from[hi] - from[lo]);
      out.push_back(std::min(vals[hi], vals[lo] + t * (vals[hi] - vals[lo])));
    }
  }
  return QuantileFunction(target, std::move(out));
}

double quasi_w2(const QuantileFunction& q1, const QuantileFunction& q2) { return w2_squared(q1, q2); }

std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> outer_folds(std::size_t rows,
                                                                                       std::size_t folds,
                                                                                       std::uint64_t seed) {
  if (folds < 2) throw InvalidInputError("cross-validation needs at least 2 folds");
  if (folds > rows) {
    throw InvalidInputError("cannot make " + std::to_string(folds) + " folds from " + std::to_string(rows) + " rows");
  }
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(rows);
  const std::uint64_t salt = splitmix64(seed);
  for (std::size_t i = 0; i < rows; ++i) keyed[i] = {splitmix64(salt ^ i), i};
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> fold_of(rows);
  for (std::size_t j = 0; j < rows; ++j) fold_of[keyed[j].second] = j % folds;

  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out(folds);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t f = 0; f < folds; ++f) (fold_of[i] == f ? out[f].second : out[f].first).push_back(i);
  }
  return out;
}

std::vector<CvFold> nested_cv(const DistributionalDataset& data, const ScgmmConfig& base, const NestedCvConfig& cv) {
  if (cv.learning_rates.empty()) throw InvalidInputError("nested_cv needs at least one learning rate");
  std::vector<CvFold> out;
  for (auto& [train_rows, test_rows] : outer_folds(data.size(), cv.folds, cv.seed)) {
    const DistributionalDataset fold_data = data.subset(train_rows);
    std::optional<CvFold> best;
    for (double eta : cv.learning_rates) {
      ScgmmConfig cfg = base;
      cfg.learning_rate = eta;
      cfg.validation_fraction = cv.inner_validation_fraction;
      ScgmmModel model = train(fold_data, cfg);
      const auto& trace = model.trace();
      const double val = trace.records[trace.best_iteration].validation_loss;
      if (!best || val < best->validation_loss) {
        cfg.max_boost_iters = std::max<std::size_t>(1, trace.best_iteration);
        best.emplace(CvFold{train_rows, test_rows, cfg, std::move(model), val});
      }
    }
    out.push_back(std::move(*best));
  }
  return out;
}

CvScore score_folds(std::span<const CvFold> folds, const Matrix& x, std::span<const QuantileFunction> observed) {
  if (folds.empty()) throw InvalidInputError("no folds to score");
  if (x.rows() != observed.size()) throw InvalidInputError("covariate and outcome counts differ");
  CvScore score{{}, 0.0, 0.0};
  for (const auto& fold : folds) {
    std::vector<QuantileFunction> obs;
    std::vector<QuantileFunction> pred;
    for (std::size_t i : fold.test) {
      obs.push_back(observed[i]);
      pred.push_back(predict_quantiles(fold.model, x.row(i), observed[i].grid()));
    }
    score.folds.push_back(prediction_loss(obs, pred));
    score.mean_loss += score.folds.back().mean_loss;
    score.mean_r_squared += score.folds.back().r_squared;
  }
  score.mean_loss /= static_cast<double>(folds.size());
  score.mean_r_squared /= static_cast<double>(folds.size());
  return score;
}

}  // namespace wdl
