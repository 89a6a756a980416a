#include "wdl/mm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <utility>

#include "wdl/errors.hpp"

namespace wdl {
namespace {

// Normalized component weights below this are treated as absent when
// deciding whether g_k has enough support to fit.
constexpr double kNegligibleWeight = 1e-12;
// Transported cdf levels are kept this far from 0 and 1.
constexpr double kLevelClamp = 1e-12;
constexpr std::size_t kGradientNodes = 512;
constexpr double kGradientTailSds = 6.0;
constexpr std::size_t kWeightBacktracks = 6;

// Log-space responsibilities of every component at x. Returns false when no
// component has a finite log density (uniform fallback is written).
bool responsibilities_at(const GaussianMixtureParams& theta, double x, std::span<double> out) {
  const std::size_t k_count = theta.size();
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& c = theta[k];
    out[k] = c.weight > 0.0 ? std::log(c.weight) + normal_log_pdf(x, c.mean, c.sd)
                            : -std::numeric_limits<double>::infinity();
    max_log = std::max(max_log, out[k]);
  }
  if (!std::isfinite(max_log)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(k_count));
    return false;
  }
  double total = 0.0;
  for (auto& v : out) {
    v = std::exp(v - max_log);
    total += v;
  }
  for (auto& v : out) v /= total;
  return true;
}

std::vector<double> normalize_simplex(std::vector<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return w;
  }
  for (auto& v : w) v = std::max(0.0, v / total);
  return w;
}

// Sorted points with cumulative weights, for repeated quantile lookups.
struct CumulativeSample {
  std::vector<double> values;
  std::vector<double> cumulative;

  explicit CumulativeSample(const EmpiricalDistribution& g) {
    const auto order = g.order();
    values.reserve(order.size());
    cumulative.reserve(order.size());
    double running = 0.0;
    for (std::size_t j = 0; j < order.size(); ++j) {
      values.push_back(g.points()[order[j]]);
      running = g.weighted() ? running + g.weight(order[j])
                             : static_cast<double>(j + 1) / static_cast<double>(order.size());
      cumulative.push_back(running);
    }
  }

  double quantile(double level) const {
    if (level <= 0.0) return values.front();
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), level - 1e-12);
    if (it == cumulative.end()) return values.back();
    return values[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

double weighted_sd(std::span<const double> x, std::span<const double> w, double mean) {
  double total = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += w[i];
    sq += w[i] * (x[i] - mean) * (x[i] - mean);
  }
  return total > 0.0 ? std::sqrt(sq / total) : 0.0;
}

bool has_fittable_support(const EmpiricalDistribution& gk) {
  const auto order = gk.order();
  std::size_t distinct = 0;
  double last = 0.0;
  for (std::size_t idx : order) {
    if (gk.weight(idx) <= kNegligibleWeight) continue;
    const double p = gk.points()[idx];
    if (distinct == 0 || p != last) {
      ++distinct;
      last = p;
    }
  }
  return distinct >= 2;
}

MmFit run_mm(const EmpiricalDistribution& g, GaussianMixtureParams theta, const MmConfig& cfg,
             const LevelGrid& grid) {
  const QuantileFunction target = empirical_quantiles(g, grid);
  auto loss_of = [&](const GaussianMixtureParams& t) { return w2_squared(target, gmm_quantile_function(t, grid)); };

  MmTrace trace;
  MixtureDecomposition nu = decompose(g, theta);
  double loss = loss_of(theta);
  trace.records.push_back({loss, surrogate_loss(nu, theta, grid)});

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    // Step 1: component shapes against the current decomposition.
    GaussianMixtureParams shaped = update_components(nu, theta, grid);
    // Step 2: weights.
    std::vector<double> weights = cfg.pi_update == WeightUpdate::kEmApprox
                                      ? update_weights_em(nu, shaped)
                                      : update_weights_gradient(g, shaped, cfg, grid);
    // Backtrack along the weight update until L does not increase. The EM
    // refresh is not an exact minimizer of L in the weights, and the grid
    // discretization can break the continuous descent argument.
    const std::vector<double> previous_weights = shaped.weights();
    std::optional<GaussianMixtureParams> accepted;
    double next_loss = loss;
    double fraction = 1.0;
    for (std::size_t attempt = 0; attempt <= kWeightBacktracks; ++attempt) {
      std::vector<double> blended(weights.size());
      for (std::size_t k = 0; k < weights.size(); ++k) {
        blended[k] = previous_weights[k] + fraction * (weights[k] - previous_weights[k]);
      }
      GaussianMixtureParams candidate = attempt == kWeightBacktracks
                                            ? shaped
                                            : shaped.with_weights(normalize_simplex(std::move(blended)));
      const double candidate_loss = loss_of(candidate);
      if (candidate_loss <= loss) {
        accepted = std::move(candidate);
        next_loss = candidate_loss;
        break;
      }
      if (attempt == 0) ++trace.rejected_steps;
      fraction *= 0.5;
    }
    if (!accepted) break;
    GaussianMixtureParams next = std::move(*accepted);
    // Step 3: decomposition for the accepted parameters.
    nu = decompose(g, next);
    trace.records.push_back({next_loss, surrogate_loss(nu, next, grid)});
    const double rel_change = loss > 0.0 ? (loss - next_loss) / loss : 0.0;
    theta = std::move(next);
    loss = next_loss;
    if (rel_change < cfg.rel_tol) break;
  }
  return {std::move(theta), std::move(trace)};
}

}  // namespace

void MmConfig::validate() const {
  if (max_iters < 1) throw InvalidInputError("max_iters must be at least 1");
  if (!(rel_tol > 0.0)) throw InvalidInputError("rel_tol must be positive");
  if (!(gradient_step > 0.0)) throw InvalidInputError("gradient_step must be positive");
  if (gradient_iters < 1) throw InvalidInputError("gradient_iters must be at least 1");
}

MixtureDecomposition::MixtureDecomposition(EmpiricalDistribution parent, std::vector<double> component_weights,
                                           std::vector<double> responsibilities, std::size_t fallback_points)
    : parent_(std::move(parent)),
      component_weights_(std::move(component_weights)),
      responsibilities_(std::move(responsibilities)),
      fallback_points_(fallback_points) {
  if (component_weights_.empty()) throw InvalidInputError("decomposition needs at least one component");
  if (responsibilities_.size() != parent_.size() * component_weights_.size()) {
    throw InvalidInputError("responsibility matrix has the wrong size");
  }
  for (std::size_t i = 0; i < parent_.size(); ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < components(); ++k) {
      const double r = responsibility(i, k);
      if (!(r >= 0.0)) throw InvalidInputError("responsibilities must be non-negative");
      total += r;
    }
    if (std::abs(total - 1.0) > 1e-10) throw InvalidInputError("responsibilities must sum to 1 per point");
  }
}

std::vector<double> MixtureDecomposition::component_mass(std::size_t k) const {
  std::vector<double> mass(parent_.size());
  const double pi = component_weights_[k];
  for (std::size_t i = 0; i < parent_.size(); ++i) {
    mass[i] = pi > 0.0 ? parent_.weight(i) * responsibility(i, k) / pi : 0.0;
  }
  return mass;
}

double MixtureDecomposition::assigned_mass(std::size_t k) const {
  double total = 0.0;
  for (std::size_t i = 0; i < parent_.size(); ++i) total += parent_.weight(i) * responsibility(i, k);
  return total;
}

std::optional<EmpiricalDistribution> MixtureDecomposition::component(std::size_t k) const {
  const double total = assigned_mass(k);
  if (!(total > 0.0) || !std::isfinite(total)) return std::nullopt;
  std::vector<double> w(parent_.size());
  for (std::size_t i = 0; i < parent_.size(); ++i) w[i] = parent_.weight(i) * responsibility(i, k) / total;
  return EmpiricalDistribution(std::vector<double>(parent_.points().begin(), parent_.points().end()),
                               std::move(w));
}

LocationScale fit_location_scale(const QuantileFunction& target, const QuantileFunction& base) {
  if (!(target.grid() == base.grid())) throw InvalidInputError("fit_location_scale requires identical grids");
  const std::size_t n = base.size();
  double base_mean = 0.0;
  double target_mean = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    base_mean += base[l];
    target_mean += target[l];
  }
  base_mean /= static_cast<double>(n);
  target_mean /= static_cast<double>(n);
  double cov = 0.0;
  double var = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const double db = base[l] - base_mean;
    cov += db * (target[l] - target_mean);
    var += db * db;
  }
  if (!(var > 0.0)) throw InvalidInputError("fit_location_scale: base quantile function is constant");
  const double sd = std::max(cov / var, kSdFloor);
  return {target_mean - sd * base_mean, sd};
}

double mixture_loss(const EmpiricalDistribution& g, const GaussianMixtureParams& theta, const LevelGrid& grid) {
  return w2_squared(empirical_quantiles(g, grid), gmm_quantile_function(theta, grid));
}

MixtureDecomposition decompose(const EmpiricalDistribution& g, const GaussianMixtureParams& theta) {
  const std::size_t n = g.size();
  const std::size_t k_count = theta.size();
  std::vector<double> resp(n * k_count);
  std::size_t fallbacks = 0;
  const auto order = g.order();
  double before = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = order[j];
    const double w = g.weight(i);
    const double level = g.weighted() ? before + 0.5 * w
                                      : (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    before += w;
    std::span<double> row(resp.data() + i * k_count, k_count);
    if (k_count == 1) {
      row[0] = 1.0;
      continue;
    }
    const double t = gmm_quantile(theta, std::clamp(level, kLevelClamp, 1.0 - kLevelClamp));
    if (!responsibilities_at(theta, t, row)) ++fallbacks;
  }
  return MixtureDecomposition(g, theta.weights(), std::move(resp), fallbacks);
}

double surrogate_loss(const MixtureDecomposition& nu, const GaussianMixtureParams& theta, const LevelGrid& grid) {
  if (nu.components() != theta.size()) throw InvalidInputError("decomposition and mixture differ in component count");
  double total = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto gk = nu.component(k);
    if (!gk) continue;
    const auto& c = theta[k];
    total += c.weight * w2_squared(empirical_quantiles(*gk, grid), gaussian_quantile_function(c.mean, c.sd, grid));
  }
  return total;
}

std::vector<double> project_to_simplex(std::span<const double> v) {
  if (v.empty()) throw InvalidInputError("cannot project an empty vector");
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double shift = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) shift = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(v[k] - shift, 0.0);
  return normalize_simplex(std::move(out));
}

std::vector<double> update_weights_em(const MixtureDecomposition& nu, const GaussianMixtureParams& theta) {
  const std::size_t k_count = theta.size();
  if (k_count == 1) return {1.0};
  const auto& g = nu.parent();
  std::vector<double> weights(k_count, 0.0);
  std::vector<double> row(k_count);
  for (std::size_t i = 0; i < g.size(); ++i) {
    responsibilities_at(theta, g.points()[i], row);
    for (std::size_t k = 0; k < k_count; ++k) weights[k] += g.weight(i) * row[k];
  }
  return normalize_simplex(std::move(weights));
}

std::vector<double> update_weights_gradient(const EmpiricalDistribution& g, const GaussianMixtureParams& theta,
                                            const MmConfig& cfg, const LevelGrid& grid) {
  cfg.validate();
  const std::size_t k_count = theta.size();
  if (k_count == 1) return {1.0};

  const QuantileFunction target = empirical_quantiles(g, grid);
  const CumulativeSample sample(g);
  auto loss_of = [&](std::span<const double> w) {
    return w2_squared(target, gmm_quantile_function(theta.with_weights(w), grid));
  };

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& c : theta.components()) {
    lo = std::min(lo, c.mean - kGradientTailSds * c.sd);
    hi = std::max(hi, c.mean + kGradientTailSds * c.sd);
  }
  const double h = (hi - lo) / static_cast<double>(kGradientNodes - 1);

  std::vector<double> current = theta.weights();
  double current_loss = loss_of(current);
  double step = cfg.gradient_step;
  std::vector<double> grad(k_count);

  for (std::size_t iter = 0; iter < cfg.gradient_iters; ++iter) {
    const auto mixture = theta.with_weights(current);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t j = 0; j < kGradientNodes; ++j) {
      const double t = lo + h * static_cast<double>(j);
      const double node_weight = (j == 0 || j + 1 == kGradientNodes) ? 0.5 * h : h;
      const double gap = sample.quantile(gmm_cdf(mixture, t)) - t;
      for (std::size_t k = 0; k < k_count; ++k) {
        grad[k] += node_weight * gap * normal_cdf((t - mixture[k].mean) / mixture[k].sd);
      }
    }
    for (double v : grad) {
      if (!std::isfinite(v)) throw NumericalError("update_weights_gradient: non-finite gradient", iter);
    }
    // Only differences between coordinates survive the simplex projection;
    // the step is taken along the centred gradient scaled to unit max-norm.
    const double mean_grad = std::accumulate(grad.begin(), grad.end(), 0.0) / static_cast<double>(k_count);
    double scale = 0.0;
    for (auto& v : grad) {
      v -= mean_grad;
      scale = std::max(scale, std::abs(v));
    }
    if (scale == 0.0) break;
    std::vector<double> moved(k_count);
    for (std::size_t k = 0; k < k_count; ++k) moved[k] = current[k] - step * grad[k] / scale;
    std::vector<double> candidate = project_to_simplex(moved);
    const double candidate_loss = loss_of(candidate);
    if (candidate_loss < current_loss) {
      current = std::move(candidate);
      current_loss = candidate_loss;
    } else {
      step *= 0.5;
    }
  }
  return current;
}

GaussianMixtureParams update_components(const MixtureDecomposition& nu, const GaussianMixtureParams& previous,
                                        const LevelGrid& grid) {
  if (nu.components() != previous.size()) {
    throw InvalidInputError("decomposition and mixture differ in component count");
  }
  const QuantileFunction base = gaussian_quantile_function(0.0, 1.0, grid);
  std::vector<GaussianComponent> out(previous.components().begin(), previous.components().end());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto gk = nu.component(k);
    if (!gk || !has_fittable_support(*gk)) continue;
    const QuantileFunction target = empirical_quantiles(*gk, grid);
    if (target.values().front() == target.values().back()) continue;
    const LocationScale fit = fit_location_scale(target, base);
    out[k].mean = fit.mean;
    out[k].sd = fit.sd;
  }
  return GaussianMixtureParams(std::move(out));
}

GaussianMixtureParams initial_mixture(const EmpiricalDistribution& g, std::size_t k_count) {
  if (k_count < 1) throw InvalidInputError("number of components must be at least 1");
  const auto order = g.order();
  const std::size_t n = g.size();
  std::vector<std::vector<double>> slice_x(k_count);
  std::vector<std::vector<double>> slice_w(k_count);
  double before = 0.0;
  double overall_mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = order[j];
    const double w = g.weight(i);
    const double mid = g.weighted() ? before + 0.5 * w : (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    before += w;
    overall_mean += w * g.points()[i];
    const auto slot = std::min(k_count - 1, static_cast<std::size_t>(mid * static_cast<double>(k_count)));
    slice_x[slot].push_back(g.points()[i]);
    slice_w[slot].push_back(w);
  }
  const auto all_w = g.weights();
  const double overall_sd = weighted_sd(g.points(), all_w, overall_mean);
  const double fallback_sd = std::max(overall_sd / static_cast<double>(k_count), kSdFloor);

  std::vector<GaussianComponent> comps(k_count);
  double last_mean = g.points()[order.front()];
  for (std::size_t s = 0; s < k_count; ++s) {
    const double total = std::accumulate(slice_w[s].begin(), slice_w[s].end(), 0.0);
    double mean = last_mean;
    double sd = fallback_sd;
    if (!slice_x[s].empty() && total > 0.0) {
      mean = 0.0;
      for (std::size_t j = 0; j < slice_x[s].size(); ++j) mean += slice_w[s][j] * slice_x[s][j];
      mean /= total;
      const double slice_sd = weighted_sd(slice_x[s], slice_w[s], mean);
      if (slice_sd > kSdFloor) sd = slice_sd;
    }
    last_mean = mean;
    comps[s] = {1.0 / static_cast<double>(k_count), mean, sd};
  }
  return GaussianMixtureParams(std::move(comps));
}

MmFit fit_gmm_mm(const EmpiricalDistribution& g, std::size_t k, const MmConfig& cfg, const LevelGrid& grid) {
  cfg.validate();
  if (k < 1) throw InvalidInputError("number of components must be at least 1");
  if (k > g.distinct_count()) throw InvalidInputError("more components than distinct sample points");

  MmFit best = run_mm(g, initial_mixture(g, k), cfg, grid);
  if (cfg.random_restarts == 0) return best;

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> pts(g.points().begin(), g.points().end());
  const auto all_w = g.weights();
  double mean = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) mean += all_w[i] * pts[i];
  const double spread = std::max(weighted_sd(pts, all_w, mean) / static_cast<double>(k), kSdFloor);
  for (std::size_t r = 0; r < cfg.random_restarts; ++r) {
    std::vector<double> means;
    std::sample(pts.begin(), pts.end(), std::back_inserter(means), static_cast<std::ptrdiff_t>(k), rng);
    std::vector<GaussianComponent> comps;
    for (double m : means) comps.push_back({1.0 / static_cast<double>(k), m, spread});
    MmFit candidate = run_mm(g, GaussianMixtureParams(std::move(comps)), cfg, grid);
    if (candidate.trace.records.back().loss < best.trace.records.back().loss) best = std::move(candidate);
  }
  return best;
}

}  // namespace wdl
