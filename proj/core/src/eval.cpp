#include "wdl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wdl/errors.hpp"

namespace wdl {
namespace {

void check_curve_inputs(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                        std::span<const double> feature_values) {
  if (x.rows() == 0) throw InvalidInputError("partial dependence needs at least one covariate row");
  if (x.cols() != model.input_dim()) {
    throw InvalidInputError("covariates have " + std::to_string(x.cols()) + " columns, model expects " +
                            std::to_string(model.input_dim()));
  }
  if (feature >= x.cols()) throw InvalidInputError("feature index " + std::to_string(feature) + " out of range");
  if (feature_values.empty()) throw InvalidInputError("feature grid is empty");
  for (std::size_t j = 0; j < feature_values.size(); ++j) {
    if (!std::isfinite(feature_values[j])) throw InvalidInputError("feature grid values must be finite");
    if (j > 0 && !(feature_values[j] > feature_values[j - 1])) {
      throw InvalidInputError("feature grid must be strictly increasing");
    }
  }
}

void check_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidInputError("rho must lie in (0, 1)");
}

}  // namespace

QuantileFunction mean_quantile_function(std::span<const QuantileFunction> qs) {
  if (qs.empty()) throw InvalidInputError("cannot average zero quantile functions");
  std::vector<double> mean(qs.front().size(), 0.0);
  for (const auto& q : qs) {
    if (!(q.grid() == qs.front().grid())) throw InvalidInputError("quantile functions use different grids");
    for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += q[l];
  }
  for (auto& v : mean) v /= static_cast<double>(qs.size());
  // Averages of non-decreasing sequences are non-decreasing up to rounding.
  for (std::size_t l = 1; l < mean.size(); ++l) mean[l] = std::max(mean[l], mean[l - 1]);
  return QuantileFunction(qs.front().grid(), std::move(mean));
}

EvalReport prediction_loss(std::span<const QuantileFunction> observed, std::span<const QuantileFunction> predicted) {
  if (observed.size() != predicted.size()) {
    throw InvalidInputError("observed and predicted counts differ: " + std::to_string(observed.size()) + " vs " +
                            std::to_string(predicted.size()));
  }
  if (observed.empty()) throw InvalidInputError("prediction_loss needs at least one pair");
  EvalReport report;
  report.per_sample.reserve(observed.size());
  double total = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    report.per_sample.push_back(w2_squared(observed[i], predicted[i]));
    total += report.per_sample.back();
  }
  const auto n = static_cast<double>(observed.size());
  report.mean_loss = total / n;

  const QuantileFunction q_bar = mean_quantile_function(observed);
  double spread = 0.0;
  for (const auto& q : observed) spread += w2_squared(q, q_bar);
  report.variance = spread / n;
  // Identical observations leave only rounding noise in the average.
  double scale = 0.0;
  for (double v : q_bar.values()) scale += v * v;
  scale /= static_cast<double>(q_bar.size());
  const double noise = 64.0 * std::numeric_limits<double>::epsilon();
  if (!(report.variance > noise * noise * scale)) {
    report.r_squared = std::nan("");
    throw UndefinedRSquaredError(std::move(report));
  }
  report.r_squared = 1.0 - report.mean_loss / report.variance;
  return report;
}

IceCurves ice_curves(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                     std::span<const double> feature_values, double rho) {
  check_curve_inputs(model, x, feature, feature_values);
  check_rho(rho);
  IceCurves out{feature, rho, {feature_values.begin(), feature_values.end()}, Matrix(x.rows(), feature_values.size())};
  std::vector<double> row(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).begin(), x.row(r).end(), row.begin());
    for (std::size_t j = 0; j < feature_values.size(); ++j) {
      row[feature] = feature_values[j];
      out.values(r, j) = gmm_quantile(predict_params(model, row), rho);
    }
  }
  return out;
}

PdpCurve functional_pdp(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                        std::span<const double> feature_values, double rho) {
  const IceCurves ice = ice_curves(model, x, feature, feature_values, rho);
  PdpCurve out{feature, rho, ice.feature_values, std::vector<double>(feature_values.size(), 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < feature_values.size(); ++j) out.values[j] += ice.values(r, j);
  }
  for (auto& v : out.values) v /= static_cast<double>(x.rows());
  return out;
}

ParamCurves marginal_param_curve(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                                 std::span<const double> feature_values) {
  check_curve_inputs(model, x, feature, feature_values);
  const std::size_t k_count = model.components();
  const std::size_t g = feature_values.size();
  ParamCurves out{feature, {feature_values.begin(), feature_values.end()}, Matrix(g, k_count), Matrix(g, k_count),
                  Matrix(g, k_count)};
  std::vector<double> row(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).begin(), x.row(r).end(), row.begin());
    for (std::size_t j = 0; j < g; ++j) {
      row[feature] = feature_values[j];
      const GaussianMixtureParams theta = predict_params(model, row);
      for (std::size_t k = 0; k < k_count; ++k) {
        out.weight(j, k) += theta[k].weight;
        out.mean(j, k) += theta[k].mean;
        out.sd(j, k) += theta[k].sd;
      }
    }
  }
  const auto n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t k = 0; k < k_count; ++k) {
      out.weight(j, k) /= n;
      out.mean(j, k) /= n;
      out.sd(j, k) /= n;
    }
  }
  return out;
}

std::vector<double> feature_range(const Matrix& x, std::size_t feature, std::size_t count) {
  if (x.rows() == 0) throw InvalidInputError("feature_range needs at least one row");
  if (feature >= x.cols()) throw InvalidInputError("feature index " + std::to_string(feature) + " out of range");
  if (count < 1) throw InvalidInputError("feature grid needs at least one value");
  double lo = x(0, feature);
  double hi = lo;
  for (std::size_t r = 1; r < x.rows(); ++r) {
    lo = std::min(lo, x(r, feature));
    hi = std::max(hi, x(r, feature));
  }
  if (count == 1 || lo == hi) return {lo};
  std::vector<double> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    out[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(count - 1);
  }
  out.back() = hi;
  return out;
}

}  // namespace wdl
