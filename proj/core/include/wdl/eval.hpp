#pragma once

// Prediction metrics and partial-dependence style views of a fitted model.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wdl/distributions.hpp"
#include "wdl/matrix.hpp"
#include "wdl/scgmm.hpp"

namespace wdl {

struct EvalReport {
  std::vector<double> per_sample;  // W2^2 between each observed/predicted pair
  double mean_loss = 0.0;
  // Mean W2^2 from each observation to the pointwise mean quantile function.
  double variance = 0.0;
  double r_squared = 0.0;
};

// Raised when every observation coincides, so the R^2 denominator vanishes.
// The loss part of the report is still filled in.
class UndefinedRSquaredError : public std::runtime_error {
 public:
  explicit UndefinedRSquaredError(EvalReport report)
      : std::runtime_error("R^2 is undefined: observed quantile functions have zero variance"),
        report_(std::move(report)) {}
  const EvalReport& report() const { return report_; }

 private:
  EvalReport report_;
};

EvalReport prediction_loss(std::span<const QuantileFunction> observed, std::span<const QuantileFunction> predicted);

// Pointwise mean of quantile functions on a shared grid.
QuantileFunction mean_quantile_function(std::span<const QuantileFunction> qs);

struct PdpCurve {
  std::size_t feature;
  double rho;
  std::vector<double> feature_values;
  std::vector<double> values;
};

// values(r, j): rho-quantile for row r with the feature set to feature_values[j].
struct IceCurves {
  std::size_t feature;
  double rho;
  std::vector<double> feature_values;
  Matrix values;
};

// Row j, column k holds the averaged parameter of component k at feature_values[j].
struct ParamCurves {
  std::size_t feature;
  std::vector<double> feature_values;
  Matrix weight;
  Matrix mean;
  Matrix sd;
};

PdpCurve functional_pdp(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                        std::span<const double> feature_values, double rho);
IceCurves ice_curves(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                     std::span<const double> feature_values, double rho);
ParamCurves marginal_param_curve(const ScgmmModel& model, const Matrix& x, std::size_t feature,
                                 std::span<const double> feature_values);

// `count` evenly spaced values from the smallest to the largest entry of column `feature`.
std::vector<double> feature_range(const Matrix& x, std::size_t feature, std::size_t count);

}  // namespace wdl
