#pragma once

// Minimum-Wasserstein fitting of a Gaussian mixture to a single empirical
// distribution by majorization-minimization.
//
// The surrogate R(nu, theta) = sum_k pi_k W2^2(g_k, f_k) upper-bounds
// L(theta) = W2^2(g, f_theta) for any decomposition g = sum_k pi_k g_k and
// touches it when g_k is built from the transport map G^-1 o F_theta. Each
// iteration refits the Gaussian components against their g_k, refreshes the
// weights, then recomputes the decomposition.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "wdl/distributions.hpp"

namespace wdl {

enum class WeightUpdate { kEmApprox, kProjectedGradient };

struct MmConfig {
  std::size_t max_iters = 200;
  double rel_tol = 1e-8;
  WeightUpdate pi_update = WeightUpdate::kEmApprox;
  double gradient_step = 0.05;
  std::size_t gradient_iters = 50;
  // Extra initializations drawn from this seed; 0 restarts keeps the
  // deterministic equal-mass start only.
  std::size_t random_restarts = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MmTraceRecord {
  double loss;       // L(theta)
  double surrogate;  // R(nu, theta) with nu = decompose(g, theta)
};

struct MmTrace {
  std::vector<MmTraceRecord> records;
  // Iterations where the full weight update increased L and was shortened.
  std::size_t rejected_steps = 0;
};

// Per-component reweightings of a parent sample. responsibility(i, k) is the
// share of point i assigned to component k; rows sum to 1.
class MixtureDecomposition {
 public:
  MixtureDecomposition(EmpiricalDistribution parent, std::vector<double> component_weights,
                       std::vector<double> responsibilities, std::size_t fallback_points = 0);

  const EmpiricalDistribution& parent() const { return parent_; }
  std::size_t components() const { return component_weights_.size(); }
  std::span<const double> component_weights() const { return component_weights_; }
  double responsibility(std::size_t point, std::size_t k) const {
    return responsibilities_[point * components() + k];
  }

  // Unnormalized mass w(x) r_k(x) / pi_k carried by g_k at each point.
  std::vector<double> component_mass(std::size_t k) const;
  // Total parent mass assigned to component k.
  double assigned_mass(std::size_t k) const;
  // g_k normalized to a probability distribution; empty when the component
  // holds no usable mass.
  std::optional<EmpiricalDistribution> component(std::size_t k) const;

  // Points where every component density underflowed and responsibilities
  // fell back to 1/K.
  std::size_t fallback_points() const { return fallback_points_; }

 private:
  EmpiricalDistribution parent_;
  std::vector<double> component_weights_;
  std::vector<double> responsibilities_;
  std::size_t fallback_points_;
};

struct LocationScale {
  double mean;
  double sd;
};

// Least-squares fit of target = mean + sd * base over the grid.
LocationScale fit_location_scale(const QuantileFunction& target, const QuantileFunction& base);

// L(theta) on the grid.
double mixture_loss(const EmpiricalDistribution& g, const GaussianMixtureParams& theta, const LevelGrid& grid);

// Responsibilities evaluated at the transported points F_theta^-1(G(x)) with
// the midpoint cdf convention G(x) = (rank - 0.5) / n.
MixtureDecomposition decompose(const EmpiricalDistribution& g, const GaussianMixtureParams& theta);

// R(nu, theta). Components without usable mass contribute zero.
double surrogate_loss(const MixtureDecomposition& nu, const GaussianMixtureParams& theta, const LevelGrid& grid);

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> v);

// EM-style weight refresh at the original sample points.
std::vector<double> update_weights_em(const MixtureDecomposition& nu, const GaussianMixtureParams& theta);

// Projected gradient descent on the weights with the component shapes fixed.
std::vector<double> update_weights_gradient(const EmpiricalDistribution& g, const GaussianMixtureParams& theta,
                                            const MmConfig& cfg, const LevelGrid& grid);

// Refits each component against its g_k; components without enough distinct
// support keep their entries from `previous`. Weights are carried over.
GaussianMixtureParams update_components(const MixtureDecomposition& nu, const GaussianMixtureParams& previous,
                                        const LevelGrid& grid);

// Equal-mass slicing start: per-slice weighted mean and sd, uniform weights.
GaussianMixtureParams initial_mixture(const EmpiricalDistribution& g, std::size_t k);

struct MmFit {
  GaussianMixtureParams theta;
  MmTrace trace;
};

MmFit fit_gmm_mm(const EmpiricalDistribution& g, std::size_t k, const MmConfig& cfg, const LevelGrid& grid);

}  // namespace wdl
