#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "blade/core.hpp"

namespace blade {

// Squared-exponential covariance sigma_f^2 * exp(-||x - y||^2 / (2 l^2)).
struct KernelConfig {
  double signal_variance = 1.0;
  double lengthscale = 1.0;

  void validate() const;
  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
};

// Throws DimMismatch when the prompts differ in dimension.
double kernel_eval(const KernelConfig& kernel, const LowDimPrompt& x, const LowDimPrompt& y);

struct GpOptions {
  KernelConfig kernel;
  double noise_variance = 1e-4;
  // Zero prior mean on targets shifted by their running mean; the shift is
  // added back to the posterior mean.
  bool center_targets = true;
};

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
  // Magnitude removed when a slightly negative variance was clamped to zero.
  double clamp = 0.0;
};

struct Observation {
  LowDimPrompt prompt;
  double score;
};

// Immutable GP snapshot. update() returns a new snapshot with the observation
// appended and the Cholesky factor of (C + sigma_n^2 I) rebuilt. When the
// plain factorization is numerically singular a diagonal jitter from the
// ladder 1e-10, 1e-9, ..., 1e-6 is added; jitter() reports the amount used.
class GpState {
 public:
  explicit GpState(GpOptions options = {});

  static GpState from_observations(GpOptions options, const std::vector<Observation>& observations);

  GpState update(const LowDimPrompt& prompt, double score) const;

  Posterior posterior(const LowDimPrompt& prompt) const;
  // Unchecked-dimension fast path for acquisition inner loops.
  Posterior posterior(const Eigen::VectorXd& point) const;

  std::size_t size() const { return observations_.size(); }
  bool empty() const { return observations_.empty(); }
  std::size_t dim() const { return dim_; }
  const std::vector<Observation>& observations() const { return observations_; }
  const GpOptions& options() const { return options_; }
  double jitter() const { return jitter_; }
  double target_offset() const { return offset_; }
  // max_i y_i; throws EmptyState.
  double incumbent() const;
  // Index of the first observation attaining the incumbent.
  std::size_t incumbent_index() const;
  const Eigen::MatrixXd& cholesky_factor() const { return factor_; }

  nlohmann::json to_json() const;
  // Rebuilds the factorization from the stored observations.
  static GpState from_json(const nlohmann::json& doc);

 private:
  void refactor();

  GpOptions options_;
  std::size_t dim_ = 0;
  std::vector<Observation> observations_;
  Eigen::MatrixXd inputs_;
  Eigen::MatrixXd factor_;
  Eigen::VectorXd alpha_;
  double offset_ = 0.0;
  double jitter_ = 0.0;
};

}  // namespace blade
