#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "blade/rng.hpp"

namespace blade {

// Axis-aligned box with finite bounds and low < high in every coordinate.
struct SearchBox {
  Eigen::VectorXd low;
  Eigen::VectorXd high;

  static SearchBox uniform(std::size_t dim, double low, double high);
  std::size_t dim() const { return static_cast<std::size_t>(low.size()); }
  void validate() const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
  bool contains(const Eigen::VectorXd& x) const;
  Eigen::VectorXd center() const { return 0.5 * (low + high); }
  Eigen::VectorXd width() const { return high - low; }
};

struct CmaConfig {
  // Defaults to 4 + floor(3 ln d).
  std::optional<std::size_t> population_size;
  // Candidates returned by ask() are clamped into this box when set.
  std::optional<SearchBox> box;
  // run() stops early once sigma * sqrt(max eigenvalue of C) drops below this.
  double tol_x = 1e-12;
  // Eigenvalues of C are floored at this fraction of the largest one.
  double eigen_floor = 1e-14;
};

// Strategy parameters; default values follow Hansen's 2016 CMA-ES tutorial.
struct CmaConstants {
  std::size_t lambda = 0;    // 4 + floor(3 ln n)
  std::size_t mu = 0;        // floor(lambda / 2)
  Eigen::VectorXd weights;   // w_i ∝ ln((lambda + 1) / 2) - ln i, i = 1..mu, normalized to sum 1
  double mu_eff = 0.0;       // 1 / sum w_i^2
  double c_sigma = 0.0;      // (mu_eff + 2) / (n + mu_eff + 5)
  double d_sigma = 0.0;      // 1 + 2 max(0, sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
  double c_c = 0.0;          // (4 + mu_eff / n) / (n + 4 + 2 mu_eff / n)
  double c_1 = 0.0;          // 2 / ((n + 1.3)^2 + mu_eff)
  double c_mu = 0.0;         // min(1 - c_1, 2 (mu_eff - 2 + 1 / mu_eff) / ((n + 2)^2 + mu_eff))
  double chi_n = 0.0;        // E||N(0, I)|| ≈ sqrt(n) (1 - 1 / (4n) + 1 / (21 n^2))

  static CmaConstants defaults(std::size_t dim, std::optional<std::size_t> lambda = std::nullopt);
};

// Maximizing CMA-ES with a strict ask/tell protocol: ask() twice without an
// intervening tell(), or tell() without a pending ask(), is a ProtocolError.
class CmaEs {
 public:
  CmaEs(Eigen::VectorXd initial_mean, double sigma0, std::uint64_t seed, CmaConfig config = {});

  std::vector<Eigen::VectorXd> ask();
  // Fitness is maximized. A generation whose fitness values are all equal
  // carries no ranking information: mean and covariance are kept and sigma is
  // enlarged by exp(0.2 + c_sigma / d_sigma).
  void tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness);

  const Eigen::VectorXd& mean() const { return mean_; }
  double sigma() const { return sigma_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::VectorXd& path_sigma() const { return path_sigma_; }
  const Eigen::VectorXd& path_c() const { return path_c_; }
  std::size_t generation() const { return generation_; }
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const CmaConstants& constants() const { return constants_; }
  const CmaConfig& config() const { return config_; }
  bool awaiting_tell() const { return awaiting_tell_; }
  // sigma * sqrt(largest eigenvalue of C).
  double spread() const;

 private:
  void decompose();

  CmaConfig config_;
  CmaConstants constants_;
  Eigen::VectorXd mean_;
  double sigma_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd eigenvalues_;
  Eigen::VectorXd path_sigma_;
  Eigen::VectorXd path_c_;
  std::size_t generation_ = 0;
  bool awaiting_tell_ = false;
  Rng rng_;
};

struct CmaGeneration {
  std::size_t generation;
  std::size_t evaluations;
  double best_f;
  double sigma;
  double mean_norm;
};

struct CmaRunResult {
  Eigen::VectorXd best_x;
  double best_f;
  std::size_t evaluations = 0;
  std::vector<CmaGeneration> history;
};

using CmaObjective = std::function<double(const Eigen::VectorXd&)>;

// Maximizes `objective` with at most budget_evals calls (whole generations
// only). Throws InvalidConfig if budget_evals < lambda, and ObjectiveError
// carrying the candidate if the objective throws or returns a non-finite value.
CmaRunResult cma_maximize(const CmaObjective& objective, const Eigen::VectorXd& initial_mean, double sigma0,
                          std::size_t budget_evals, std::uint64_t seed, const CmaConfig& config = {});

// Columns: generation, evaluations, best_f, sigma, mean_norm.
void write_cma_history_csv(const std::filesystem::path& path, const std::vector<CmaGeneration>& history);

}  // namespace blade
