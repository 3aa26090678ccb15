#include "blade/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "blade/error.hpp"
#include "blade/io.hpp"

namespace blade {

SearchBox SearchBox::uniform(std::size_t dim, double low, double high) {
  SearchBox box{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), low),
                Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), high)};
  box.validate();
  return box;
}

void SearchBox::validate() const {
  if (low.size() == 0 || low.size() != high.size()) {
    throw Error(Errc::InvalidConfig, "search box bounds must be non-empty and of equal length");
  }
  if (!low.allFinite() || !high.allFinite() || (low.array() >= high.array()).any()) {
    throw Error(Errc::InvalidConfig, "search box bounds must be finite with low < high");
  }
}

Eigen::VectorXd SearchBox::clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(low).cwiseMin(high); }

bool SearchBox::contains(const Eigen::VectorXd& x) const {
  return x.size() == low.size() && (x.array() >= low.array()).all() && (x.array() <= high.array()).all();
}

CmaConstants CmaConstants::defaults(std::size_t dim, std::optional<std::size_t> lambda) {
  const double n = static_cast<double>(dim);
  CmaConstants c;
  c.lambda = lambda.value_or(4 + static_cast<std::size_t>(std::floor(3.0 * std::log(n))));
  c.mu = c.lambda / 2;
  c.weights.resize(static_cast<Eigen::Index>(c.mu));
  for (std::size_t i = 0; i < c.mu; ++i) {
    c.weights[static_cast<Eigen::Index>(i)] =
        std::log((static_cast<double>(c.lambda) + 1.0) / 2.0) - std::log(static_cast<double>(i + 1));
  }
  c.weights /= c.weights.sum();
  c.mu_eff = 1.0 / c.weights.squaredNorm();
  c.c_sigma = (c.mu_eff + 2.0) / (n + c.mu_eff + 5.0);
  c.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((c.mu_eff - 1.0) / (n + 1.0)) - 1.0) + c.c_sigma;
  c.c_c = (4.0 + c.mu_eff / n) / (n + 4.0 + 2.0 * c.mu_eff / n);
  c.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + c.mu_eff);
  c.c_mu = std::min(1.0 - c.c_1, 2.0 * (c.mu_eff - 2.0 + 1.0 / c.mu_eff) / ((n + 2.0) * (n + 2.0) + c.mu_eff));
  c.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  return c;
}

CmaEs::CmaEs(Eigen::VectorXd initial_mean, double sigma0, std::uint64_t seed, CmaConfig config)
    : config_(std::move(config)), mean_(std::move(initial_mean)), sigma_(sigma0), rng_(seed) {
  if (mean_.size() == 0) {
    throw Error(Errc::InvalidConfig, "CMA-ES needs dimension >= 1");
  }
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) {
    throw Error(Errc::InvalidConfig, "CMA-ES initial step size must be positive");
  }
  if (!mean_.allFinite()) {
    throw Error(Errc::InvalidConfig, "CMA-ES initial mean must be finite");
  }
  if (config_.population_size && *config_.population_size < 4) {
    throw Error(Errc::InvalidConfig, "CMA-ES population size must be at least 4");
  }
  if (config_.box) {
    config_.box->validate();
    if (config_.box->dim() != dim()) {
      throw Error(Errc::InvalidConfig, "CMA-ES box dimension does not match the mean");
    }
  }
  constants_ = CmaConstants::defaults(dim(), config_.population_size);
  const auto n = mean_.size();
  cov_ = Eigen::MatrixXd::Identity(n, n);
  basis_ = Eigen::MatrixXd::Identity(n, n);
  eigenvalues_ = Eigen::VectorXd::Ones(n);
  path_sigma_ = Eigen::VectorXd::Zero(n);
  path_c_ = Eigen::VectorXd::Zero(n);
}

double CmaEs::spread() const { return sigma_ * std::sqrt(eigenvalues_.maxCoeff()); }

std::vector<Eigen::VectorXd> CmaEs::ask() {
  if (awaiting_tell_) {
    throw Error(Errc::ProtocolError, "ask() called twice without tell()");
  }
  const auto n = mean_.size();
  const Eigen::VectorXd scales = eigenvalues_.cwiseSqrt();
  std::vector<Eigen::VectorXd> out;
  out.reserve(constants_.lambda);
  for (std::size_t k = 0; k < constants_.lambda; ++k) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = rng_.normal();
    }
    Eigen::VectorXd x = mean_ + sigma_ * (basis_ * scales.cwiseProduct(z));
    if (config_.box) {
      x = config_.box->clamp(x);
    }
    out.push_back(std::move(x));
  }
  awaiting_tell_ = true;
  return out;
}

void CmaEs::tell(const std::vector<Eigen::VectorXd>& candidates, const std::vector<double>& fitness) {
  if (!awaiting_tell_) {
    throw Error(Errc::ProtocolError, "tell() called without a pending ask()");
  }
  if (candidates.size() != constants_.lambda || fitness.size() != constants_.lambda) {
    throw Error(Errc::LengthMismatch, "tell() expects " + std::to_string(constants_.lambda) +
                                          " candidates and fitnesses, got " + std::to_string(candidates.size()) +
                                          " and " + std::to_string(fitness.size()));
  }
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    if (!std::isfinite(fitness[i])) {
      throw Error(Errc::NonFiniteFitness, "fitness " + std::to_string(i) + " is not finite");
    }
    if (candidates[i].size() != mean_.size()) {
      throw Error(Errc::LengthMismatch, "candidate " + std::to_string(i) + " has the wrong dimension");
    }
  }
  awaiting_tell_ = false;
  const auto& c = constants_;
  const double n = static_cast<double>(dim());

  const auto [lo, hi] = std::minmax_element(fitness.begin(), fitness.end());
  if (*lo == *hi) {
    sigma_ *= std::exp(0.2 + c.c_sigma / c.d_sigma);
    ++generation_;
    return;
  }

  std::vector<std::size_t> order(fitness.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });

  const Eigen::VectorXd old_mean = mean_;
  Eigen::MatrixXd steps(mean_.size(), static_cast<Eigen::Index>(c.mu));
  Eigen::VectorXd step_w = Eigen::VectorXd::Zero(mean_.size());
  for (std::size_t i = 0; i < c.mu; ++i) {
    const Eigen::VectorXd y = (candidates[order[i]] - old_mean) / sigma_;
    steps.col(static_cast<Eigen::Index>(i)) = y;
    step_w += c.weights[static_cast<Eigen::Index>(i)] * y;
  }
  mean_ = old_mean + sigma_ * step_w;

  // C^{-1/2} y_w = B D^{-1} B^T y_w
  const Eigen::VectorXd whitened =
      basis_ * (basis_.transpose() * step_w).cwiseQuotient(eigenvalues_.cwiseSqrt());
  path_sigma_ = (1.0 - c.c_sigma) * path_sigma_ + std::sqrt(c.c_sigma * (2.0 - c.c_sigma) * c.mu_eff) * whitened;

  const double gens = static_cast<double>(generation_ + 1);
  const double ps_norm = path_sigma_.norm();
  const bool h_sigma =
      ps_norm / std::sqrt(1.0 - std::pow(1.0 - c.c_sigma, 2.0 * gens)) < (1.4 + 2.0 / (n + 1.0)) * c.chi_n;
  path_c_ = (1.0 - c.c_c) * path_c_;
  if (h_sigma) {
    path_c_ += std::sqrt(c.c_c * (2.0 - c.c_c) * c.mu_eff) * step_w;
  }

  // Rank-one plus rank-mu update; sum of weights is 1.
  const double delta_h = h_sigma ? 0.0 : c.c_c * (2.0 - c.c_c);
  Eigen::MatrixXd rank_mu = steps * c.weights.asDiagonal() * steps.transpose();
  cov_ = (1.0 + c.c_1 * delta_h - c.c_1 - c.c_mu) * cov_ + c.c_1 * path_c_ * path_c_.transpose() + c.c_mu * rank_mu;

  sigma_ *= std::exp((c.c_sigma / c.d_sigma) * (ps_norm / c.chi_n - 1.0));
  ++generation_;
  decompose();
}

void CmaEs::decompose() {
  cov_ = 0.5 * (cov_ + cov_.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov_);
  if (solver.info() != Eigen::Success) {
    throw Error(Errc::SingularCovariance, "CMA-ES covariance eigendecomposition failed");
  }
  Eigen::VectorXd values = solver.eigenvalues();
  const double floor = std::max(values.maxCoeff(), std::numeric_limits<double>::min()) * config_.eigen_floor;
  if (values.minCoeff() < floor) {
    values = values.cwiseMax(floor);
    cov_ = solver.eigenvectors() * values.asDiagonal() * solver.eigenvectors().transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose());
  }
  basis_ = solver.eigenvectors();
  eigenvalues_ = values;
}

CmaRunResult cma_maximize(const CmaObjective& objective, const Eigen::VectorXd& initial_mean, double sigma0,
                          std::size_t budget_evals, std::uint64_t seed, const CmaConfig& config) {
  CmaEs es(initial_mean, sigma0, seed, config);
  const std::size_t lambda = es.constants().lambda;
  if (budget_evals < lambda) {
    throw Error(Errc::InvalidConfig,
                "evaluation budget " + std::to_string(budget_evals) + " is below population size " + std::to_string(lambda));
  }
  CmaRunResult result;
  result.best_f = -std::numeric_limits<double>::infinity();
  while (result.evaluations + lambda <= budget_evals) {
    auto candidates = es.ask();
    std::vector<double> fitness(lambda);
    for (std::size_t i = 0; i < lambda; ++i) {
      double value = 0.0;
      try {
        value = objective(candidates[i]);
      } catch (const std::exception& e) {
        throw ObjectiveError(std::string("objective threw: ") + e.what(),
                             {candidates[i].data(), candidates[i].data() + candidates[i].size()});
      }
      if (!std::isfinite(value)) {
        throw ObjectiveError("objective returned a non-finite value",
                             {candidates[i].data(), candidates[i].data() + candidates[i].size()});
      }
      ++result.evaluations;
      fitness[i] = value;
      if (value > result.best_f) {
        result.best_f = value;
        result.best_x = candidates[i];
      }
    }
    es.tell(candidates, fitness);
    result.history.push_back({es.generation(), result.evaluations, result.best_f, es.sigma(), es.mean().norm()});
    if (es.spread() < config.tol_x) {
      break;
    }
  }
  return result;
}

void write_cma_history_csv(const std::filesystem::path& path, const std::vector<CmaGeneration>& history) {
  std::ostringstream out;
  out << "generation,evaluations,best_f,sigma,mean_norm\n";
  for (const auto& row : history) {
    out << row.generation << ',' << row.evaluations << ',' << io::format_double(row.best_f) << ','
        << io::format_double(row.sigma) << ',' << io::format_double(row.mean_norm) << '\n';
  }
  io::atomic_write(path, out.str());
}

}  // namespace blade
