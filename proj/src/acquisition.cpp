#include "blade/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "blade/error.hpp"
#include "blade/rng.hpp"

namespace blade {

double standard_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mean, double variance, double incumbent) {
  if (!std::isfinite(mean) || !std::isfinite(variance) || !std::isfinite(incumbent)) {
    throw Error(Errc::NonFinite, "expected improvement inputs must be finite");
  }
  if (variance < 0.0) {
    throw Error(Errc::InvalidConfig, "expected improvement needs a non-negative variance");
  }
  const double gain = mean - incumbent;
  const double sigma = std::sqrt(variance);
  if (sigma == 0.0) {
    return std::max(0.0, gain);
  }
  const double z = gain / sigma;
  return std::max(0.0, gain * standard_normal_cdf(z) + sigma * standard_normal_pdf(z));
}

Proposal propose_next(const AcquisitionContext& context) {
  if (context.gp == nullptr || context.gp->empty()) {
    throw Error(Errc::EmptyState, "propose_next needs a GP with at least one observation");
  }
  const GpState& gp = *context.gp;
  const SearchBox& box = context.search_box;
  box.validate();
  if (box.dim() != gp.dim()) {
    throw Error(Errc::DimMismatch, "search box dimension does not match the GP");
  }
  const double incumbent = gp.incumbent();

  Eigen::VectorXd best_x;
  double best_ei = -1.0;
  std::size_t evaluations = 0;
  const auto objective = [&](const Eigen::VectorXd& x) {
    const Posterior post = gp.posterior(x);
    const double ei = expected_improvement(post.mean, post.variance, incumbent);
    ++evaluations;
    if (ei > best_ei) {
      best_ei = ei;
      best_x = x;
    }
    return ei;
  };

  CmaConfig config;
  config.box = box;
  const std::size_t lambda = CmaConstants::defaults(box.dim()).lambda;
  const std::size_t budget = std::max(context.cma_budget, 2 * lambda);
  const auto dim = static_cast<Eigen::Index>(box.dim());

  // Uniform screening sample; its best points seed the CMA-ES runs.
  const std::size_t screen = std::max<std::size_t>(1, budget / 5);
  Rng rng(mix_seed(context.seed, 0));
  std::vector<std::pair<double, Eigen::VectorXd>> samples;
  samples.reserve(screen);
  for (std::size_t i = 0; i < screen; ++i) {
    Eigen::VectorXd x(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      x[k] = rng.uniform(box.low[k], box.high[k]);
    }
    const double ei = objective(x);
    samples.emplace_back(ei, std::move(x));
  }
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(samples.front().second);
  starts.push_back(box.clamp(gp.observations()[gp.incumbent_index()].prompt.values()));
  for (std::size_t i = 1; i < samples.size() && starts.size() < 8; ++i) {
    starts.push_back(samples[i].second);
  }

  const double sigma0 = 0.1 * box.width().minCoeff();
  std::size_t run = 0;
  while (run < starts.size() && budget > evaluations && budget - evaluations >= lambda) {
    const std::size_t remaining = budget - evaluations;
    const std::size_t share = run + 1 == starts.size() ? remaining : std::max(lambda, remaining / 2);
    cma_maximize(objective, starts[run], sigma0, share, mix_seed(context.seed, run + 1), config);
    ++run;
  }
  return Proposal{LowDimPrompt(best_x), best_ei, evaluations};
}

}  // namespace blade
