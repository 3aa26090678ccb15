#pragma once

#include <cstddef>
#include <cstdint>

#include "blade/cmaes.hpp"
#include "blade/core.hpp"
#include "blade/gp.hpp"

namespace blade {

// E[max(0, F - incumbent)] for F ~ N(mean, variance), in closed form:
// (mean - f*) Phi(z) + sigma phi(z) with z = (mean - f*) / sigma, and
// max(0, mean - f*) when the variance is zero. Throws NonFinite on NaN/inf
// input and InvalidConfig on negative variance.
double expected_improvement(double mean, double variance, double incumbent);

double standard_normal_pdf(double z);
double standard_normal_cdf(double z);

struct AcquisitionContext {
  const GpState* gp = nullptr;
  SearchBox search_box;
  // Total EI evaluations: a fifth go to a seeded uniform screening sample,
  // the rest to CMA-ES runs started from the best screened points and the
  // incumbent's location.
  std::size_t cma_budget = 2000;
  std::uint64_t seed = 0;

  // The incumbent f*: the best score observed in gp.
  double incumbent() const { return gp->incumbent(); }
};

struct Proposal {
  LowDimPrompt prompt;
  double expected_improvement;
  std::size_t evaluations;
};

// Maximizes EI over the search box with CMA-ES. The returned point is the
// sampled candidate with the highest EI (first found on ties), so its EI is
// at least that of every point the inner search visited.
Proposal propose_next(const AcquisitionContext& context);

}  // namespace blade
