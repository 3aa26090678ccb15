#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blade/gp.hpp"
#include "support/common.hpp"
#include "support/oracles.hpp"

using namespace blade;

namespace {

struct Instance {
  std::vector<Observation> observations;
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> ys;
};

Instance random_instance(Rng& rng, std::size_t n, std::size_t dim) {
  Instance inst;
  for (std::size_t i = 0; i < n; ++i) {
    inst.xs.push_back(testing::uniform_vector(rng, dim, -1.0, 1.0));
    inst.ys.push_back(rng.uniform01());
    inst.observations.push_back({LowDimPrompt(inst.xs.back()), inst.ys.back()});
  }
  return inst;
}

}  // namespace

TEST_SUITE("gp") {
  TEST_CASE("kernel closed forms") {
    KernelConfig kernel;
    const LowDimPrompt x(std::vector<double>{0.0, 0.0});
    CHECK(kernel_eval(kernel, x, x) == 1.0);
    CHECK(kernel_eval(kernel, x, LowDimPrompt(std::vector<double>{1.0, 0.0})) ==
          doctest::Approx(0.606531).epsilon(1e-6));
    kernel.signal_variance = 2.5;
    CHECK(kernel_eval(kernel, x, x) == 2.5);
    CHECK_ERRC(kernel_eval(kernel, x, LowDimPrompt::zeros(3)), Errc::DimMismatch);
    double previous = 3.0;
    for (double r = 0.0; r < 20.0; r += 0.5) {
      const double k = kernel_eval(kernel, x, LowDimPrompt(std::vector<double>{r, 0.0}));
      CHECK(k <= previous);
      previous = k;
    }
    CHECK(previous < 1e-12);
    KernelConfig bad;
    bad.lengthscale = 0.0;
    CHECK_ERRC(bad.validate(), Errc::InvalidConfig);
  }

  TEST_CASE("property: kernel symmetric and bounded") {
    Rng rng(3);
    KernelConfig kernel{1.7, 0.9};
    for (int i = 0; i < 200; ++i) {
      const auto x = testing::uniform_prompt(rng, 5, -3, 3);
      const auto y = testing::uniform_prompt(rng, 5, -3, 3);
      CHECK(kernel_eval(kernel, x, y) == kernel_eval(kernel, y, x));
      CHECK(kernel_eval(kernel, x, y) <= 1.7);
    }
  }

  TEST_CASE("update appends and keeps earlier observations") {
    GpState empty;
    CHECK_ERRC(empty.posterior(LowDimPrompt::zeros(2)), Errc::EmptyState);
    CHECK_ERRC(empty.incumbent(), Errc::EmptyState);
    const auto one = empty.update(LowDimPrompt(std::vector<double>{0.1, 0.2}), 0.4);
    CHECK(one.size() == 1);
    CHECK(empty.size() == 0);
    const auto two = one.update(LowDimPrompt(std::vector<double>{0.5, 0.2}), 0.9);
    CHECK(two.observations()[0].score == 0.4);
    CHECK(two.incumbent() == 0.9);
    CHECK(two.incumbent_index() == 1);
    CHECK_ERRC(two.update(LowDimPrompt::zeros(3), 0.1), Errc::DimMismatch);
    CHECK_ERRC(two.update(LowDimPrompt::zeros(2), std::nan("")), Errc::NonFinite);
    CHECK_ERRC(two.posterior(LowDimPrompt::zeros(3)), Errc::DimMismatch);
  }

  TEST_CASE("noiseless single observation interpolates") {
    GpOptions options;
    options.noise_variance = 0.0;
    const LowDimPrompt p(std::vector<double>{0.3, -0.7});
    const auto gp = GpState(options).update(p, 0.62);
    const auto post = gp.posterior(p);
    CHECK(post.mean == doctest::Approx(0.62).epsilon(1e-12));
    CHECK(post.variance <= 1e-10);
  }

  TEST_CASE("far query recovers the prior") {
    const LowDimPrompt p(std::vector<double>{0.0, 0.0});
    const LowDimPrompt far(std::vector<double>{100.0, 100.0});
    SUBCASE("without centering the prior mean is zero") {
      GpOptions options;
      options.center_targets = false;
      const auto gp = GpState(options).update(p, 0.8);
      const auto post = gp.posterior(far);
      CHECK(std::abs(post.mean) < 1e-12);
      CHECK(post.variance == doctest::Approx(1.0));
    }
    SUBCASE("with centering the prior mean is the running mean") {
      const auto gp = GpState().update(p, 0.8).update(LowDimPrompt(std::vector<double>{1.0, 0.0}), 0.4);
      const auto post = gp.posterior(far);
      CHECK(post.mean == doctest::Approx(0.6));
      CHECK(post.variance == doctest::Approx(1.0));
    }
  }

  TEST_CASE("duplicate noiseless point is rescued by jitter") {
    GpOptions options;
    options.noise_variance = 0.0;
    const LowDimPrompt p(std::vector<double>{0.5, 0.5});
    const auto gp = GpState(options).update(p, 0.3).update(p, 0.3);
    CHECK(gp.jitter() > 0.0);
    CHECK(gp.jitter() <= 1e-6);
    CHECK(gp.posterior(p).mean == doctest::Approx(0.3).epsilon(1e-6));
  }

  TEST_CASE("sequential updates match batch build and the dense oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
      const auto inst = random_instance(rng, 20, 10);
      GpState sequential;
      for (const auto& obs : inst.observations) sequential = sequential.update(obs.prompt, obs.score);
      const auto batch = GpState::from_observations({}, inst.observations);
      for (int q = 0; q < 5; ++q) {
        const auto query = testing::uniform_vector(rng, 10, -1.5, 1.5);
        const auto a = sequential.posterior(LowDimPrompt(query));
        const auto b = batch.posterior(LowDimPrompt(query));
        const auto want = oracle::dense_gp(inst.xs, inst.ys, query, 1.0, 1.0, 1e-4, batch.target_offset());
        CHECK(std::abs(a.mean - b.mean) <= 1e-8);
        CHECK(std::abs(a.mean - want.mean) <= 1e-8);
        CHECK(std::abs(a.variance - want.variance) <= 1e-8);
      }
    }
  }

  TEST_CASE("cached factor reproduces the covariance") {
    Rng rng(37);
    const auto inst = random_instance(rng, 15, 4);
    const auto gp = GpState::from_observations({}, inst.observations);
    const Eigen::MatrixXd& l = gp.cholesky_factor();
    Eigen::MatrixXd k(15, 15);
    for (int i = 0; i < 15; ++i)
      for (int j = 0; j < 15; ++j) k(i, j) = KernelConfig{}(inst.xs[i], inst.xs[j]) + (i == j ? 1e-4 : 0.0);
    CHECK((l * l.transpose() - k).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("property: noiseless interpolation, variance bounds, permutation invariance") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
      GpOptions options;
      options.noise_variance = 0.0;
      options.kernel.signal_variance = rng.uniform(0.5, 2.0);
      const auto inst = random_instance(rng, 12, 6);
      const auto gp = GpState::from_observations(options, inst.observations);
      for (const auto& obs : inst.observations) CHECK(std::abs(gp.posterior(obs.prompt).mean - obs.score) <= 1e-8);

      auto shuffled = inst.observations;
      for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
      const auto permuted = GpState::from_observations(options, shuffled);
      for (int q = 0; q < 10; ++q) {
        const auto query = testing::uniform_prompt(rng, 6, -2, 2);
        const auto a = gp.posterior(query);
        const auto b = permuted.posterior(query);
        CHECK(a.variance >= 0.0);
        CHECK(a.variance <= options.kernel.signal_variance + 1e-10);
        CHECK(std::abs(a.mean - b.mean) <= 1e-8);
        CHECK(std::abs(a.variance - b.variance) <= 1e-8);
      }
    }
  }

  TEST_CASE("property: adding an observation never increases variance") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
      const auto inst = random_instance(rng, 10, 3);
      GpState gp;
      const auto query = testing::uniform_prompt(rng, 3);
      double previous = 1e300;
      for (const auto& obs : inst.observations) {
        gp = gp.update(obs.prompt, obs.score);
        const double v = gp.posterior(query).variance;
        CHECK(v <= previous + 1e-8);
        previous = v;
      }
    }
  }

  TEST_CASE("json round-trip is bit-identical") {
    Rng rng(47);
    const auto inst = random_instance(rng, 8, 4);
    GpOptions options;
    options.kernel.lengthscale = 1.3;
    const auto gp = GpState::from_observations(options, inst.observations);
    const auto back = GpState::from_json(nlohmann::json::parse(gp.to_json().dump()));
    for (int q = 0; q < 10; ++q) {
      const auto query = testing::uniform_prompt(rng, 4);
      CHECK(gp.posterior(query).mean == back.posterior(query).mean);
      CHECK(gp.posterior(query).variance == back.posterior(query).variance);
    }
    CHECK(back.options().kernel.lengthscale == 1.3);
  }
}
