#include <doctest.h>

#include <cmath>

#include "blade/synthetic.hpp"
#include "support/common.hpp"

using namespace blade;

namespace {

FixtureSpec small_spec(std::uint64_t seed) {
  FixtureSpec spec;
  spec.n_questions = 16;
  spec.d = 4;
  spec.n_tokens = 2;
  spec.hidden_dim = 32;
  spec.seed = seed;
  spec.projection_seed = seed + 1;
  return spec;
}

}  // namespace

TEST_SUITE("synthetic") {
  TEST_CASE("utility is one at the target and exp(-1/2) one bandwidth away") {
    SyntheticTask task;
    task.target = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
    task.bandwidth = 0.8;
    CHECK(utility(task, task.target) == 1.0);
    Eigen::VectorXd shifted = task.target;
    shifted[2] += 0.8;
    CHECK(utility(task, shifted) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
    CHECK_ERRC(utility(task, Eigen::VectorXd::Zero(5)), Errc::DimMismatch);
  }

  TEST_CASE("property: utility decreases along rays from the target") {
    Rng rng(149);
    SyntheticTask task;
    task.target = testing::uniform_vector(rng, 10, -1, 1);
    task.bandwidth = 1.3;
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::VectorXd dir = testing::uniform_vector(rng, 10, -1, 1).normalized();
      double previous = 1.0;
      for (double r = 0.1; r < 6.0; r += 0.1) {
        const double u = utility(task, Eigen::VectorXd(task.target + r * dir));
        CHECK(u < previous);
        CHECK(u > 0.0);
        previous = u;
      }
    }
  }

  TEST_CASE("fixture optimum scores one and far prompts score nothing") {
    const auto fixture = make_fixture(small_spec(3));
    CHECK(fixture.batch.size() == 16);
    CHECK(fixture.optimum.values().cwiseAbs().maxCoeff() <= fixture.spec.optimum_radius);
    CHECK(utility(fixture.task, project_flat(fixture.projection, fixture.optimum)) == doctest::Approx(1.0).epsilon(1e-12));
    const LowDimPrompt far(Eigen::VectorXd(fixture.optimum.values() + Eigen::VectorXd::Constant(4, 200.0)));
    CHECK(utility(fixture.task, project_flat(fixture.projection, far)) < 1e-12);
    for (const auto& q : fixture.batch) {
      const double t = fixture.task.threshold_for(q.id());
      CHECK(t >= 0.2);
      CHECK(t <= 0.8);
      CHECK_FALSE(fixture.task.fact_token_for(q.id()).empty());
    }
  }

  TEST_CASE("same seed gives the same fixture") {
    const auto a = make_fixture(small_spec(5));
    const auto b = make_fixture(small_spec(5));
    CHECK(a.projection == b.projection);
    CHECK(a.optimum == b.optimum);
    CHECK(a.batch == b.batch);
    CHECK(a.task.thresholds == b.task.thresholds);
    CHECK(a.task.fact_tokens == b.task.fact_tokens);
    CHECK_FALSE(make_fixture(small_spec(6)).optimum == a.optimum);
  }

  TEST_CASE("questions have the advertised shape") {
    const auto questions = make_synthetic_questions(40, 7);
    REQUIRE(questions.size() == 40);
    CHECK(questions.front().id() == "syn-0001");
    std::size_t multi = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
      CHECK(questions[i].subset_tag() == std::optional<std::string>(i % 2 == 0 ? "KD" : "CA"));
      multi += questions[i].is_multi_answer();
    }
    CHECK(multi > 0);
    CHECK(multi < 20);
  }

  TEST_CASE("task json round-trip rebuilds the target") {
    const auto fixture = make_fixture(small_spec(9));
    const auto doc = to_json(fixture.task, fixture.optimum);
    const auto back = task_from_json(doc, fixture.projection);
    CHECK(back.target == fixture.task.target);
    CHECK(back.bandwidth == fixture.task.bandwidth);
    CHECK(back.thresholds == fixture.task.thresholds);
    CHECK(back.fact_tokens == fixture.task.fact_tokens);
    CHECK(to_json(back, fixture.optimum) == doc);
  }

  TEST_CASE("make_task covers an existing question set") {
    const auto fixture = make_fixture(small_spec(11));
    const auto extra = make_synthetic_questions(5, 99);
    const auto task = make_task(fixture.projection, fixture.optimum, extra, 6.0, 12);
    for (const auto& q : extra) CHECK_FALSE(task.fact_token_for(q.id()).empty());
    CHECK(make_fact_token("syn-0001", 1) == make_fact_token("syn-0001", 1));
    CHECK(make_fact_token("syn-0001", 1) != make_fact_token("syn-0002", 1));
  }
}
