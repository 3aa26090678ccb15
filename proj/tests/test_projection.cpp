#include <doctest.h>

#include <cmath>
#include <fstream>

#include "blade/io.hpp"
#include "blade/projection.hpp"
#include "support/common.hpp"

using namespace blade;

TEST_SUITE("projection") {
  TEST_CASE("same seed gives identical matrices") {
    const ProjectionMatrix a(10, 10240, 42);
    const ProjectionMatrix b(10, 10240, 42);
    CHECK(a == b);
    CHECK(a.entries().minCoeff() >= -1.0);
    CHECK(a.entries().maxCoeff() <= 1.0);
    CHECK_FALSE(a == ProjectionMatrix(10, 10240, 43));
  }

  TEST_CASE("entries are drawn row-major from the seeded stream") {
    const ProjectionMatrix a(3, 7, 99);
    Rng rng(99);
    for (Eigen::Index r = 0; r < 3; ++r)
      for (Eigen::Index c = 0; c < 7; ++c) CHECK(a.entries()(r, c) == rng.uniform(-1.0, 1.0));
  }

  TEST_CASE("invalid dimensions") {
    CHECK_ERRC(ProjectionMatrix(10, 5, 1), Errc::InvalidDims);
    CHECK_ERRC(ProjectionMatrix(0, 5, 1), Errc::InvalidDims);
    CHECK_ERRC(ProjectionMatrix(5, 5, 1), Errc::InvalidDims);
  }

  TEST_CASE("empirical mean of entries is near zero") {
    const ProjectionMatrix a(10, 10240, 7);
    CHECK(std::abs(a.entries().mean()) < 0.02);
  }

  TEST_CASE("zero prompt projects to zero") {
    const ProjectionMatrix a(4, 12, 3);
    const auto embedding = project(a, LowDimPrompt::zeros(4), 3, 4);
    CHECK(embedding.flat().isZero(0.0));
    CHECK(embedding.n_tokens() == 3);
  }

  TEST_CASE("dimension mismatches") {
    const ProjectionMatrix a(4, 12, 3);
    CHECK_ERRC(project_flat(a, LowDimPrompt::zeros(5)), Errc::DimMismatch);
    CHECK_ERRC(project(a, LowDimPrompt::zeros(4), 5, 4), Errc::DimMismatch);
  }

  TEST_CASE("row-vector convention on a hand example") {
    testing::TempDir dir("proj-hand");
    // d=1, D=2, A = [[0.5, -0.5]] written in the binary layout with a seed
    // that does not reproduce it must be rejected on load.
    {
      std::ofstream out(dir / "a.bin", std::ios::binary);
      out.write("BLDA", 4);
      io::write_u32_le(out, 1);
      io::write_u64_le(out, 1);
      io::write_u64_le(out, 2);
      io::write_u64_le(out, 5);
      io::write_f64_le(out, 0.5);
      io::write_f64_le(out, -0.5);
    }
    CHECK_THROWS_AS(ProjectionMatrix::load(dir / "a.bin"), Error);
    // The product itself: e = p^T A.
    const ProjectionMatrix a(1, 2, 5);
    const auto e = project_flat(a, LowDimPrompt(std::vector<double>{2.0}));
    CHECK(e[0] == 2.0 * a.entries()(0, 0));
    CHECK(e[1] == 2.0 * a.entries()(0, 1));
  }

  TEST_CASE("property: projection is linear") {
    Rng rng(17);
    const ProjectionMatrix a(10, 2048, 8);
    for (int i = 0; i < 50; ++i) {
      const auto p = testing::uniform_vector(rng, 10, -5, 5);
      const auto q = testing::uniform_vector(rng, 10, -5, 5);
      const double alpha = rng.uniform(-3, 3);
      const double beta = rng.uniform(-3, 3);
      const Eigen::VectorXd lhs = project_flat(a, LowDimPrompt(Eigen::VectorXd(alpha * p + beta * q)));
      const Eigen::VectorXd rhs =
          alpha * project_flat(a, LowDimPrompt(p)) + beta * project_flat(a, LowDimPrompt(q));
      CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
    }
  }

  TEST_CASE("pairwise distance ratio concentrates near sqrt(D/3)") {
    Rng rng(23);
    const ProjectionMatrix a(10, 10240, 4);
    double sum = 0.0;
    for (int i = 0; i < 200; ++i) {
      const auto p = testing::uniform_prompt(rng, 10);
      const auto q = testing::uniform_prompt(rng, 10);
      sum += (project_flat(a, p) - project_flat(a, q)).norm() / (p.values() - q.values()).norm();
    }
    CHECK(sum / 200.0 == doctest::Approx(std::sqrt(10240.0 / 3.0)).epsilon(0.05));
  }

  TEST_CASE("distortion report") {
    const ProjectionMatrix a(10, 10240, 12);
    const auto report = distortion_report(a, 1000, 3);
    CHECK(report.pairs_used == 1000);
    CHECK(report.mean_ratio >= 0.95);
    CHECK(report.mean_ratio <= 1.05);
    CHECK(report.min_ratio <= report.mean_ratio);
    CHECK(report.max_ratio >= report.mean_ratio);
    const auto again = distortion_report(a, 1000, 3);
    CHECK(again.mean_ratio == report.mean_ratio);
    CHECK_ERRC(distortion_report(a, 0, 3), Errc::InvalidConfig);
    CHECK_FALSE(pair_distortion(a, LowDimPrompt::zeros(10), LowDimPrompt::zeros(10)));
  }

  TEST_CASE("binary save and load") {
    testing::TempDir dir("proj-io");
    const ProjectionMatrix a(10, 300, 77);
    a.save(dir / "a.bin");
    const auto bytes = io::read_file(dir / "a.bin");
    CHECK(bytes.substr(0, 4) == "BLDA");
    CHECK(bytes.size() == 4 + 4 + 8 * 3 + 8 * 10 * 300);
    CHECK(ProjectionMatrix::load(dir / "a.bin") == a);
    io::atomic_write(dir / "bad.bin", "XXXX");
    CHECK_THROWS_AS(ProjectionMatrix::load(dir / "bad.bin"), Error);
  }
}
