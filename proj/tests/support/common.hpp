#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>

#include "blade/core.hpp"
#include "blade/error.hpp"
#include "blade/rng.hpp"

// Asserts that `expr` throws blade::Error with the given code.
#define CHECK_ERRC(expr, errc)                                            \
  do {                                                                    \
    bool thrown_ = false;                                                 \
    try {                                                                 \
      (void)(expr);                                                       \
    } catch (const ::blade::Error& e_) {                                  \
      thrown_ = true;                                                     \
      CHECK_MESSAGE(e_.code() == (errc), "got ", e_.what());              \
    }                                                                     \
    CHECK_MESSAGE(thrown_, "expected ", ::blade::errc_name(errc));        \
  } while (false)

namespace testing {

inline Eigen::VectorXd uniform_vector(blade::Rng& rng, std::size_t dim, double low, double high) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(low, high);
  return x;
}

inline blade::LowDimPrompt uniform_prompt(blade::Rng& rng, std::size_t dim, double low = -1.0, double high = 1.0) {
  return blade::LowDimPrompt(uniform_vector(rng, dim, low, high));
}

// Random well-formed example: 2..8 options, non-empty golden subset.
inline blade::McqExample random_example(blade::Rng& rng, const std::string& id) {
  const std::size_t n = 2 + rng.below(7);
  std::vector<blade::OptionEntry> options;
  for (std::size_t i = 0; i < n; ++i)
    options.push_back({static_cast<char>('A' + i), "option " + std::to_string(rng.below(1000))});
  blade::LabelSet golden;
  while (golden.empty())
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform01() < 0.3) golden.insert(static_cast<char>('A' + i));
  std::optional<std::string> subset;
  if (rng.uniform01() < 0.5) subset = rng.uniform01() < 0.5 ? "KD" : "CA";
  return blade::McqExample(id, "question " + id + " text " + std::to_string(rng.next_u64() % 100000),
                           std::move(options), golden, subset, rng.uniform01() < 0.5 ? "zh" : "en");
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("blade-test-" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
