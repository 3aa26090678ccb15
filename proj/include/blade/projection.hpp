#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include <Eigen/Dense>

#include "blade/core.hpp"

namespace blade {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Fixed random map from the d-dimensional search space to the D-dimensional
// soft-embedding space. Entries are i.i.d. uniform on [-1, 1] drawn from the
// seed in row-major order; the embedding of p is the row vector p^T A.
class ProjectionMatrix {
 public:
  // Throws InvalidDims unless 1 <= low_dim < full_dim.
  ProjectionMatrix(std::size_t low_dim, std::size_t full_dim, std::uint64_t seed);

  std::size_t low_dim() const { return static_cast<std::size_t>(entries_.rows()); }
  std::size_t full_dim() const { return static_cast<std::size_t>(entries_.cols()); }
  std::uint64_t seed() const { return seed_; }
  const RowMatrix& entries() const { return entries_; }

  // Binary layout: "BLDA", u32 version, u64 d, u64 D, u64 seed, then d*D
  // row-major f64, all little-endian. Loading re-derives the matrix from the
  // seed and rejects files whose payload disagrees.
  void save(const std::filesystem::path& path) const;
  static ProjectionMatrix load(const std::filesystem::path& path);

  friend bool operator==(const ProjectionMatrix& a, const ProjectionMatrix& b) {
    return a.seed_ == b.seed_ && a.entries_ == b.entries_;
  }

 private:
  RowMatrix entries_;
  std::uint64_t seed_;
};

// Flat D-vector p^T A; throws DimMismatch if p.dim() != d.
Eigen::VectorXd project_flat(const ProjectionMatrix& projection, const LowDimPrompt& prompt);

// p^T A split in order into n_tokens chunks of hidden_dim.
SoftEmbedding project(const ProjectionMatrix& projection, const LowDimPrompt& prompt, std::size_t n_tokens,
                      std::size_t hidden_dim);

// ||project(p) - project(q)|| / (||p - q|| * sqrt(D / 3)); nullopt when p == q.
std::optional<double> pair_distortion(const ProjectionMatrix& projection, const LowDimPrompt& p, const LowDimPrompt& q);

struct DistortionReport {
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
};

// Samples pairs (p, q) with entries uniform on [-1, 1] and reports
// ||project(p) - project(q)|| / (||p - q|| * sqrt(D / 3)). Zero-distance
// pairs are skipped. Throws InvalidConfig if sample_pairs < 2.
DistortionReport distortion_report(const ProjectionMatrix& projection, std::size_t sample_pairs, std::uint64_t seed);

}  // namespace blade
