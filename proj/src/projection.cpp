#include "blade/projection.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "blade/error.hpp"
#include "blade/io.hpp"
#include "blade/rng.hpp"

namespace blade {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'D', 'A'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

ProjectionMatrix::ProjectionMatrix(std::size_t low_dim, std::size_t full_dim, std::uint64_t seed) : seed_(seed) {
  if (low_dim == 0 || full_dim == 0 || low_dim >= full_dim) {
    throw Error(Errc::InvalidDims,
                "projection needs 1 <= d < D, got d=" + std::to_string(low_dim) + " D=" + std::to_string(full_dim));
  }
  entries_.resize(static_cast<Eigen::Index>(low_dim), static_cast<Eigen::Index>(full_dim));
  Rng rng(seed);
  double* data = entries_.data();
  for (Eigen::Index i = 0; i < entries_.size(); ++i) {
    data[i] = rng.uniform(-1.0, 1.0);
  }
}

void ProjectionMatrix::save(const std::filesystem::path& path) const {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof(kMagic));
  io::write_u32_le(out, kFormatVersion);
  io::write_u64_le(out, low_dim());
  io::write_u64_le(out, full_dim());
  io::write_u64_le(out, seed_);
  const double* data = entries_.data();
  for (Eigen::Index i = 0; i < entries_.size(); ++i) {
    io::write_f64_le(out, data[i]);
  }
  io::atomic_write(path, out.str());
}

ProjectionMatrix ProjectionMatrix::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::IoError, "cannot open projection file " + path.string());
  }
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kMagic)) {
    throw Error(Errc::ParseError, "bad projection magic in " + path.string());
  }
  const auto version = io::read_u32_le(in);
  if (version != kFormatVersion) {
    throw Error(Errc::ParseError, "unsupported projection version " + std::to_string(version));
  }
  const auto low_dim = io::read_u64_le(in);
  const auto full_dim = io::read_u64_le(in);
  const auto seed = io::read_u64_le(in);
  ProjectionMatrix out(low_dim, full_dim, seed);
  const double* expected = out.entries_.data();
  for (Eigen::Index i = 0; i < out.entries_.size(); ++i) {
    if (io::read_f64_le(in) != expected[i]) {
      throw Error(Errc::ParseError, "projection payload does not match its seed in " + path.string());
    }
  }
  return out;
}

Eigen::VectorXd project_flat(const ProjectionMatrix& projection, const LowDimPrompt& prompt) {
  if (prompt.dim() != projection.low_dim()) {
    throw Error(Errc::DimMismatch, "prompt dim " + std::to_string(prompt.dim()) + " != projection d " +
                                       std::to_string(projection.low_dim()));
  }
  return projection.entries().transpose() * prompt.values();
}

SoftEmbedding project(const ProjectionMatrix& projection, const LowDimPrompt& prompt, std::size_t n_tokens,
                      std::size_t hidden_dim) {
  if (n_tokens * hidden_dim != projection.full_dim()) {
    throw Error(Errc::DimMismatch, std::to_string(n_tokens) + " x " + std::to_string(hidden_dim) +
                                       " != projection D " + std::to_string(projection.full_dim()));
  }
  return SoftEmbedding(n_tokens, hidden_dim, project_flat(projection, prompt));
}

std::optional<double> pair_distortion(const ProjectionMatrix& projection, const LowDimPrompt& p, const LowDimPrompt& q) {
  const double low_dist = (p.values() - q.values()).norm();
  if (low_dist == 0.0) {
    return std::nullopt;
  }
  const double scale = std::sqrt(static_cast<double>(projection.full_dim()) / 3.0);
  const Eigen::VectorXd diff = project_flat(projection, p) - project_flat(projection, q);
  return diff.norm() / (low_dist * scale);
}

DistortionReport distortion_report(const ProjectionMatrix& projection, std::size_t sample_pairs, std::uint64_t seed) {
  if (sample_pairs < 2) {
    throw Error(Errc::InvalidConfig, "distortion report needs at least 2 sample pairs");
  }
  const auto d = static_cast<Eigen::Index>(projection.low_dim());
  Rng rng(seed);
  DistortionReport report;
  report.min_ratio = std::numeric_limits<double>::infinity();
  report.max_ratio = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < sample_pairs; ++i) {
    Eigen::VectorXd p(d);
    Eigen::VectorXd q(d);
    for (Eigen::Index k = 0; k < d; ++k) p[k] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index k = 0; k < d; ++k) q[k] = rng.uniform(-1.0, 1.0);
    const auto ratio_opt = pair_distortion(projection, LowDimPrompt(p), LowDimPrompt(q));
    if (!ratio_opt) {
      ++report.pairs_skipped;
      continue;
    }
    const double ratio = *ratio_opt;
    report.min_ratio = std::min(report.min_ratio, ratio);
    report.max_ratio = std::max(report.max_ratio, ratio);
    sum += ratio;
    ++report.pairs_used;
  }
  if (report.pairs_used > 0) {
    report.mean_ratio = sum / static_cast<double>(report.pairs_used);
  }
  return report;
}

}  // namespace blade
