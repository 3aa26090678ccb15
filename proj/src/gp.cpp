#include "blade/gp.hpp"

#include <cmath>
#include <string>

#include "blade/error.hpp"

namespace blade {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-6;
// Squared Cholesky pivots below this fraction of sigma_f^2 count as singular.
constexpr double kMinRelativePivot = 1e-13;

void check_dims(std::size_t expected, std::size_t actual) {
  if (expected != actual) {
    throw Error(Errc::DimMismatch, "expected dimension " + std::to_string(expected) + ", got " + std::to_string(actual));
  }
}

}  // namespace

void KernelConfig::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw Error(Errc::InvalidConfig, "kernel signal variance must be positive");
  }
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw Error(Errc::InvalidConfig, "kernel lengthscale must be positive");
  }
}

double KernelConfig::operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  return signal_variance * std::exp(-(x - y).squaredNorm() / (2.0 * lengthscale * lengthscale));
}

double kernel_eval(const KernelConfig& kernel, const LowDimPrompt& x, const LowDimPrompt& y) {
  check_dims(x.dim(), y.dim());
  return kernel(x.values(), y.values());
}

GpState::GpState(GpOptions options) : options_(options) {
  options_.kernel.validate();
  if (!(options_.noise_variance >= 0.0) || !std::isfinite(options_.noise_variance)) {
    throw Error(Errc::InvalidConfig, "noise variance must be non-negative");
  }
}

GpState GpState::from_observations(GpOptions options, const std::vector<Observation>& observations) {
  GpState state(options);
  for (const auto& obs : observations) {
    if (state.dim_ == 0) {
      state.dim_ = obs.prompt.dim();
    }
    check_dims(state.dim_, obs.prompt.dim());
    if (!std::isfinite(obs.score)) {
      throw Error(Errc::NonFinite, "observation score must be finite");
    }
    state.observations_.push_back(obs);
  }
  state.refactor();
  return state;
}

GpState GpState::update(const LowDimPrompt& prompt, double score) const {
  if (!std::isfinite(score)) {
    throw Error(Errc::NonFinite, "observation score must be finite");
  }
  if (!empty()) {
    check_dims(dim_, prompt.dim());
  }
  GpState next = *this;
  next.dim_ = prompt.dim();
  next.observations_.push_back({prompt, score});
  next.refactor();
  return next;
}

void GpState::refactor() {
  const auto n = static_cast<Eigen::Index>(observations_.size());
  inputs_.resize(n, static_cast<Eigen::Index>(dim_));
  Eigen::VectorXd targets(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inputs_.row(i) = observations_[static_cast<std::size_t>(i)].prompt.values().transpose();
    targets[i] = observations_[static_cast<std::size_t>(i)].score;
  }
  offset_ = (options_.center_targets && n > 0) ? targets.mean() : 0.0;
  if (n == 0) {
    factor_.resize(0, 0);
    alpha_.resize(0);
    jitter_ = 0.0;
    return;
  }

  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double value = options_.kernel(inputs_.row(i).transpose(), inputs_.row(j).transpose());
      cov(i, j) = value;
      cov(j, i) = value;
    }
  }
  cov.diagonal().array() += options_.noise_variance;

  const double min_pivot = kMinRelativePivot * options_.kernel.signal_variance;
  double jitter = 0.0;
  while (true) {
    Eigen::MatrixXd shifted = cov;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (lower.diagonal().array().square().minCoeff() >= min_pivot) {
        factor_ = std::move(lower);
        jitter_ = jitter;
        break;
      }
    }
    jitter = jitter == 0.0 ? kJitterStart : jitter * 10.0;
    if (jitter > kJitterMax * 1.000001) {
      throw Error(Errc::SingularCovariance,
                  "covariance of " + std::to_string(n) + " observations is singular even with jitter 1e-6");
    }
  }
  const Eigen::VectorXd centered = targets.array() - offset_;
  alpha_ = factor_.triangularView<Eigen::Lower>().solve(centered);
  factor_.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha_);
}

Posterior GpState::posterior(const LowDimPrompt& prompt) const {
  if (empty()) {
    throw Error(Errc::EmptyState, "posterior requested from a GP with no observations");
  }
  check_dims(dim_, prompt.dim());
  return posterior(prompt.values());
}

Posterior GpState::posterior(const Eigen::VectorXd& point) const {
  if (empty()) {
    throw Error(Errc::EmptyState, "posterior requested from a GP with no observations");
  }
  const auto n = inputs_.rows();
  Eigen::VectorXd cross(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cross[i] = options_.kernel(inputs_.row(i).transpose(), point);
  }
  Posterior out;
  out.mean = offset_ + cross.dot(alpha_);
  const Eigen::VectorXd v = factor_.triangularView<Eigen::Lower>().solve(cross);
  const double variance = options_.kernel.signal_variance - v.squaredNorm();
  if (variance < 0.0) {
    out.clamp = -variance;
    out.variance = 0.0;
  } else {
    out.variance = variance;
  }
  return out;
}

double GpState::incumbent() const { return observations_.at(incumbent_index()).score; }

std::size_t GpState::incumbent_index() const {
  if (empty()) {
    throw Error(Errc::EmptyState, "incumbent of an empty GP");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < observations_.size(); ++i) {
    if (observations_[i].score > observations_[best].score) {
      best = i;
    }
  }
  return best;
}

nlohmann::json GpState::to_json() const {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : observations_) {
    obs.push_back({{"p", o.prompt.to_vector()}, {"y", o.score}});
  }
  return {{"kernel",
           {{"kind", "squared_exponential"},
            {"signal_variance", options_.kernel.signal_variance},
            {"lengthscale", options_.kernel.lengthscale}}},
          {"noise_variance", options_.noise_variance},
          {"center_targets", options_.center_targets},
          {"observations", obs}};
}

GpState GpState::from_json(const nlohmann::json& doc) {
  GpOptions options;
  const auto& kernel = doc.at("kernel");
  if (kernel.value("kind", std::string("squared_exponential")) != "squared_exponential") {
    throw Error(Errc::InvalidConfig, "unsupported kernel kind " + kernel.at("kind").get<std::string>());
  }
  options.kernel.signal_variance = kernel.at("signal_variance").get<double>();
  options.kernel.lengthscale = kernel.at("lengthscale").get<double>();
  options.noise_variance = doc.at("noise_variance").get<double>();
  options.center_targets = doc.value("center_targets", true);
  std::vector<Observation> observations;
  for (const auto& o : doc.at("observations")) {
    observations.push_back({LowDimPrompt(o.at("p").get<std::vector<double>>()), o.at("y").get<double>()});
  }
  return from_observations(options, observations);
}

}  // namespace blade
