#include "frl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "frl/errors.hpp"

namespace frl {

void Validate(const TheoryParams& p) {
  if (!(p.k > 0.0 && p.k <= 1.0)) throw ParameterError("k must lie in (0, 1]");
  if (!(p.alpha >= 0.0 && p.alpha < 1.0)) {
    throw ParameterError("alpha must lie in [0, 1)");
  }
  if (!(p.n >= 2)) throw ParameterError("n must be at least 2");
  if (!(p.sigma > 0.0)) throw ParameterError("sigma must be positive");
}

VulnerableRange ComputeVulnerableRange(const TheoryParams& p) {
  if (!(p.alpha >= 0.0 && p.alpha < 1.0)) {
    throw ParameterError("alpha must lie in [0, 1), got " +
                         std::to_string(p.alpha));
  }
  if (!(p.k > 0.0 && p.k <= 1.0)) throw ParameterError("k must lie in (0, 1]");
  const double kn = p.k * p.n;
  VulnerableRange r;
  r.raw_lower = (kn - p.alpha * (p.n - 1.0)) / (1.0 - p.alpha);
  r.raw_upper = kn / (1.0 - p.alpha);
  r.lower = std::clamp(r.raw_lower, 0.0, p.n);
  r.upper = std::clamp(r.raw_upper, 0.0, p.n);
  r.clamped = r.lower != r.raw_lower || r.upper != r.raw_upper;
  return r;
}

double NormalCdf(double x) {
  constexpr double kP = 0.3275911;
  constexpr double kA1 = 0.254829592;
  constexpr double kA2 = -0.284496736;
  constexpr double kA3 = 1.421413741;
  constexpr double kA4 = -1.453152027;
  constexpr double kA5 = 1.061405429;
  const double z = std::abs(x) / std::sqrt(2.0);
  const double t = 1.0 / (1.0 + kP * z);
  const double poly = t * (kA1 + t * (kA2 + t * (kA3 + t * (kA4 + t * kA5))));
  const double erf = 1.0 - poly * std::exp(-z * z);
  return x >= 0.0 ? 0.5 * (1.0 + erf) : 0.5 * (1.0 - erf);
}

double SuccessProbability(const TheoryParams& p) {
  Validate(p);
  const double kn = p.k * p.n;
  const double a = 1.0 - p.alpha;
  const double upper = (2.0 * kn + a * (1.0 - 2.0 * p.mu)) / (2.0 * a * p.sigma);
  const double lower =
      (2.0 * kn - 2.0 * p.alpha * (p.n - 1.0) - a * (1.0 + 2.0 * p.mu)) /
      (2.0 * a * p.sigma);
  return std::clamp(NormalCdf(upper) - NormalCdf(lower), 0.0, 1.0);
}

bool CrossesBoundaryIdealized(std::int64_t position, std::int64_t n, double k,
                              std::int64_t clients, std::int64_t malicious) {
  // Scale by 2^20 so kn is an exact integer for dyadic k (0.5, 0.25, ...).
  constexpr std::int64_t kScale = std::int64_t{1} << 20;
  const auto kn_scaled = static_cast<std::int64_t>(std::llround(k * kScale)) * n;
  const std::int64_t benign = (clients - malicious) * position * kScale;
  const std::int64_t boundary = clients * kn_scaled;
  if (position * kScale >= kn_scaled) {
    return benign < boundary;  // ascending edge voted to 0
  }
  return benign + malicious * (n - 1) * kScale >= boundary;  // descending, n-1
}

DiscreteGaussian::DiscreteGaussian(double mu, double sigma, std::int64_t n) {
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (n < 1) throw ParameterError("support must hold at least one position");
  const double span = 12.0 * sigma + 1.0;
  first_ = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::floor(mu - span)), 0, n - 1);
  const std::int64_t last = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::ceil(mu + span)), 0, n - 1);
  cdf_.reserve(static_cast<std::size_t>(last - first_ + 1));
  double total = 0.0;
  for (std::int64_t z = first_; z <= last; ++z) {
    const double zd = static_cast<double>(z);
    total += std::max(0.0, NormalCdf((zd + 0.5 - mu) / sigma) -
                               NormalCdf((zd - 0.5 - mu) / sigma));
    cdf_.push_back(total);
  }
  if (!(total > 0.0)) {
    // mu lies far outside the support; all mass collapses to the nearest end.
    std::fill(cdf_.begin(), cdf_.end(), 0.0);
    if (mu < static_cast<double>(first_)) {
      std::fill(cdf_.begin(), cdf_.end(), 1.0);
    } else {
      cdf_.back() = 1.0;
    }
    return;
  }
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

std::int64_t DiscreteGaussian::Sample(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                            static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
  return first_ + idx;
}

double DiscreteGaussian::Probability(std::int64_t z) const {
  if (z < first_ || z > last()) return 0.0;
  const auto i = static_cast<std::size_t>(z - first_);
  return i == 0 ? cdf_[0] : cdf_[i] - cdf_[i - 1];
}

std::int64_t SampleDiscreteGaussian(double mu, double sigma, std::int64_t n,
                                    std::mt19937_64& rng) {
  return DiscreteGaussian(mu, sigma, n).Sample(rng);
}

McEstimate McCrossingProbability(const TheoryParams& p, std::int64_t trials,
                                 std::mt19937_64& rng) {
  if (trials <= 0) throw ParameterError("trials must be positive");
  Validate(p);
  const VulnerableRange range = ComputeVulnerableRange(p);
  const DiscreteGaussian positions(p.mu, p.sigma,
                                   static_cast<std::int64_t>(p.n));
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < trials; ++i) {
    hits += range.contains(static_cast<double>(positions.Sample(rng)));
  }
  McEstimate est;
  est.trials = trials;
  est.estimate = static_cast<double>(hits) / static_cast<double>(trials);
  est.std_error = std::sqrt(est.estimate * (1.0 - est.estimate) /
                          static_cast<double>(trials));
  return est;
}

}  // namespace frl
