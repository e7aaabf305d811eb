#ifndef FRL_THEORY_HPP_
#define FRL_THEORY_HPP_

// Closed-form vulnerable-edge analysis and its Monte Carlo check.
//
// With a fraction alpha of malicious clients voting an edge to the bottom (0)
// or the top (n - 1), and benign clients contributing (U - m) times the edge's
// position p, an edge can be pushed across the boundary at kn exactly when
//   (k n - alpha (n - 1)) / (1 - alpha) <= p < k n / (1 - alpha).
// Edge positions near the boundary are modelled as a discrete Gaussian.

#include <cstdint>
#include <random>
#include <vector>

namespace frl {

struct TheoryParams {
  double k = 0.5;
  double alpha = 0.0;
  double n = 1000;
  double mu = 500;
  double sigma = 100;
  int clients = 25;  // U
};

// Throws ParameterError when the documented domains are violated.
void Validate(const TheoryParams& p);

// Half-open [lower, upper) in position units, clamped to [0, n].
struct VulnerableRange {
  double lower = 0.0;
  double upper = 0.0;
  double raw_lower = 0.0;
  double raw_upper = 0.0;
  bool clamped = false;

  double width() const { return upper - lower; }
  bool contains(double position) const {
    return position >= lower && position < upper;
  }
};

VulnerableRange ComputeVulnerableRange(const TheoryParams& p);

// Standard normal CDF through the Abramowitz-Stegun 7.1.26 rational
// approximation of erf (absolute error <= 1.5e-7).
double NormalCdf(double x);

// Probability that a discrete-Gaussian edge position lands in the
// vulnerable range, clamped to [0, 1].
double SuccessProbability(const TheoryParams& p);

// Idealized one-round crossing test for an edge at benign position p.
// Edges at p >= kn are ascending (pushed down with malicious vote 0), edges
// below are descending (pushed up with n - 1). Exact integer arithmetic.
bool CrossesBoundaryIdealized(std::int64_t position, std::int64_t n, double k,
                              std::int64_t clients, std::int64_t malicious);

// P(X = z) proportional to Phi((z + 0.5 - mu) / sigma) - Phi((z - 0.5 - mu) /
// sigma) on z in [0, n - 1]. The table covers mu +- 12 sigma intersected with
// the support; mass beyond it is below double resolution.
class DiscreteGaussian {
 public:
  DiscreteGaussian(double mu, double sigma, std::int64_t n);

  std::int64_t Sample(std::mt19937_64& rng) const;
  double Probability(std::int64_t z) const;
  std::int64_t first() const { return first_; }
  std::int64_t last() const { return first_ + static_cast<std::int64_t>(cdf_.size()) - 1; }

 private:
  std::int64_t first_ = 0;
  std::vector<double> cdf_;  // normalized cumulative mass from first_
};

// Convenience wrapper over DiscreteGaussian for single draws.
std::int64_t SampleDiscreteGaussian(double mu, double sigma, std::int64_t n,
                                    std::mt19937_64& rng);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::int64_t trials = 0;
};

// Fraction of sampled positions that fall inside the vulnerable range, with
// the binomial standard error.
McEstimate McCrossingProbability(const TheoryParams& p, std::int64_t trials,
                                 std::mt19937_64& rng);

}  // namespace frl

#endif  // FRL_THEORY_HPP_
