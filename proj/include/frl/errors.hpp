#ifndef FRL_ERRORS_HPP_
#define FRL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace frl {

// Malformed input data: bad permutations, shape mismatches, empty shards.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numeric parameter outside its documented domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A simulation or aggregator configuration that cannot be run.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Local training diverged (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace frl

#endif  // FRL_ERRORS_HPP_
