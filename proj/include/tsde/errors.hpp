#pragma once

#include <stdexcept>
#include <string>

namespace tsde {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NoConvergenceError : std::runtime_error {
  int iterations;
  double residual;
  NoConvergenceError(int iters, double res)
      : std::runtime_error("Riccati iteration did not converge after " +
                           std::to_string(iters) +
                           " iterations (residual " + std::to_string(res) + ")"),
        iterations(iters),
        residual(res) {}
};

struct SingularCovarianceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingExhaustedError : std::runtime_error {
  int attempts;
  explicit SamplingExhaustedError(int n)
      : std::runtime_error("rejection sampling exhausted after " +
                           std::to_string(n) + " attempts"),
        attempts(n) {}
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonPositiveRegretError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tsde
