#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace vildistill {

// Batches are row-major in spirit: one sample per row, one class/feature
// per column. Eigen's storage order stays default; serialization converts.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Probability floor applied inside every logarithm. Keeps 0*log(0) terms
/// finite and is small enough not to disturb finite-difference gradient
/// checks on full-support inputs.
inline constexpr double kProbFloor = 1e-12;

/// Tolerance on probability-vector normalization (sum-to-one).
inline constexpr double kProbSumTol = 1e-6;

/// Bad or unparseable configuration. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A required on-disk artifact (checkpoint, bank, dataset) is absent or
/// malformed. CLI maps this to exit code 3.
struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or other numerical breakdown. CLI maps this to exit
/// code 4.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vildistill
