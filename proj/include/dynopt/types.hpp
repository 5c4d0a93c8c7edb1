#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for hard errors (misuse, divergence). Recoverable solver
/// conditions are reported through SolveStatus instead.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : SolverError {
  using SolverError::SolverError;
};

/// A state or cost evaluation produced NaN/Inf (divergent rollout).
struct NonFiniteError : SolverError {
  using SolverError::SolverError;
};

struct NotPDError : SolverError {
  using SolverError::SolverError;
};

struct SingularMassError : SolverError {
  using SolverError::SolverError;
};

/// Barrier method asked to expand at a point with g >= 0.
struct InfeasibleError : SolverError {
  using SolverError::SolverError;
};

struct ProjectionError : SolverError {
  using SolverError::SolverError;
};

enum class SolveStatus {
  Converged,
  MaxIterations,
  RegularizerExceeded,
  LineSearchFailed,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::RegularizerExceeded: return "RegularizerExceeded";
    case SolveStatus::LineSearchFailed: return "LineSearchFailed";
  }
  return "Unknown";
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// max{v, 0} elementwise (projection onto the nonnegative orthant).
inline Vec positive_part(const Vec& v) { return v.cwiseMax(0.0); }

inline double inf_norm(const Vec& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace dynopt
