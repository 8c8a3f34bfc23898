#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace softarm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kJoints = 3;
inline constexpr int kDofs = 2 * kJoints;      // (u, v) bending per joint
inline constexpr int kChambers = 4 * kJoints;  // antagonistic pairs per DOF

using Vec6 = Eigen::Matrix<double, kDofs, 1>;
using Mat6 = Eigen::Matrix<double, kDofs, kDofs>;
using Vec12 = Eigen::Matrix<double, kChambers, 1>;

// Precondition or configuration violation supplied by a caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The simulated arm left its physical envelope (burst pressure, joint range,
// non-finite state). Aborts the running trial.
class PlantFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A controller sub-operation produced or received non-finite data.
class ControllerFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw InvalidArgument(what + ": non-finite entry");
}

}  // namespace softarm
