#pragma once

// Gaussian radial basis function network with a bias channel, used as the
// online approximator of the arm's inverse dynamics.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "softarm/common.hpp"

namespace softarm {

struct RbfNetwork {
  MatrixXd centers;  // P x N
  double width = 0.0;  // multiplies the squared distance inside exp()
  MatrixXd theta;    // (P+1) x n; last row holds the biases
  VectorXd input_lo;
  VectorXd input_hi;
  std::uint64_t seed = 0;

  // Entries are clamped to +/- weight_limit after every adaptation step.
  double weight_limit = 1e6;
  std::size_t clamp_events = 0;

  int num_centers() const { return static_cast<int>(centers.rows()); }
  int input_dim() const { return static_cast<int>(centers.cols()); }
  int output_dim() const { return static_cast<int>(theta.cols()); }
};

/// Latin hypercube sample of P points in the box [lo, hi]. Each dimension is
/// cut into P equal strata, every stratum receives exactly one point, and the
/// point is placed uniformly at random inside its stratum.
inline MatrixXd init_lhs_centers(const VectorXd& lo, const VectorXd& hi, int P,
                                 std::uint64_t seed) {
  require(P >= 1, "init_lhs_centers: P must be >= 1");
  require(lo.size() == hi.size() && lo.size() > 0,
          "init_lhs_centers: bound vectors must be non-empty and equal length");
  require_finite(lo, "init_lhs_centers: lower bound");
  require_finite(hi, "init_lhs_centers: upper bound");
  require((hi.array() > lo.array()).all(), "init_lhs_centers: need lo < hi in every dimension");

  const auto N = lo.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd out(P, N);
  std::vector<int> strata(static_cast<std::size_t>(P));
  for (Eigen::Index d = 0; d < N; ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    const double span = hi(d) - lo(d);
    for (int i = 0; i < P; ++i) {
      const double u = unit(rng);
      double x = lo(d) + (strata[static_cast<std::size_t>(i)] + u) / P * span;
      out(i, d) = std::min(x, hi(d));
    }
  }
  return out;
}

/// Largest pairwise Euclidean distance between centers, by exhaustive scan.
inline double compute_dmax(const MatrixXd& centers) {
  require(centers.rows() >= 2, "compute_dmax: need at least two centers (width undefined for P < 2)");
  double best = 0.0;
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (Eigen::Index j = i + 1; j < centers.rows(); ++j)
      best = std::max(best, (centers.row(i) - centers.row(j)).squaredNorm());
  return std::sqrt(best);
}

/// Builds a zero-weight network. The width is P / d_max^2 unless an explicit
/// override is given; with fewer than two centers the override is mandatory.
inline RbfNetwork make_network(const VectorXd& lo, const VectorXd& hi, int P, int outputs,
                               std::uint64_t seed,
                               std::optional<double> width_override = std::nullopt) {
  require(outputs >= 1, "make_network: need at least one output");
  RbfNetwork net;
  net.input_lo = lo;
  net.input_hi = hi;
  net.seed = seed;
  net.centers = init_lhs_centers(lo, hi, P, seed);
  if (width_override) {
    require(std::isfinite(*width_override) && *width_override > 0.0,
            "make_network: width override must be positive");
    net.width = *width_override;
  } else {
    require(P >= 2, "make_network: P < 2 requires an explicit width");
    const double dmax = compute_dmax(net.centers);
    require(dmax > 0.0, "make_network: coincident centers give d_max = 0");
    net.width = P / (dmax * dmax);
  }
  net.theta = MatrixXd::Zero(P + 1, outputs);
  return net;
}

/// Basis activations [phi_0 .. phi_{P-1}, 1].
inline VectorXd eval_basis(const VectorXd& x, const RbfNetwork& net) {
  require(x.size() == net.input_dim(), "eval_basis: input dimension mismatch");
  require_finite(x, "eval_basis: input");
  const int P = net.num_centers();
  VectorXd phi(P + 1);
  for (int i = 0; i < P; ++i)
    phi(i) = std::exp(-net.width * (x.transpose() - net.centers.row(i)).squaredNorm());
  phi(P) = 1.0;
  return phi;
}

inline VectorXd forward(const RbfNetwork& net, const VectorXd& phi) {
  require(phi.size() == net.theta.rows(), "forward: basis vector length mismatch");
  return net.theta.transpose() * phi;
}

/// One explicit-Euler step of dTheta/dt = -Gamma * phi * s^T. Gamma is given
/// by its diagonal. The network is left untouched when any input is
/// non-finite.
inline void adapt(RbfNetwork& net, const VectorXd& phi, const VectorXd& s,
                  const VectorXd& gamma_diag, double dt) {
  require(dt > 0.0, "adapt: dt must be positive");
  require(phi.size() == net.theta.rows() && gamma_diag.size() == net.theta.rows(),
          "adapt: basis/learning-rate length mismatch");
  require(s.size() == net.theta.cols(), "adapt: sliding vector length mismatch");
  require((gamma_diag.array() >= 0.0).all(), "adapt: learning rates must be non-negative");
  require_finite(phi, "adapt: basis");
  require_finite(s, "adapt: sliding variable");

  net.theta.noalias() -= dt * (gamma_diag.cwiseProduct(phi)) * s.transpose();

  const double lim = net.weight_limit;
  if ((net.theta.array().abs() > lim).any() || !net.theta.allFinite()) {
    if (net.clamp_events++ == 0)
      std::clog << "softarm: RBF weights reached the +/-" << lim << " clamp\n";
    net.theta = net.theta.unaryExpr([lim](double v) {
      if (std::isnan(v)) return 0.0;
      return std::clamp(v, -lim, lim);
    });
  }
}

}  // namespace softarm
