#pragma once

// Rigid-body model of a serial arm built from universal (u, v) joints and
// cylindrical links. q = [u0, v0, u1, v1, u2, v2]; u bends about the local y
// axis, v about the local z axis, and each link extends along its local x
// axis. Gravity acts along -z of the base frame, so q = 0 is the arm
// stretched out horizontally.
//
// Everything is templated on the scalar so the mass matrix can be pushed
// through Eigen's forward-mode AutoDiff to obtain dM/dq exactly.

#include <array>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "softarm/common.hpp"

namespace softarm {

struct RigidBody {
  double mass = 0.0;                             // kg
  Eigen::Vector3d com = Eigen::Vector3d::Zero();  // m, in link frame
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();  // kg m^2 about com, link frame
};

struct ChainGeometry {
  std::array<double, kJoints> lengths{};
  std::array<RigidBody, kJoints> bodies{};
  double gravity = 9.81;
};

/// Uniform solid cylinder of length L along x with a point mass optionally
/// fixed at distance `payload_at` from the proximal end.
inline RigidBody cylinder_link(double mass, double length, double radius, double payload = 0.0,
                               double payload_at = 0.0) {
  RigidBody b;
  const double axial = 0.5 * mass * radius * radius;
  const double transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
  b.mass = mass + payload;
  const double x_link = 0.5 * length;
  const double x_com = (mass * x_link + payload * payload_at) / b.mass;
  b.com = Eigen::Vector3d(x_com, 0.0, 0.0);
  // Parallel-axis shift of both parts onto the combined center of mass.
  const double d_link = x_link - x_com;
  const double d_pay = payload_at - x_com;
  const double shift = mass * d_link * d_link + payload * d_pay * d_pay;
  b.inertia = Eigen::Vector3d(axial, transverse + shift, transverse + shift).asDiagonal();
  return b;
}

template <typename S>
using Vec3T = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3T = Eigen::Matrix<S, 3, 3>;
template <typename S>
using Vec6T = Eigen::Matrix<S, kDofs, 1>;
template <typename S>
using Mat6T = Eigen::Matrix<S, kDofs, kDofs>;

template <typename S>
struct ChainKinematics {
  std::array<Vec3T<S>, kDofs> axis;     // world-frame joint axes
  std::array<Vec3T<S>, kJoints> origin;  // world-frame joint centers
  std::array<Vec3T<S>, kJoints> com;     // world-frame link centers of mass
  std::array<Mat3T<S>, kJoints> rot;     // link orientation
  Vec3T<S> tip;
};

namespace detail {

template <typename S>
Mat3T<S> rot_y(const S& a) {
  using std::cos;
  using std::sin;
  const S c = cos(a), s = sin(a);
  Mat3T<S> r;
  r << c, S(0), s, S(0), S(1), S(0), -s, S(0), c;
  return r;
}

template <typename S>
Mat3T<S> rot_z(const S& a) {
  using std::cos;
  using std::sin;
  const S c = cos(a), s = sin(a);
  Mat3T<S> r;
  r << c, -s, S(0), s, c, S(0), S(0), S(0), S(1);
  return r;
}

}  // namespace detail

template <typename S>
ChainKinematics<S> forward_kinematics(const ChainGeometry& geo, const Vec6T<S>& q) {
  ChainKinematics<S> k;
  Mat3T<S> r = Mat3T<S>::Identity();
  Vec3T<S> o = Vec3T<S>::Zero();
  for (int j = 0; j < kJoints; ++j) {
    k.origin[j] = o;
    k.axis[2 * j] = r.col(1);
    r = r * detail::rot_y<S>(q(2 * j));
    k.axis[2 * j + 1] = r.col(2);
    r = r * detail::rot_z<S>(q(2 * j + 1));
    k.rot[j] = r;
    k.com[j] = o + r * geo.bodies[j].com.template cast<S>();
    o = o + r.col(0) * S(geo.lengths[j]);
  }
  k.tip = o;
  return k;
}

/// Joint-space inertia matrix, assembled from body Jacobians.
template <typename S>
Mat6T<S> mass_matrix(const ChainGeometry& geo, const Vec6T<S>& q) {
  const auto k = forward_kinematics<S>(geo, q);
  Mat6T<S> m = Mat6T<S>::Zero();
  for (int b = 0; b < kJoints; ++b) {
    const RigidBody& body = geo.bodies[b];
    if (body.mass <= 0.0) continue;
    const int ncols = 2 * b + 2;
    Eigen::Matrix<S, 3, kDofs> jv = Eigen::Matrix<S, 3, kDofs>::Zero();
    Eigen::Matrix<S, 3, kDofs> jw = Eigen::Matrix<S, 3, kDofs>::Zero();
    for (int c = 0; c < ncols; ++c) {
      jw.col(c) = k.axis[c];
      jv.col(c) = k.axis[c].cross(k.com[b] - k.origin[c / 2]);
    }
    const Mat3T<S> iw = k.rot[b] * body.inertia.template cast<S>() * k.rot[b].transpose();
    m += S(body.mass) * jv.transpose() * jv + jw.transpose() * iw * jw;
  }
  // Exact symmetry regardless of rounding in the products above.
  return S(0.5) * (m + m.transpose());
}

/// Inverse dynamics by recursive Newton-Euler in world coordinates:
/// returns M(q) qdd + C(q, qd) qd + g(q).
template <typename S>
Vec6T<S> inverse_dynamics(const ChainGeometry& geo, const Vec6T<S>& q, const Vec6T<S>& qd,
                          const Vec6T<S>& qdd, bool with_gravity = true) {
  const auto k = forward_kinematics<S>(geo, q);
  std::array<Vec3T<S>, kJoints> force, moment, wz, az;
  Vec3T<S> w = Vec3T<S>::Zero();
  Vec3T<S> alpha = Vec3T<S>::Zero();
  // Gravity enters as an upward acceleration of the base.
  Vec3T<S> a_origin(S(0), S(0), with_gravity ? S(geo.gravity) : S(0));

  for (int j = 0; j < kJoints; ++j) {
    for (int c = 2 * j; c < 2 * j + 2; ++c) {
      const Vec3T<S> spin = k.axis[c] * qd(c);
      alpha = alpha + k.axis[c] * qdd(c) + w.cross(spin);
      w = w + spin;
    }
    const RigidBody& body = geo.bodies[j];
    const Vec3T<S> r = k.com[j] - k.origin[j];
    const Vec3T<S> a_com = a_origin + alpha.cross(r) + w.cross(w.cross(r));
    const Mat3T<S> iw = k.rot[j] * body.inertia.template cast<S>() * k.rot[j].transpose();
    force[j] = S(body.mass) * a_com;
    moment[j] = iw * alpha + w.cross(iw * w);
    const Vec3T<S> next = (j + 1 < kJoints ? k.origin[j + 1] : k.tip) - k.origin[j];
    a_origin = a_origin + alpha.cross(next) + w.cross(w.cross(next));
  }

  Vec6T<S> tau;
  Vec3T<S> f_out = Vec3T<S>::Zero();
  Vec3T<S> n_out = Vec3T<S>::Zero();
  for (int j = kJoints - 1; j >= 0; --j) {
    const Vec3T<S> next = (j + 1 < kJoints ? k.origin[j + 1] : k.tip) - k.origin[j];
    const Vec3T<S> r = k.com[j] - k.origin[j];
    const Vec3T<S> f = force[j] + f_out;
    const Vec3T<S> n = moment[j] + n_out + r.cross(force[j]) + next.cross(f_out);
    tau(2 * j) = k.axis[2 * j].dot(n);
    tau(2 * j + 1) = k.axis[2 * j + 1].dot(n);
    f_out = f;
    n_out = n;
  }
  return tau;
}

/// g(q): generalized gravity torque.
inline Vec6 gravity_torque(const ChainGeometry& geo, const Vec6& q) {
  return inverse_dynamics<double>(geo, q, Vec6::Zero(), Vec6::Zero(), true);
}

/// C(q, qd) qd + g(q).
inline Vec6 bias_torque(const ChainGeometry& geo, const Vec6& q, const Vec6& qd) {
  return inverse_dynamics<double>(geo, q, qd, Vec6::Zero(), true);
}

/// dM/dq_k for every k, from a single forward-mode AutoDiff pass.
inline std::array<Mat6, kDofs> mass_matrix_partials(const ChainGeometry& geo, const Vec6& q) {
  using AD = Eigen::AutoDiffScalar<Vec6>;
  Vec6T<AD> qa;
  for (int i = 0; i < kDofs; ++i) qa(i) = AD(q(i), kDofs, i);
  const Mat6T<AD> m = mass_matrix<AD>(geo, qa);
  std::array<Mat6, kDofs> dm;
  for (int k = 0; k < kDofs; ++k)
    for (int r = 0; r < kDofs; ++r)
      for (int c = 0; c < kDofs; ++c) dm[k](r, c) = m(r, c).derivatives()(k);
  return dm;
}

/// Coriolis/centrifugal matrix from Christoffel symbols of the first kind,
/// the factorization for which dM/dt - 2C is skew-symmetric.
inline Mat6 coriolis_matrix(const std::array<Mat6, kDofs>& dm, const Vec6& qd) {
  Mat6 c = Mat6::Zero();
  for (int i = 0; i < kDofs; ++i)
    for (int j = 0; j < kDofs; ++j) {
      double acc = 0.0;
      for (int k = 0; k < kDofs; ++k)
        acc += 0.5 * (dm[k](i, j) + dm[j](i, k) - dm[i](j, k)) * qd(k);
      c(i, j) = acc;
    }
  return c;
}

inline Mat6 coriolis_matrix(const ChainGeometry& geo, const Vec6& q, const Vec6& qd) {
  return coriolis_matrix(mass_matrix_partials(geo, q), qd);
}

}  // namespace softarm
