#pragma once

// Simulated pneumatic soft arm: rigid serial chain, first-order chamber
// pressure response, antagonistic pressure-to-torque map, and a joint
// disturbance made of nonlinear stiffness, light viscous damping and
// Bouc-Wen hysteresis.

#include <array>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "softarm/chain.hpp"
#include "softarm/common.hpp"
#include "softarm/controller.hpp"

namespace softarm {

struct BoucWen {
  double alpha = 0.0;  // N m per unit z
  double beta = 0.0;
  double gamma = 0.0;
  double n = 1.0;
  double A = 1.0;
};

struct ArmState {
  Vec6 q = Vec6::Zero();
  Vec6 q_dot = Vec6::Zero();
  Vec12 p = Vec12::Zero();
  Vec6 hyst_z = Vec6::Zero();
  double t = 0.0;
};

/// A mask of free coordinates. Locked coordinates are held kinematically
/// (zero velocity and acceleration), as when a single joint is tested on
/// the bench.
using DofMask = std::array<bool, kDofs>;
inline constexpr DofMask kAllFree{true, true, true, true, true, true};

struct PlantModel {
  std::array<double, kJoints> link_masses{4.0, 2.5, 1.5};
  std::array<double, kJoints> link_lengths{0.45, 0.35, 0.25};
  double link_radius = 0.08;

  double payload_mass = 0.0;
  int payload_link = kJoints - 1;
  double payload_at = 1.0;  // fraction of the link length from its joint

  Vec6 k_lin = Vec6::Zero();    // N m / rad
  Vec6 k_cubic = Vec6::Zero();  // N m / rad^3
  Vec6 c_damp = Vec6::Zero();   // N m s / rad
  std::array<BoucWen, kDofs> bw{};

  double tau_p = 0.01;  // s
  Vec6 torque_gain = Vec6::Ones();  // N m per kPa of differential
  JointTorqueMap k_tau = antagonistic_map();
  Vec12 chamber_scale = Vec12::Ones();  // multiplicative per-chamber error

  double drift_rate = 0.0;  // fractional change of k_lin, k_cubic per second
  double p_fail = 615.0;    // kPa
  double q_limit = M_PI;    // rad
  double gravity = 9.81;

  ChainGeometry geometry;

  /// Recomputes the rigid-body description after any mass/geometry edit.
  void rebuild() {
    require(link_radius > 0.0, "plant: link radius must be > 0");
    require(payload_mass >= 0.0, "plant: payload mass must be >= 0");
    require(payload_link >= 0 && payload_link < kJoints, "plant: payload link index out of range");
    for (int j = 0; j < kJoints; ++j) {
      require(link_masses[j] > 0.0 && link_lengths[j] > 0.0, "plant: masses and lengths must be > 0");
      const bool carries = (j == payload_link) && payload_mass > 0.0;
      geometry.lengths[j] = link_lengths[j];
      geometry.bodies[j] = cylinder_link(link_masses[j], link_lengths[j], link_radius,
                                         carries ? payload_mass : 0.0,
                                         payload_at * link_lengths[j]);
    }
    geometry.gravity = gravity;
  }

  void validate() const {
    require(tau_p > 0.0, "plant: tau_p must be > 0");
    require((c_damp.array() >= 0.0).all(), "plant: damping must be >= 0");
    require(torque_gain.allFinite() && k_lin.allFinite() && k_cubic.allFinite(),
            "plant: non-finite stiffness or torque gain");
    require(p_fail > 0.0 && q_limit > 0.0, "plant: limits must be > 0");
  }

  double stiffness_factor(double t) const { return std::max(0.05, 1.0 + drift_rate * t); }
};

/// Calibration targets for a plant built by make_plant_model().
struct PlantConfig {
  std::array<double, kJoints> link_masses{4.0, 2.5, 1.5};
  std::array<double, kJoints> link_lengths{0.45, 0.35, 0.25};
  double link_radius = 0.08;

  double zeta = 0.0015;           // free-response damping ratio
  double freq_hz = 8.0;           // damped natural frequency
  double stiffness_kpa = 400.0;   // joint stiffness expressed in kPa of differential per rad
  double cubic_ratio = 0.5;       // k_cubic / k_lin
  double hyst_fraction = 0.15;    // share of small-signal stiffness carried by the hysteretic element
  double hyst_yield = 0.3;        // rad, Bouc-Wen saturation level of z
  double hyst_n = 4.0;
  double tau_p = 0.01;            // s
  double k_tau_mismatch = 0.15;   // per-chamber uniform scale error half-width
  bool drift = true;
  double drift_per_600s = -0.10;  // fractional stiffness change per ten minutes
  double p_fail = 615.0;
  double gravity = 9.81;
  // Optional per-DOF overrides of the damping and frequency targets.
  std::array<double, kDofs> zeta_override{0, 0, 0, 0, 0, 0};
  std::array<double, kDofs> freq_override{0, 0, 0, 0, 0, 0};
};

/// Builds a plant whose every DOF, with the other coordinates locked at
/// q = 0, has the configured small-signal frequency and damping ratio. All
/// DOFs share the same stiffness in kPa per rad; the per-chamber torque-map
/// error is drawn from `seed`.
inline PlantModel make_plant_model(const PlantConfig& cfg, std::uint64_t seed) {
  require(cfg.zeta >= 0.0 && cfg.zeta < 1.0, "plant config: zeta must be in [0, 1)");
  require(cfg.freq_hz > 0.0 && cfg.stiffness_kpa > 0.0, "plant config: frequency and stiffness must be > 0");
  require(cfg.hyst_fraction >= 0.0 && cfg.hyst_fraction < 1.0, "plant config: hyst_fraction must be in [0, 1)");
  require(cfg.hyst_yield > 0.0 && cfg.hyst_n >= 1.0, "plant config: bad hysteresis shape");
  require(cfg.k_tau_mismatch >= 0.0 && cfg.k_tau_mismatch < 1.0, "plant config: mismatch must be in [0, 1)");

  PlantModel m;
  m.link_masses = cfg.link_masses;
  m.link_lengths = cfg.link_lengths;
  m.link_radius = cfg.link_radius;
  m.tau_p = cfg.tau_p;
  m.p_fail = cfg.p_fail;
  m.gravity = cfg.gravity;
  m.drift_rate = cfg.drift ? cfg.drift_per_600s / 600.0 : 0.0;
  m.rebuild();

  const Mat6 m0 = mass_matrix<double>(m.geometry, Vec6::Zero());
  const double h = 1e-6;
  for (int i = 0; i < kDofs; ++i) {
    const double zeta = cfg.zeta_override[i] > 0.0 ? cfg.zeta_override[i] : cfg.zeta;
    const double f_d = cfg.freq_override[i] > 0.0 ? cfg.freq_override[i] : cfg.freq_hz;
    const double w_n = 2.0 * M_PI * f_d / std::sqrt(1.0 - zeta * zeta);
    Vec6 dq = Vec6::Zero();
    dq(i) = h;
    const double g_slope =
        (gravity_torque(m.geometry, dq)(i) - gravity_torque(m.geometry, -dq)(i)) / (2.0 * h);
    const double k_total = m0(i, i) * w_n * w_n - g_slope;
    require(k_total > 0.0, "plant config: gravity destabilizes the requested stiffness");

    m.k_lin(i) = (1.0 - cfg.hyst_fraction) * k_total;
    m.k_cubic(i) = cfg.cubic_ratio * m.k_lin(i);
    m.c_damp(i) = 2.0 * zeta * std::sqrt(k_total * m0(i, i));
    BoucWen& bw = m.bw[i];
    bw.alpha = cfg.hyst_fraction * k_total;
    bw.A = 1.0;
    bw.n = cfg.hyst_n;
    bw.beta = bw.gamma = 0.5 / std::pow(cfg.hyst_yield, cfg.hyst_n);
    m.torque_gain(i) = k_total / cfg.stiffness_kpa;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> err(-cfg.k_tau_mismatch, cfg.k_tau_mismatch);
  for (int c = 0; c < kChambers; ++c) m.chamber_scale(c) = 1.0 + err(rng);
  m.validate();
  return m;
}

/// Exact first-order response over dt toward a held command.
inline Vec12 pressure_step(const Vec12& p, const Vec12& p_des, double tau_p, double dt) {
  require(tau_p > 0.0 && dt >= 0.0, "pressure_step: need tau_p > 0 and dt >= 0");
  return p_des + (p - p_des) * std::exp(-dt / tau_p);
}

/// Generalized joint torque (N m) produced by chamber pressures (kPa).
inline Vec6 joint_torque(const Vec12& p, const PlantModel& m) {
  Vec6 tau;
  for (int j = 0; j < kJoints; ++j) {
    const Eigen::Vector4d eff = m.chamber_scale.segment<4>(4 * j).cwiseProduct(p.segment<4>(4 * j));
    tau.segment<2>(2 * j) = m.torque_gain.segment<2>(2 * j).cwiseProduct(m.k_tau * eff);
  }
  return tau;
}

/// dz/dt of the Bouc-Wen element.
inline double hysteresis_rate(double q_dot, double z, const BoucWen& bw) {
  const double az = std::abs(z);
  const double zn1 = bw.n == 1.0 ? 1.0 : std::pow(az, bw.n - 1.0);
  return bw.A * q_dot - bw.beta * std::abs(q_dot) * zn1 * z - bw.gamma * q_dot * zn1 * az;
}

/// Joint-level torque opposing motion: stiffness, damping and hysteresis.
inline Vec6 disturbance_torque(const Vec6& q, const Vec6& q_dot, const Vec6& z,
                               const PlantModel& m, double t) {
  const double f = m.stiffness_factor(t);
  Vec6 d;
  for (int i = 0; i < kDofs; ++i)
    d(i) = f * (m.k_lin(i) * q(i) + m.k_cubic(i) * q(i) * q(i) * q(i)) + m.c_damp(i) * q_dot(i) +
           m.bw[i].alpha * z(i);
  return d;
}

struct DisturbanceResult {
  Vec6 d;
  Vec6 hyst_z;
};

/// Disturbance at (q, qd, z) plus the hysteresis state advanced by dt with a
/// midpoint step at constant velocity.
inline DisturbanceResult disturbance(const Vec6& q, const Vec6& q_dot, const Vec6& z,
                                     const PlantModel& m, double dt, double t = 0.0) {
  require(dt > 0.0, "disturbance: dt must be positive");
  DisturbanceResult r;
  r.d = disturbance_torque(q, q_dot, z, m, t);
  for (int i = 0; i < kDofs; ++i) {
    const double k1 = hysteresis_rate(q_dot(i), z(i), m.bw[i]);
    r.hyst_z(i) = z(i) + dt * hysteresis_rate(q_dot(i), z(i) + 0.5 * dt * k1, m.bw[i]);
  }
  return r;
}

/// qdd = M^-1 (tau - C qd - g - d). Locked coordinates get zero acceleration.
inline Vec6 rigid_dynamics(const Vec6& q, const Vec6& q_dot, const Vec6& tau, const Vec6& d,
                           const PlantModel& m, const DofMask& free = kAllFree) {
  if (!q.allFinite() || !q_dot.allFinite() || !tau.allFinite() || !d.allFinite())
    throw PlantFault("rigid_dynamics: non-finite input");
  Mat6 mm = mass_matrix<double>(m.geometry, q);
  Vec6 rhs = tau - bias_torque(m.geometry, q, q_dot) - d;
  for (int i = 0; i < kDofs; ++i) {
    if (free[i]) continue;
    mm.row(i).setZero();
    mm.col(i).setZero();
    mm(i, i) = 1.0;
    rhs(i) = 0.0;
  }
  return mm.llt().solve(rhs);
}

namespace detail {

struct Deriv {
  Vec6 q_dot;
  Vec6 q_ddot;
  Vec6 z_dot;
};

inline Deriv arm_derivative(const PlantModel& m, double t, const Vec6& q, const Vec6& qd,
                            const Vec6& z, const Vec12& p, const DofMask& free) {
  Deriv out;
  out.q_dot = qd;
  const Vec6 d = disturbance_torque(q, qd, z, m, t);
  out.q_ddot = rigid_dynamics(q, qd, joint_torque(p, m), d, m, free);
  for (int i = 0; i < kDofs; ++i) out.z_dot(i) = hysteresis_rate(qd(i), z(i), m.bw[i]);
  return out;
}

}  // namespace detail

/// Advances the arm by `duration` with the pressure command held, using RK4
/// substeps of at most `max_step`. Chamber pressures follow their exact
/// exponential response inside every substep.
inline ArmState integrate(const ArmState& s0, const Vec12& p_des, const PlantModel& m,
                          double duration, double max_step = 2e-4,
                          const DofMask& free = kAllFree) {
  require(duration > 0.0 && max_step > 0.0, "integrate: step sizes must be positive");
  require(p_des.allFinite(), "integrate: non-finite pressure command");
  const int steps = static_cast<int>(std::ceil(duration / max_step - 1e-9));
  const double h = duration / steps;
  const double decay_rate = 1.0 / m.tau_p;

  ArmState s = s0;
  for (int i = 0; i < kDofs; ++i)
    if (!free[i]) s.q_dot(i) = 0.0;
  for (int k = 0; k < steps; ++k) {
    const Vec12 p0 = s.p;
    auto pressure_at = [&](double tau) -> Vec12 {
      return p_des + (p0 - p_des) * std::exp(-tau * decay_rate);
    };
    const Vec12 p_mid = pressure_at(0.5 * h);
    const Vec12 p_end = pressure_at(h);

    using detail::arm_derivative;
    const auto k1 = arm_derivative(m, s.t, s.q, s.q_dot, s.hyst_z, p0, free);
    const auto k2 = arm_derivative(m, s.t + 0.5 * h, s.q + 0.5 * h * k1.q_dot,
                                   s.q_dot + 0.5 * h * k1.q_ddot, s.hyst_z + 0.5 * h * k1.z_dot,
                                   p_mid, free);
    const auto k3 = arm_derivative(m, s.t + 0.5 * h, s.q + 0.5 * h * k2.q_dot,
                                   s.q_dot + 0.5 * h * k2.q_ddot, s.hyst_z + 0.5 * h * k2.z_dot,
                                   p_mid, free);
    const auto k4 = arm_derivative(m, s.t + h, s.q + h * k3.q_dot, s.q_dot + h * k3.q_ddot,
                                   s.hyst_z + h * k3.z_dot, p_end, free);
    s.q += h / 6.0 * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot);
    s.q_dot += h / 6.0 * (k1.q_ddot + 2.0 * k2.q_ddot + 2.0 * k3.q_ddot + k4.q_ddot);
    s.hyst_z += h / 6.0 * (k1.z_dot + 2.0 * k2.z_dot + 2.0 * k3.z_dot + k4.z_dot);
    s.p = p_end;
    s.t += h;

    if (!s.q.allFinite() || !s.q_dot.allFinite() || !s.hyst_z.allFinite())
      throw PlantFault("integrate: state became non-finite");
    if ((s.q.array().abs() > m.q_limit).any())
      throw PlantFault("integrate: joint angle beyond physical range");
    if ((s.p.array() > m.p_fail).any() || (s.p.array() < 0.0).any())
      throw PlantFault("integrate: chamber pressure outside [0, burst]");
  }
  return s;
}

/// Returns a copy of the model carrying `mass` kg at the distal end of link
/// `link`. A zero mass removes any payload.
inline PlantModel apply_payload(const PlantModel& m, double mass, int link) {
  require(mass >= 0.0, "apply_payload: mass must be >= 0");
  require(link >= 0 && link < kJoints, "apply_payload: invalid link index");
  PlantModel out = m;
  out.payload_mass = mass;
  out.payload_link = link;
  out.rebuild();
  return out;
}

/// Static configuration under constant chamber pressures, with the
/// hysteretic element in its elastic range (z = q). Locked coordinates stay
/// at `guess`.
inline Vec6 static_equilibrium(const PlantModel& m, const Vec12& p, Vec6 guess = Vec6::Zero(),
                               const DofMask& free = kAllFree, double t = 0.0) {
  const Vec6 tau = joint_torque(p, m);
  auto residual = [&](const Vec6& q) -> Vec6 {
    Vec6 r = tau - gravity_torque(m.geometry, q) - disturbance_torque(q, Vec6::Zero(), q, m, t);
    for (int i = 0; i < kDofs; ++i)
      if (!free[i]) r(i) = 0.0;
    return r;
  };
  Vec6 q = guess;
  for (int it = 0; it < 50; ++it) {
    const Vec6 r = residual(q);
    if (r.norm() < 1e-12) break;
    Mat6 jac;
    for (int c = 0; c < kDofs; ++c) {
      Vec6 dq = Vec6::Zero();
      dq(c) = 1e-7;
      jac.col(c) = (residual(q + dq) - residual(q - dq)) / 2e-7;
    }
    for (int i = 0; i < kDofs; ++i)
      if (!free[i]) {
        jac.row(i).setZero();
        jac.col(i).setZero();
        jac(i, i) = 1.0;
      }
    q -= jac.fullPivLu().solve(r);
  }
  return q;
}

/// Gravity potential plus elastic energy of the polynomial springs (J).
inline double potential_energy(const PlantModel& m, const Vec6& q, double t = 0.0) {
  const auto k = forward_kinematics<double>(m.geometry, q);
  double u = 0.0;
  for (int j = 0; j < kJoints; ++j) u += m.geometry.bodies[j].mass * m.gravity * k.com[j](2);
  const double f = m.stiffness_factor(t);
  for (int i = 0; i < kDofs; ++i) {
    const double x = q(i);
    u += f * (0.5 * m.k_lin(i) * x * x + 0.25 * m.k_cubic(i) * x * x * x * x);
  }
  return u;
}

inline double kinetic_energy(const PlantModel& m, const Vec6& q, const Vec6& q_dot) {
  return 0.5 * q_dot.dot(mass_matrix<double>(m.geometry, q) * q_dot);
}

/// Torque the controller would have to command, in its own units, for the
/// reference acceleration/velocity pair (qdd_r, qd_r) at the given state:
/// the target of the network's approximation. White-box; simulation only.
inline Vec6 reference_torque_in_controller_units(const PlantModel& m, const ArmState& s,
                                                 const Vec6& qr_dot, const Vec6& qr_ddot,
                                                 const ControllerGains& g) {
  const Mat6 mm = mass_matrix<double>(m.geometry, s.q);
  const Mat6 cc = coriolis_matrix(m.geometry, s.q, s.q_dot);
  const Vec6 physical = mm * qr_ddot + cc * qr_dot + gravity_torque(m.geometry, s.q) +
                        disturbance_torque(s.q, s.q_dot, s.hyst_z, m, s.t);
  // Pressures the controller would emit are p_nom + K_tau^+ (tau - K_tau p_nom);
  // map that affine law through the true plant and invert it.
  const Eigen::Matrix<double, 4, 2> pinv =
      g.k_tau.transpose() * (g.k_tau * g.k_tau.transpose()).inverse();
  const Eigen::Vector4d nominal = Eigen::Vector4d::Constant(g.p_nom);
  Vec6 out;
  for (int j = 0; j < kJoints; ++j) {
    const Eigen::Vector4d scale = m.chamber_scale.segment<4>(4 * j);
    const Eigen::Vector2d gain = m.torque_gain.segment<2>(2 * j);
    const Eigen::Matrix<double, 2, 4> true_map = gain.asDiagonal() * m.k_tau * scale.asDiagonal();
    const Eigen::Matrix2d w = true_map * pinv;
    const Eigen::Vector2d base = true_map * (nominal - pinv * (g.k_tau * nominal));
    out.segment<2>(2 * j) = w.partialPivLu().solve(physical.segment<2>(2 * j) - base);
  }
  return out;
}

}  // namespace softarm
