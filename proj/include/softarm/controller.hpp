#pragma once

// Joint-space adaptive controller: reference filter, sliding surface,
// RBF-compensated control law with stiffness feedforward, and antagonistic
// pressure allocation.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "softarm/common.hpp"
#include "softarm/rbfnn.hpp"

namespace softarm {

using JointTorqueMap = Eigen::Matrix<double, 2, 4>;

inline JointTorqueMap antagonistic_map() {
  JointTorqueMap k;
  k << 1, -1, 0, 0,
       0, 0, 1, -1;
  return k;
}

struct ControllerGains {
  VectorXd lambda;  // 1/s, diagonal
  VectorXd gamma;   // learning rates, diagonal of a (P+1)x(P+1) matrix
  VectorXd kd;      // torque per rad/s, diagonal
  VectorXd k_ff;    // torque per rad, diagonal
  JointTorqueMap k_tau = antagonistic_map();  // same map on every joint
  double p_max = 300.0;         // kPa
  double p_nom = 150.0;         // kPa
  double control_rate = 500.0;  // Hz
  double tau_filter = 0.75;     // s, = 1 / (omega_n * zeta)
  double zeta_filter = 1.0;

  int dofs() const { return static_cast<int>(lambda.size()); }
  double dt() const { return 1.0 / control_rate; }

  /// Throws InvalidArgument on any broken invariant. When the plant's
  /// pressure time constant is known the reference filter must be at least
  /// ten times slower.
  void validate(std::optional<double> plant_tau_p = std::nullopt) const {
    const auto n = lambda.size();
    require(n > 0 && n % 2 == 0, "gains: DOF count must be a positive multiple of 2");
    require(kd.size() == n && k_ff.size() == n, "gains: kd/k_ff length must equal DOF count");
    require(gamma.size() >= 2, "gains: gamma must cover P centers plus the bias row");
    require((lambda.array() > 0).all(), "gains: lambda must be > 0");
    require((gamma.array() > 0).all(), "gains: gamma must be > 0");
    require((kd.array() > 0).all(), "gains: kd must be > 0");
    require((k_ff.array() >= 0).all(), "gains: k_ff must be >= 0");
    require(0.0 < p_nom && p_nom < p_max, "gains: need 0 < p_nom < p_max");
    require(control_rate > 0.0, "gains: control_rate must be > 0");
    require(tau_filter > 0.0 && zeta_filter > 0.0, "gains: filter constants must be > 0");
    require(k_tau.allFinite(), "gains: k_tau non-finite");
    Eigen::FullPivLU<Eigen::Matrix<double, 2, 4>> lu(k_tau);
    require(lu.rank() == 2, "gains: k_tau must have full row rank");
    if (plant_tau_p)
      require(tau_filter >= 10.0 * *plant_tau_p,
              "gains: tau_filter must be at least 10x the pressure time constant");
  }
};

/// Defaults of the hardware study: six DOFs, P centers.
inline ControllerGains table1_gains(int P) {
  ControllerGains g;
  g.lambda.resize(kDofs);
  g.lambda << 12.0, 12.0, 12.0, 12.0, 25.0, 25.0;
  g.gamma = VectorXd::Constant(P + 1, 15.0);
  g.kd = VectorXd::Constant(kDofs, 2.5);
  g.k_ff = VectorXd::Constant(kDofs, 35.0);
  return g;
}

struct TrajectorySetpoint {
  VectorXd q_des;
  VectorXd q_dot_des;
  VectorXd q_ddot_des;
};

struct SlidingState {
  VectorXd q_tilde_integral;
  VectorXd s;
  VectorXd q_r_dot;
  VectorXd q_r_ddot;

  static SlidingState zero(int n) {
    return {VectorXd::Zero(n), VectorXd::Zero(n), VectorXd::Zero(n), VectorXd::Zero(n)};
  }
};

/// Second-order low-pass turning step commands into a smooth (q, qd, qdd)
/// reference. Discretized exactly under a zero-order hold on the command.
class CommandFilter {
 public:
  CommandFilter(int n, double tau, double zeta, double dt) : n_(n), dt_(dt) {
    require(n > 0, "filter: need at least one channel");
    require(tau > 0.0 && zeta > 0.0 && dt > 0.0, "filter: tau, zeta, dt must be > 0");
    omega_ = 1.0 / (tau * zeta);
    zeta_ = zeta;
    Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
    aug(0, 1) = 1.0;
    aug(1, 0) = -omega_ * omega_;
    aug(1, 1) = -2.0 * zeta_ * omega_;
    aug(1, 2) = omega_ * omega_;
    const Eigen::Matrix3d disc = (aug * dt).exp();
    ad_ = disc.topLeftCorner<2, 2>();
    bd_ = disc.topRightCorner<2, 1>();
    reset(VectorXd::Zero(n));
  }

  /// Rest at q with the command equal to q.
  void reset(const VectorXd& q) {
    require(q.size() == n_, "filter: reset size mismatch");
    pos_ = q;
    vel_ = VectorXd::Zero(n_);
    last_cmd_ = q;
    last_ = {q, VectorXd::Zero(n_), VectorXd::Zero(n_)};
  }

  /// Returns the setpoint at the current instant and advances one period.
  /// A non-finite command is ignored: the previous command is reused and
  /// `rejected` is set.
  TrajectorySetpoint step(const VectorXd& q_cmd, bool* rejected = nullptr) {
    require(q_cmd.size() == n_, "filter: command size mismatch");
    const bool bad = !q_cmd.allFinite();
    if (rejected) *rejected = bad;
    if (bad) return last_;
    last_cmd_ = q_cmd;
    const double w2 = omega_ * omega_;
    last_.q_des = pos_;
    last_.q_dot_des = vel_;
    last_.q_ddot_des = w2 * (q_cmd - pos_) - 2.0 * zeta_ * omega_ * vel_;
    for (int i = 0; i < n_; ++i) {
      const Eigen::Vector2d x(pos_(i), vel_(i));
      const Eigen::Vector2d next = ad_ * x + bd_ * q_cmd(i);
      pos_(i) = next(0);
      vel_(i) = next(1);
    }
    return last_;
  }

  const TrajectorySetpoint& current() const { return last_; }
  double natural_frequency() const { return omega_; }

 private:
  int n_;
  double dt_;
  double omega_ = 0.0;
  double zeta_ = 1.0;
  Eigen::Matrix2d ad_;
  Eigen::Vector2d bd_;
  VectorXd pos_, vel_, last_cmd_;
  TrajectorySetpoint last_;
};

/// Virtual reference and sliding variable. Channels listed in `freeze`
/// (non-zero entries) keep their error integral unchanged this period.
inline SlidingState update_sliding(const VectorXd& q, const VectorXd& q_dot,
                                   const TrajectorySetpoint& sp, const ControllerGains& gains,
                                   const SlidingState& prev, double dt,
                                   const Eigen::VectorXi* freeze = nullptr) {
  require(dt > 0.0, "update_sliding: dt must be positive");
  const auto n = q.size();
  require(q_dot.size() == n && sp.q_des.size() == n && gains.lambda.size() == n,
          "update_sliding: size mismatch");
  const VectorXd q_tilde = q - sp.q_des;
  const VectorXd q_tilde_dot = q_dot - sp.q_dot_des;
  const auto lam = gains.lambda.asDiagonal();

  SlidingState next;
  next.q_tilde_integral = prev.q_tilde_integral;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!freeze || (*freeze)(i) == 0) next.q_tilde_integral(i) += q_tilde(i) * dt;
  next.q_r_dot = sp.q_dot_des - lam * q_tilde;
  next.q_r_ddot = sp.q_ddot_des - lam * q_tilde_dot;
  next.s = q_dot - next.q_r_dot;
  return next;
}

/// tau = f_hat - K_D s + K q_des
inline VectorXd control_law(const VectorXd& net_output, const VectorXd& s,
                            const VectorXd& q_des, const ControllerGains& gains) {
  require(net_output.size() == s.size() && s.size() == q_des.size(),
          "control_law: size mismatch");
  return net_output - gains.kd.cwiseProduct(s) + gains.k_ff.cwiseProduct(q_des);
}

struct PressureCommand {
  VectorXd p_des;              // kPa, 4 per joint
  std::uint32_t sat_mask = 0;  // bit c set when chamber c was clipped
  bool saturated() const { return sat_mask != 0; }
};

/// Inverts the per-joint torque map about the nominal pressure using the
/// minimum-norm solution, then clips to [0, p_max]. Without clipping
/// K_tau * p_des reproduces tau_des exactly.
inline PressureCommand allocate_pressures(const VectorXd& tau_des, const ControllerGains& gains) {
  require(tau_des.size() % 2 == 0, "allocate_pressures: need two torques per joint");
  require(tau_des.size() <= 16, "allocate_pressures: at most 16 joints fit the saturation mask");
  const auto joints = tau_des.size() / 2;
  const Eigen::Matrix<double, 4, 2> pinv =
      gains.k_tau.transpose() * (gains.k_tau * gains.k_tau.transpose()).inverse();
  const Eigen::Vector4d nominal = Eigen::Vector4d::Constant(gains.p_nom);
  const Eigen::Vector2d offset = gains.k_tau * nominal;

  PressureCommand out;
  out.p_des.resize(4 * joints);
  for (Eigen::Index j = 0; j < joints; ++j) {
    const Eigen::Vector2d tau = tau_des.segment<2>(2 * j);
    Eigen::Vector4d p = nominal + pinv * (tau - offset);
    for (int c = 0; c < 4; ++c) {
      const double clipped = std::clamp(p(c), 0.0, gains.p_max);
      if (clipped != p(c) || !std::isfinite(p(c))) out.sat_mask |= 1u << (4 * j + c);
      p(c) = std::isfinite(p(c)) ? clipped : gains.p_nom;
    }
    out.p_des.segment<4>(4 * j) = p;
  }
  return out;
}

/// Applies the per-joint torque map to a chamber pressure vector.
inline VectorXd apply_torque_map(const JointTorqueMap& k_tau, const VectorXd& p) {
  require(p.size() % 4 == 0, "apply_torque_map: need four chambers per joint");
  const auto joints = p.size() / 4;
  VectorXd tau(2 * joints);
  for (Eigen::Index j = 0; j < joints; ++j)
    tau.segment<2>(2 * j) = k_tau * p.segment<4>(4 * j);
  return tau;
}

/// Regressor input x = [q, qd, qd_r, qdd_r].
inline VectorXd regressor_input(const VectorXd& q, const VectorXd& q_dot, const SlidingState& st) {
  const auto n = q.size();
  VectorXd x(4 * n);
  x << q, q_dot, st.q_r_dot, st.q_r_ddot;
  return x;
}

/// Default physical bounds of the regressor channels: joint angle, velocity,
/// reference velocity and reference acceleration.
inline std::pair<VectorXd, VectorXd> default_input_bounds(int n, double q_range = M_PI / 2,
                                                          double qd_range = 2.0,
                                                          double qrd_range = 2.0,
                                                          double qrdd_range = 5.0) {
  VectorXd hi(4 * n);
  hi << VectorXd::Constant(n, q_range), VectorXd::Constant(n, qd_range),
      VectorXd::Constant(n, qrd_range), VectorXd::Constant(n, qrdd_range);
  return {-hi, hi};
}

struct ControllerDiagnostics {
  TrajectorySetpoint setpoint;
  VectorXd s;
  VectorXd tau_des;
  VectorXd phi;
  VectorXd net_output;
  VectorXd p_des;
  std::uint32_t sat_mask = 0;
  bool command_rejected = false;
  bool fault = false;
  std::string fault_reason;
  double step_us = 0.0;
};

/// The complete periodic controller. Owns its network; not internally
/// synchronized.
class AdaptiveController {
 public:
  AdaptiveController(ControllerGains gains, RbfNetwork net)
      : gains_(std::move(gains)),
        net_(std::move(net)),
        filter_(gains_.dofs(), gains_.tau_filter, gains_.zeta_filter, gains_.dt()) {
    gains_.validate();
    const int n = gains_.dofs();
    require(net_.output_dim() == n, "controller: network output must match DOF count");
    require(net_.input_dim() == 4 * n, "controller: network input must be 4n");
    require(gains_.gamma.size() == net_.theta.rows(), "controller: gamma must have P+1 entries");
    sliding_ = SlidingState::zero(n);
    safe_p_ = VectorXd::Constant(2 * n, gains_.p_nom);
  }

  /// Starts from rest at q with the reference parked on q.
  void reset(const VectorXd& q) {
    filter_.reset(q);
    sliding_ = SlidingState::zero(gains_.dofs());
    last_sat_ = 0;
  }

  ControllerDiagnostics step(const VectorXd& q, const VectorXd& q_dot, const VectorXd& q_cmd) {
    const auto t0 = std::chrono::steady_clock::now();
    ControllerDiagnostics d;
    try {
      if (!q.allFinite() || !q_dot.allFinite()) throw ControllerFault("non-finite measurement");
      d.setpoint = filter_.step(q_cmd, &d.command_rejected);

      const int n = gains_.dofs();
      Eigen::VectorXi freeze = Eigen::VectorXi::Zero(n);
      if (antiwindup_) {
        for (int j = 0; j < n / 2; ++j)
          if ((last_sat_ >> (4 * j)) & 0xFu) freeze.segment<2>(2 * j).setOnes();
      }
      sliding_ = update_sliding(q, q_dot, d.setpoint, gains_, sliding_, gains_.dt(), &freeze);
      d.s = sliding_.s;

      d.phi = eval_basis(regressor_input(q, q_dot, sliding_), net_);
      d.net_output = forward(net_, d.phi);
      d.tau_des = control_law(d.net_output, d.s, d.setpoint.q_des, gains_);
      if (!d.tau_des.allFinite()) throw ControllerFault("non-finite torque command");

      const PressureCommand pc = allocate_pressures(d.tau_des, gains_);
      d.p_des = pc.p_des;
      d.sat_mask = pc.sat_mask;
      last_sat_ = pc.sat_mask;

      adapt(net_, d.phi, d.s, gains_.gamma, gains_.dt());
    } catch (const std::exception& e) {
      d.fault = true;
      d.fault_reason = e.what();
      d.p_des = safe_p_;
    }
    d.step_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return d;
  }

  void set_antiwindup(bool on) { antiwindup_ = on; }

  const ControllerGains& gains() const { return gains_; }
  const RbfNetwork& network() const { return net_; }
  RbfNetwork& network() { return net_; }
  const SlidingState& sliding() const { return sliding_; }

 private:
  ControllerGains gains_;
  RbfNetwork net_;
  CommandFilter filter_;
  SlidingState sliding_;
  VectorXd safe_p_;
  std::uint32_t last_sat_ = 0;
  bool antiwindup_ = true;
};

}  // namespace softarm
