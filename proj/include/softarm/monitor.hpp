#pragma once

// Post-hoc stability instrumentation over experiment logs: an empirical
// approximation-error bound, the ultimate-bound radius it implies, a
// settle/violation check against that radius, and a Lyapunov decrease audit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "softarm/common.hpp"

namespace softarm {

/// One residual sample: the torque the network should have produced and the
/// torque it did produce, both in controller units.
struct ResidualSample {
  double t;
  VectorXd f_true;
  VectorXd f_hat;
};

/// Percentile (0..1] of ||f_true - f_hat|| by linear interpolation between
/// order statistics. The trace must span at least `min_span` seconds.
inline double estimate_error_bound(const std::vector<ResidualSample>& trace,
                                   double percentile = 0.99, double min_span = 10.0) {
  require(percentile > 0.0 && percentile <= 1.0, "estimate_error_bound: percentile must be in (0, 1]");
  require(!trace.empty() && trace.back().t - trace.front().t >= min_span,
          "estimate_error_bound: trace shorter than the required span");
  std::vector<double> norms;
  norms.reserve(trace.size());
  for (const auto& r : trace) {
    require(r.f_true.size() == r.f_hat.size(), "estimate_error_bound: size mismatch");
    norms.push_back((r.f_true - r.f_hat).norm());
  }
  std::sort(norms.begin(), norms.end());
  const double pos = percentile * static_cast<double>(norms.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= norms.size()) return norms.back();
  return norms[i] + frac * (norms[i + 1] - norms[i]);
}

struct BoundParams {
  double E_hat = 0.0;
  VectorXd kd;     // diagonal of K_D
  VectorXd k_ff;   // diagonal of K
  double sup_q_des = 0.0;         // sup ||q_d|| over the run
  double transient_window = 3.0;  // s after each step before checks apply
  double settle_limit = 5.0;      // s allowed for per-DOF entry into the band
  double strict_band = 0.05;      // rad/s
};

/// (E + lambda_max(K) sup||q_d||) / lambda_min(K_D). With K = 0 this is
/// E / lambda_min(K_D).
inline double ultimate_bound_radius(const BoundParams& p) {
  require(p.kd.size() > 0 && (p.kd.array() > 0.0).all(), "ultimate_bound_radius: K_D must be positive");
  require(p.E_hat >= 0.0 && p.sup_q_des >= 0.0, "ultimate_bound_radius: E and sup||q_d|| must be >= 0");
  const double lmin = p.kd.minCoeff();
  const double lmax = p.k_ff.size() > 0 ? p.k_ff.cwiseAbs().maxCoeff() : 0.0;
  return (p.E_hat + lmax * p.sup_q_des) / lmin;
}

struct SlidingSample {
  double t;
  VectorXd s;
};

struct HoldResult {
  double t_start = 0.0;
  double t_end = 0.0;
  double settle_time = 0.0;         // last exceedance of the band after the step, s
  double strict_settle_time = 0.0;  // same for the strict band
  bool settled = false;             // settle_time <= settle_limit
  bool strict_settled = false;
  double steady_max = 0.0;          // max ||s|| after the transient window
  double steady_mean = 0.0;         // mean ||s|| after the transient window
};

struct StabilityReport {
  double E_hat = 0.0;
  double lambda_min_kd = 0.0;
  double lambda_max_k = 0.0;
  double sup_q_des = 0.0;
  double r_bound = 0.0;
  double band = 0.0;  // max(strict_band, r_bound), per-DOF criterion
  double strict_band = 0.0;
  double settle_time = 0.0;  // worst hold
  double s_steady_max = 0.0;
  double s_steady_mean = 0.0;
  int violations = 0;
  std::vector<double> violation_times;
  std::vector<HoldResult> holds;
  int holds_settled = 0;
  int holds_strict_settled = 0;
  std::string note;
};

/// Checks a sliding-variable trace against the ultimate-bound radius.
/// `hold_starts` lists the step times; each hold runs to the next step (the
/// last to the end of the trace). Violations are samples with ||s|| > r_bound
/// outside the transient window. Per hold, the settle time is measured on
/// max_i |s_i| against max(strict_band, r_bound) and against strict_band.
inline StabilityReport check_ultimate_bound(const std::vector<SlidingSample>& trace,
                                            const std::vector<double>& hold_starts,
                                            const BoundParams& p) {
  StabilityReport rep;
  rep.E_hat = p.E_hat;
  rep.lambda_min_kd = p.kd.minCoeff();
  rep.lambda_max_k = p.k_ff.size() > 0 ? p.k_ff.cwiseAbs().maxCoeff() : 0.0;
  rep.sup_q_des = p.sup_q_des;
  rep.r_bound = ultimate_bound_radius(p);
  rep.strict_band = p.strict_band;
  rep.band = std::max(p.strict_band, rep.r_bound);
  rep.note = "E_hat is an empirical percentile, so r_bound is a statistical bound";
  if (trace.empty()) return rep;

  std::vector<double> starts = hold_starts;
  if (starts.empty()) starts.push_back(trace.front().t);
  std::sort(starts.begin(), starts.end());
  const double t_last = trace.back().t;

  std::size_t idx = 0;
  double mean_acc = 0.0;
  std::size_t mean_n = 0;
  for (std::size_t h = 0; h < starts.size(); ++h) {
    HoldResult hr;
    hr.t_start = starts[h];
    hr.t_end = h + 1 < starts.size() ? starts[h + 1] : std::numeric_limits<double>::infinity();
    if (hr.t_start > t_last) break;
    while (idx < trace.size() && trace[idx].t < hr.t_start) ++idx;
    double acc = 0.0;
    std::size_t n = 0;
    for (; idx < trace.size() && trace[idx].t < hr.t_end; ++idx) {
      const auto& smp = trace[idx];
      const double since = smp.t - hr.t_start;
      const double worst = smp.s.cwiseAbs().maxCoeff();
      const double norm = smp.s.norm();
      if (worst >= rep.band) hr.settle_time = since;
      if (worst >= p.strict_band) hr.strict_settle_time = since;
      if (since >= p.transient_window) {
        hr.steady_max = std::max(hr.steady_max, norm);
        acc += norm;
        ++n;
        if (norm > rep.r_bound) {
          ++rep.violations;
          if (rep.violation_times.size() < 1000) rep.violation_times.push_back(smp.t);
        }
      }
    }
    hr.t_end = std::min(hr.t_end, t_last);
    hr.steady_mean = n > 0 ? acc / static_cast<double>(n) : 0.0;
    hr.settled = hr.settle_time <= p.settle_limit;
    hr.strict_settled = hr.strict_settle_time <= p.settle_limit;
    rep.holds_settled += hr.settled;
    rep.holds_strict_settled += hr.strict_settled;
    rep.settle_time = std::max(rep.settle_time, hr.settle_time);
    rep.s_steady_max = std::max(rep.s_steady_max, hr.steady_max);
    mean_acc += acc;
    mean_n += n;
    rep.holds.push_back(hr);
  }
  rep.s_steady_mean = mean_n > 0 ? mean_acc / static_cast<double>(mean_n) : 0.0;
  return rep;
}

/// A sample of the Lyapunov function along a run.
struct LyapunovSample {
  double t;
  double s_norm;
  double V;
};

struct AuditResult {
  double fraction = 1.0;  // decreasing share of qualifying samples; 1 when none qualify
  int qualifying = 0;
  int decreasing = 0;
  bool vacuous() const { return qualifying == 0; }
};

/// Fraction of samples with ||s|| >= r_bound at which V is trending down.
/// The trend is the least-squares slope of V over a centered window of
/// `window` seconds, which keeps finite-difference noise out of the sign.
inline AuditResult vdot_sign_audit(const std::vector<LyapunovSample>& trace, double r_bound,
                                   double window = 0.1) {
  require(r_bound >= 0.0 && window > 0.0, "vdot_sign_audit: need r_bound >= 0 and window > 0");
  AuditResult out;
  const std::size_t n = trace.size();
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (trace[i].s_norm < r_bound) continue;
    while (trace[i].t - trace[lo].t > 0.5 * window) ++lo;
    if (hi < i) hi = i;
    while (hi + 1 < n && trace[hi + 1].t - trace[i].t <= 0.5 * window) ++hi;
    if (hi == lo) continue;
    double tm = 0.0, vm = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      tm += trace[k].t;
      vm += trace[k].V;
    }
    const double cnt = static_cast<double>(hi - lo + 1);
    tm /= cnt;
    vm /= cnt;
    double num = 0.0, den = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      num += (trace[k].t - tm) * (trace[k].V - vm);
      den += (trace[k].t - tm) * (trace[k].t - tm);
    }
    ++out.qualifying;
    if (den > 0.0 && num / den < 0.0) ++out.decreasing;
  }
  if (out.qualifying > 0) out.fraction = static_cast<double>(out.decreasing) / out.qualifying;
  return out;
}

/// Logged state needed to rebuild V = 1/2 s^T M(q) s + 1/2 tr(Theta~^T Gamma^-1 Theta~).
struct AuditRecord {
  double t;
  Vec6 q;
  Vec6 s;
  double payload = 0.0;  // kg carried when the sample was taken
};

/// Network weights at one instant; taken at a lower rate than AuditRecord.
struct WeightSnapshot {
  double t;
  MatrixXd theta;
};

using MassProvider = std::function<Mat6(const Vec6& q, double payload)>;

/// V along a logged run. The unknown ideal weights are replaced by
/// `theta_ref` (in practice the weights at the end of the run); the weight
/// term is evaluated at the snapshots and interpolated linearly in time.
/// Needs the plant's mass matrix, so it only works on simulated runs.
inline std::vector<LyapunovSample> lyapunov_trace(const std::vector<AuditRecord>& log,
                                                  const std::vector<WeightSnapshot>& weights,
                                                  const MassProvider& mass,
                                                  const VectorXd& gamma_diag,
                                                  const MatrixXd& theta_ref) {
  if (!mass) throw InvalidArgument("lyapunov_trace: no mass-matrix provider (black-box log)");
  require((gamma_diag.array() > 0.0).all(), "lyapunov_trace: learning rates must be > 0");
  require(gamma_diag.size() == theta_ref.rows(), "lyapunov_trace: gamma must match the weight rows");
  const VectorXd ginv = gamma_diag.cwiseInverse();
  std::vector<double> wt, wv;
  for (const auto& w : weights) {
    require(w.theta.rows() == theta_ref.rows() && w.theta.cols() == theta_ref.cols(),
            "lyapunov_trace: weight snapshot shape mismatch");
    const MatrixXd dt = w.theta - theta_ref;
    wt.push_back(w.t);
    wv.push_back(0.5 * (dt.array().square().colwise() * ginv.array()).sum());
  }
  auto weight_term = [&](double t) {
    if (wt.empty()) return 0.0;
    if (t <= wt.front()) return wv.front();
    if (t >= wt.back()) return wv.back();
    const auto it = std::upper_bound(wt.begin(), wt.end(), t);
    const auto i = static_cast<std::size_t>(it - wt.begin());
    const double f = (t - wt[i - 1]) / (wt[i] - wt[i - 1]);
    return wv[i - 1] + f * (wv[i] - wv[i - 1]);
  };

  std::vector<LyapunovSample> out;
  out.reserve(log.size());
  for (const auto& r : log) {
    const Mat6 m = mass(r.q, r.payload);
    out.push_back({r.t, r.s.norm(), 0.5 * r.s.dot(m * r.s) + weight_term(r.t)});
  }
  return out;
}

inline nlohmann::json to_json(const StabilityReport& r) {
  nlohmann::json holds = nlohmann::json::array();
  for (const auto& h : r.holds)
    holds.push_back({{"t_start", h.t_start},
                     {"settle_time", h.settle_time},
                     {"strict_settle_time", h.strict_settle_time},
                     {"settled", h.settled},
                     {"strict_settled", h.strict_settled},
                     {"steady_max", h.steady_max},
                     {"steady_mean", h.steady_mean}});
  return {{"E_hat", r.E_hat},
          {"lambda_min_kd", r.lambda_min_kd},
          {"lambda_max_k", r.lambda_max_k},
          {"sup_q_des", r.sup_q_des},
          {"r_bound", r.r_bound},
          {"band", r.band},
          {"strict_band", r.strict_band},
          {"settle_time", r.settle_time},
          {"s_steady_max", r.s_steady_max},
          {"s_steady_mean", r.s_steady_mean},
          {"violations", r.violations},
          {"violation_times", r.violation_times},
          {"holds_settled", r.holds_settled},
          {"holds_strict_settled", r.holds_strict_settled},
          {"holds", holds},
          {"note", r.note}};
}

inline nlohmann::json to_json(const AuditResult& a) {
  return {{"fraction", a.fraction},
          {"qualifying", a.qualifying},
          {"decreasing", a.decreasing},
          {"vacuous", a.vacuous()}};
}

}  // namespace softarm
