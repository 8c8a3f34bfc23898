#include <gtest/gtest.h>

#include <random>

#include "softarm/monitor.hpp"

using namespace softarm;

namespace {

BoundParams params(double E, double kd = 2.5, double kff = 0.0, double sup = 0.0) {
  BoundParams p;
  p.E_hat = E;
  p.kd = VectorXd::Constant(6, kd);
  p.k_ff = VectorXd::Constant(6, kff);
  p.sup_q_des = sup;
  return p;
}

std::vector<SlidingSample> trace_of(double duration, double rate, const std::function<VectorXd(double)>& f) {
  std::vector<SlidingSample> out;
  for (int k = 0; k <= static_cast<int>(duration * rate); ++k) out.push_back({k / rate, f(k / rate)});
  return out;
}

}  // namespace

TEST(ErrorBound, ConstantResidualGivesItsNorm) {
  std::vector<ResidualSample> tr;
  VectorXd c(6);
  c << 1, -2, 3, 0, 0.5, -1;
  for (int k = 0; k <= 1000; ++k) tr.push_back({k * 0.02, c, VectorXd::Zero(6)});
  EXPECT_NEAR(estimate_error_bound(tr), c.norm(), 1e-12);
}

TEST(ErrorBound, InterpolatedPercentile) {
  std::vector<ResidualSample> tr;
  for (int k = 0; k <= 100; ++k) tr.push_back({k * 0.2, VectorXd::Constant(1, 100 - k), VectorXd::Zero(1)});
  EXPECT_NEAR(estimate_error_bound(tr, 0.99), 99.0, 1e-12);
  EXPECT_NEAR(estimate_error_bound(tr, 0.995), 99.5, 1e-12);
  EXPECT_NEAR(estimate_error_bound(tr, 1.0), 100.0, 1e-12);
}

TEST(ErrorBound, RejectsShortOrBadInput) {
  std::vector<ResidualSample> tr;
  for (int k = 0; k < 100; ++k) tr.push_back({k * 0.05, VectorXd::Ones(2), VectorXd::Zero(2)});
  EXPECT_THROW(estimate_error_bound(tr), InvalidArgument);
  EXPECT_NO_THROW(estimate_error_bound(tr, 0.99, 4.0));
  EXPECT_THROW(estimate_error_bound(tr, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(estimate_error_bound({}), InvalidArgument);
}

TEST(Radius, FeedforwardFreeIsErrorOverDamping) {
  auto p = params(10.0, 2.5);
  p.kd(3) = 2.0;
  EXPECT_DOUBLE_EQ(ultimate_bound_radius(p), 5.0);
  p.k_ff.resize(0);
  EXPECT_DOUBLE_EQ(ultimate_bound_radius(p), 5.0);
}

TEST(Radius, IncludesFeedforwardTerm) {
  auto p = params(10.0, 2.5, 35.0, 0.8);
  EXPECT_NEAR(ultimate_bound_radius(p), (10.0 + 35.0 * 0.8) / 2.5, 1e-12);
}

TEST(Radius, MonotoneInDampingAndError) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int k = 0; k < 100; ++k) {
    const double E = u(rng), kd = u(rng), kff = u(rng), sup = u(rng) / 10;
    const double r = ultimate_bound_radius(params(E, kd, kff, sup));
    EXPECT_LT(ultimate_bound_radius(params(E, kd * 1.1, kff, sup)), r);
    EXPECT_GT(ultimate_bound_radius(params(E * 1.1, kd, kff, sup)), r);
  }
  EXPECT_THROW(ultimate_bound_radius(params(1.0, 0.0)), InvalidArgument);
  EXPECT_THROW(ultimate_bound_radius(params(-1.0)), InvalidArgument);
}

TEST(BoundCheck, ZeroSlidingSettlesEverywhere) {
  const auto tr = trace_of(30.0, 50.0, [](double) { return VectorXd::Zero(6); });
  const auto rep = check_ultimate_bound(tr, {0.0, 10.0, 20.0}, params(1.0));
  EXPECT_EQ(rep.violations, 0);
  ASSERT_EQ(rep.holds.size(), 3u);
  EXPECT_EQ(rep.holds_settled, 3);
  EXPECT_EQ(rep.holds_strict_settled, 3);
  EXPECT_DOUBLE_EQ(rep.s_steady_max, 0.0);
  EXPECT_DOUBLE_EQ(rep.band, std::max(0.05, rep.r_bound));
}

TEST(BoundCheck, SettleTimeOfExponentialDecay) {
  // |s_i| = 4 exp(-t'), t' since the latest step; the strict band is crossed at ln(4 / 0.05)
  auto f = [](double t) { return VectorXd::Constant(6, 4.0 * std::exp(-std::fmod(t, 10.0))); };
  const auto tr = trace_of(19.999, 1000.0, f);
  const auto rep = check_ultimate_bound(tr, {0.0, 10.0}, params(0.0));
  const double expect = std::log(4.0 / 0.05);
  for (const auto& h : rep.holds) {
    EXPECT_NEAR(h.strict_settle_time, expect, 2e-3);
    EXPECT_TRUE(h.strict_settled);
  }
  auto tight = params(0.0);
  tight.settle_limit = 4.0;
  EXPECT_EQ(check_ultimate_bound(tr, {0.0, 10.0}, tight).holds_strict_settled, 0);
}

TEST(BoundCheck, ViolationsOnlyOutsideTransientWindow) {
  auto f = [](double t) {
    VectorXd s = VectorXd::Zero(6);
    if (std::abs(t - 1.0) < 1e-9) s(0) = 100.0;  // inside the window after the step at 0
    if (std::abs(t - 6.0) < 1e-9) s(0) = 100.0;  // outside
    return s;
  };
  const auto tr = trace_of(10.0, 50.0, f);
  const auto rep = check_ultimate_bound(tr, {0.0}, params(2.5));
  EXPECT_EQ(rep.violations, 1);
  ASSERT_EQ(rep.violation_times.size(), 1u);
  EXPECT_NEAR(rep.violation_times[0], 6.0, 1e-9);
  EXPECT_EQ(rep.holds_settled, 0);
  const auto j = to_json(rep);
  EXPECT_EQ(j["violations"], 1);
  EXPECT_TRUE(j.contains("r_bound"));
}

TEST(Audit, VacuousWhenNothingQualifies) {
  std::vector<LyapunovSample> tr;
  for (int k = 0; k < 100; ++k) tr.push_back({k * 0.01, 0.1, 1.0 + k});
  const auto a = vdot_sign_audit(tr, 1.0);
  EXPECT_TRUE(a.vacuous());
  EXPECT_DOUBLE_EQ(a.fraction, 1.0);
  EXPECT_EQ(vdot_sign_audit(tr, 0.0).fraction, 0.0);
}

TEST(Audit, AdaptiveLinearSystemAlwaysDescends) {
  // s' = -K_D s + Theta~^T phi, Theta~' = -Gamma phi s^T: V' = -s^T K_D s.
  const int n = 6, P = 4;
  const VectorXd kd = VectorXd::Constant(n, 2.5);
  VectorXd gamma(P + 1);
  gamma << 15, 10, 5, 2, 1;
  MatrixXd err = MatrixXd::Constant(P + 1, n, 0.4);
  VectorXd s = VectorXd::Constant(n, 1.0);
  const MatrixXd star = MatrixXd::Constant(P + 1, n, 2.0);
  std::vector<AuditRecord> log;
  std::vector<WeightSnapshot> weights;
  const double h = 1e-4;
  for (int k = 0; k <= 40000; ++k) {
    const double t = k * h;
    VectorXd phi(P + 1);
    for (int i = 0; i < P; ++i) phi(i) = std::exp(-std::pow(std::sin(t + i) - 0.3 * i, 2));
    phi(P) = 1.0;
    if (k % 10 == 0) {
      AuditRecord r;
      r.t = t;
      r.q = Vec6::Zero();
      r.s = s;
      log.push_back(r);
      weights.push_back({t, star + err});
    }
    // midpoint step
    const VectorXd ds1 = -kd.cwiseProduct(s) + err.transpose() * phi;
    const MatrixXd de1 = -(gamma.cwiseProduct(phi)) * s.transpose();
    const VectorXd sm = s + 0.5 * h * ds1;
    const MatrixXd em = err + 0.5 * h * de1;
    s += h * (-kd.cwiseProduct(sm) + em.transpose() * phi);
    err -= h * gamma.cwiseProduct(phi) * sm.transpose();
  }
  const MassProvider unit = [](const Vec6&, double) { return Mat6::Identity(); };
  const auto tr = lyapunov_trace(log, weights, unit, gamma, star);
  for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_LE(tr[k].V, tr[k - 1].V + 1e-9);
  const auto a = vdot_sign_audit(tr, 1e-3);
  EXPECT_GT(a.qualifying, 100);
  EXPECT_GE(a.fraction, 0.99);
}

TEST(Audit, GrowingEnergyFails) {
  std::vector<LyapunovSample> tr;
  for (int k = 0; k < 500; ++k) tr.push_back({k * 0.01, 5.0, std::exp(0.1 * k * 0.01)});
  const auto a = vdot_sign_audit(tr, 1.0);
  EXPECT_EQ(a.qualifying, 500);
  EXPECT_DOUBLE_EQ(a.fraction, 0.0);
  EXPECT_EQ(to_json(a)["qualifying"], 500);
}

TEST(LyapunovTrace, NeedsMassProvider) {
  std::vector<AuditRecord> log(1);
  EXPECT_THROW(lyapunov_trace(log, {}, MassProvider{}, VectorXd::Ones(2), MatrixXd::Zero(2, 6)),
               InvalidArgument);
}

TEST(LyapunovTrace, WeightTermInterpolatesAndUsesMass) {
  const MassProvider twice = [](const Vec6&, double payload) { return (2.0 + payload) * Mat6::Identity(); };
  std::vector<AuditRecord> log(3);
  for (int k = 0; k < 3; ++k) {
    log[k].t = k * 0.5;
    log[k].q = Vec6::Zero();
    log[k].s = Vec6::Zero();
  }
  log[2].s(0) = 1.0;
  log[2].payload = 1.0;
  const MatrixXd ref = MatrixXd::Zero(2, 6);
  MatrixXd w1 = ref;
  w1(0, 0) = 2.0;  // 1/2 * 4 / gamma(0)
  const VectorXd gamma = VectorXd::Constant(2, 2.0);
  const auto tr = lyapunov_trace(log, {{0.0, ref}, {1.0, w1}}, twice, gamma, ref);
  EXPECT_NEAR(tr[0].V, 0.0, 1e-15);
  EXPECT_NEAR(tr[1].V, 0.5, 1e-15);
  EXPECT_NEAR(tr[2].V, 1.0 + 1.5, 1e-15);
}
