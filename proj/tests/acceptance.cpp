// End-to-end acceptance run. Prints one PASS/FAIL line per criterion plus
// informational lines, and exits non-zero when any criterion fails.

#include <cstdio>
#include <iostream>
#include <random>

#include "softarm/softarm.hpp"

using namespace softarm;

namespace {

int failures = 0;

void verdict(int n, bool pass, const std::string& detail) {
  std::printf("CRITERION %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

void info(const std::string& s) {
  std::printf("  info: %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Batch {
  std::vector<TrialResult> trials;
  std::vector<TrialAnalysis> analyses;
};

Batch run_batch(const ExperimentConfig& cfg, bool drop) {
  Batch b;
  for (int i = 0; i < cfg.experiment.trials; ++i) {
    b.trials.push_back(run_trial(cfg, {trial_seed(cfg, i), drop, ""}));
    b.analyses.push_back(analyze_trial(b.trials.back(), cfg));
  }
  return b;
}

double mean_steady(const Batch& b) {
  double acc = 0.0;
  for (const auto& a : b.analyses) acc += a.report.s_steady_mean;
  return acc / static_cast<double>(b.analyses.size());
}

}  // namespace

int main() {
  const ExperimentConfig cfg;  // shipped defaults
  const int trials = cfg.experiment.trials;

  // 1. convergence of every DOF into the band after every step
  const Batch nominal = run_batch(cfg, false);
  {
    int ok = 0, strict_holds = 0;
    double worst_wall = 0.0, worst_settle = 0.0;
    for (int i = 0; i < trials; ++i) {
      const auto& r = nominal.trials[static_cast<std::size_t>(i)];
      const auto& rep = nominal.analyses[static_cast<std::size_t>(i)].report;
      worst_wall = std::max(worst_wall, r.wall_seconds);
      worst_settle = std::max(worst_settle, rep.settle_time);
      strict_holds += rep.holds_strict_settled;
      const bool pass = !r.fault && rep.holds_settled == cfg.trajectory.count &&
                        static_cast<int>(rep.holds.size()) == cfg.trajectory.count && rep.violations == 0 &&
                        r.wall_seconds <= 60.0;
      ok += pass;
      std::printf("  trial %d seed %llu: r_bound %.3f band %.3f holds %d/%zu (strict %d) violations %d "
                  "mean |s| %.3f max |s| %.3f wall %.2f s%s\n",
                  i, static_cast<unsigned long long>(r.seed), rep.r_bound, rep.band, rep.holds_settled,
                  rep.holds.size(), rep.holds_strict_settled, rep.violations, rep.s_steady_mean,
                  rep.s_steady_max, r.wall_seconds, r.fault ? (" FAULT " + r.fault_reason).c_str() : "");
    }
    verdict(1, ok == trials,
            std::to_string(ok) + "/" + std::to_string(trials) + " trials settle within " +
                fmt("%.1f s", cfg.monitor.settle_limit) + " in every hold; worst settle " +
                fmt("%.2f s", worst_settle) + ", worst wall " + fmt("%.2f s", worst_wall));
    info("holds inside the strict 0.05 rad/s band: " + std::to_string(strict_holds) + "/" +
         std::to_string(trials * cfg.trajectory.count));
  }

  // 2. payload release, judged against the nominal band of the same seed
  {
    int ok = 0;
    double worst = 0.0;
    for (int i = 0; i < trials; ++i) {
      const auto& band = nominal.analyses[static_cast<std::size_t>(i)].report.band;
      const auto r = run_trial(cfg, {trial_seed(cfg, i), true, ""});
      const auto a = analyze_trial(r, cfg, std::nullopt, band);
      const bool pass = !r.fault && !std::isnan(a.reentry_time) && a.reentry_time <= cfg.monitor.settle_limit;
      ok += pass;
      worst = std::max(worst, std::isnan(a.reentry_time) ? 1e9 : a.reentry_time);
      std::printf("  trial %d: re-entry %.3f s into band %.3f, peak |s| after drop %.3f (settled peak before %.3f)%s\n",
                  i, a.reentry_time, band, a.drop_peak_s, a.pre_drop_peak_s,
                  r.fault ? (" FAULT " + r.fault_reason).c_str() : "");
    }
    verdict(2, ok == trials, std::to_string(ok) + "/" + std::to_string(trials) + " trials; worst re-entry " +
                                 fmt("%.3f s", worst));
  }

  // 3. bound violations, Lyapunov audit, negative control
  {
    int violations = 0, qualifying = 0;
    double worst = 1.0;
    for (const auto& a : nominal.analyses) {
      violations += a.report.violations;
      worst = std::min(worst, a.audit.fraction);
      qualifying += a.audit.qualifying;
    }
    auto weak = cfg;
    weak.controller.kd = 0.01;
    const auto r = run_trial(weak, {trial_seed(cfg, 0), false, ""});
    const double ball = nominal.analyses[0].report.r_bound;
    const auto neg = r.audit.empty() ? AuditResult{} : audit_trial(r, weak, ball);
    const bool neg_fails = neg.qualifying > 0 && neg.fraction < cfg.monitor.audit_threshold;
    verdict(3, violations == 0 && worst >= cfg.monitor.audit_threshold && neg_fails,
            std::to_string(violations) + " post-settle violations; worst audit fraction " + fmt("%.3f", worst) +
                " over " + std::to_string(qualifying) + " qualifying samples; K_D = 0.01 control " +
                fmt("%.3f", neg.fraction) + " over " + std::to_string(neg.qualifying) + " samples" +
                (r.fault ? " (control run aborted: " + r.fault_reason + ")" : std::string()));
    if (qualifying == 0) info("no nominal sample left the ball, so the nominal audit holds vacuously");
    const auto& n0 = nominal.trials[0];
    const auto small = audit_trial(n0, cfg, cfg.monitor.strict_band);
    info("nominal trial 0 audited against the strict band radius: " + fmt("%.3f", small.fraction) + " over " +
         std::to_string(small.qualifying) + " samples");
  }

  // 4. identification
  {
    bool synth = true;
    for (double zeta : {0.005, 0.02, 0.05})
      for (double f : {4.0, 8.0, 12.0}) {
        std::vector<TimeSample> sig;
        const double wd = 2 * M_PI * f, wn = wd / std::sqrt(1 - zeta * zeta);
        for (int k = 0; k <= 3000; ++k) {
          const double t = k / 1000.0;
          sig.push_back({t, std::exp(-zeta * wn * t) * std::cos(wd * t)});
        }
        const auto r = log_decrement(sig);
        synth = synth && std::abs(r.zeta - zeta) <= 0.1 * zeta && std::abs(r.omega_d_hz - f) <= 0.02 * f;
      }
    std::vector<LoopSample> ell;
    for (int k = 0; k <= 4000; ++k) {
      const double th = 2 * M_PI * k / 2000.0;
      ell.push_back({200.0 * std::sin(th), 0.3 * std::sin(th - 0.4)});
    }
    const double exact = M_PI * 200.0 * 0.3 * std::sin(0.4);
    const double area_err = std::abs(hysteresis_metrics(ell).loop_area - exact) / exact;

    const auto sys = run_sysid(cfg);
    bool plant_ok = true;
    for (const auto& fr : sys.free) {
      const double ez = std::abs(fr.estimate.zeta - fr.zeta_target) / fr.zeta_target;
      const double ef = std::abs(fr.estimate.omega_d_hz - fr.freq_target) / fr.freq_target;
      plant_ok = plant_ok && ez <= 0.20 && ef <= 0.10;
      std::printf("  plant dof %d: zeta %.5f (err %.1f%%), f_d %.4f Hz (err %.2f%%)\n", fr.dof,
                  fr.estimate.zeta, 100 * ez, fr.estimate.omega_d_hz, 100 * ef);
    }
    bool area_ok = !sys.ramps.empty();
    for (const auto& rr : sys.ramps) {
      area_ok = area_ok && rr.metrics.loop_area > 0.0;
      std::printf("  ramp dof %d: loop area %.4f kPa rad\n", rr.dof, rr.metrics.loop_area);
    }
    verdict(4, synth && plant_ok && area_err <= 0.01 && area_ok,
            std::string("synthetic ") + (synth ? "ok" : "off") + ", plant " + (plant_ok ? "ok" : "off") +
                ", ellipse area error " + fmt("%.2e", area_err) + ", ramp loop area " +
                (area_ok ? "positive" : "not positive"));
  }

  // 5. numerical oracles
  {
    auto [lo, hi] = default_input_bounds(kDofs);
    auto net = make_network(lo, hi, 10, kDofs, 3);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < net.theta.size(); ++i) net.theta.data()[i] = n(rng);
    VectorXd x(4 * kDofs), s(kDofs);
    for (int i = 0; i < x.size(); ++i) x(i) = 0.5 * n(rng);
    for (int i = 0; i < s.size(); ++i) s(i) = n(rng);
    const VectorXd gamma = VectorXd::LinSpaced(11, 1.0, 15.0);
    const VectorXd phi = eval_basis(x, net);
    const MatrixXd before = net.theta;
    adapt(net, phi, s, gamma, 0.002);
    double adapt_err = 0.0;
    for (int r = 0; r < 11; ++r)
      for (int c = 0; c < kDofs; ++c)
        adapt_err = std::max(adapt_err, std::abs(net.theta(r, c) - (before(r, c) - 0.002 * gamma(r) * phi(r) * s(c))));

    const auto g = table1_gains(10);
    std::uniform_real_distribution<double> u(-60.0, 60.0);
    double alloc_err = 0.0;
    int alloc_used = 0;
    for (int k = 0; k < 1000; ++k) {
      VectorXd tau(kDofs);
      for (int i = 0; i < kDofs; ++i) tau(i) = u(rng);
      const auto pc = allocate_pressures(tau, g);
      if (pc.saturated()) continue;
      ++alloc_used;
      alloc_err = std::max(alloc_err, (apply_torque_map(g.k_tau, pc.p_des) - tau).cwiseAbs().maxCoeff());
    }

    const auto m = make_plant_model(cfg.plant.model, 1);
    std::uniform_real_distribution<double> uq(-1.5, 1.5);
    double skew = 0.0;
    for (int k = 0; k < 50; ++k) {
      Vec6 q, qd;
      for (int i = 0; i < kDofs; ++i) {
        q(i) = uq(rng);
        qd(i) = 2.0 * uq(rng);
      }
      const auto dm = mass_matrix_partials(m.geometry, q);
      Mat6 mdot = Mat6::Zero();
      for (int i = 0; i < kDofs; ++i) mdot += dm[i] * qd(i);
      const Mat6 nn = mdot - 2.0 * coriolis_matrix(dm, qd);
      skew = std::max(skew, (nn + nn.transpose()).cwiseAbs().maxCoeff());
    }

    ArmState s0;
    s0.p = Vec12::Constant(150.0);
    s0.q = static_equilibrium(m, s0.p);
    s0.q(0) += 0.05;
    s0.q(5) -= 0.05;
    s0.hyst_z = s0.q;
    Vec12 pd = s0.p;
    pd(2) = 190.0;
    const double halving = (integrate(s0, pd, m, 1.0, 2e-4).q - integrate(s0, pd, m, 1.0, 1e-4).q).cwiseAbs().maxCoeff();

    verdict(5, adapt_err <= 1e-12 && alloc_used == 1000 && alloc_err <= 1e-9 && skew <= 1e-9 && halving < 1e-6,
            "adapt " + fmt("%.1e", adapt_err) + ", allocation " + fmt("%.1e", alloc_err) + " over " +
                std::to_string(alloc_used) + " samples, skew " + fmt("%.1e", skew) + ", RK4 halving " +
                fmt("%.1e", halving));
  }

  // 6. timing, soak, weight stability (the nominal trials are 60k control steps each)
  {
    double worst_mean = 0.0, worst_change = 0.0;
    bool finite = true;
    long min_steps = std::numeric_limits<long>::max();
    for (std::size_t i = 0; i < nominal.trials.size(); ++i) {
      const auto& r = nominal.trials[i];
      const auto& a = nominal.analyses[i];
      worst_mean = std::max(worst_mean, r.step_us_mean);
      finite = finite && !r.non_finite && !r.fault;
      min_steps = std::min(min_steps, r.steps);
      worst_change = std::max(worst_change, a.theta_norm_change_last_10s);
      std::printf("  trial %zu: step mean %.2f us max %.1f us, |Theta| %.2f, change over last 10 s %.3f (range %.3f)\n",
                  i, r.step_us_mean, r.step_us_max, a.theta_norm_final, a.theta_norm_change_last_10s,
                  a.theta_norm_range_last_10s);
    }
    verdict(6, worst_mean <= 2000.0 && finite && min_steps >= 60000 && worst_change < 0.10,
            "worst mean step " + fmt("%.2f us", worst_mean) + ", " + std::to_string(min_steps) + " steps " +
                (finite ? "finite" : "NON-FINITE") + ", worst |Theta| change " + fmt("%.3f", worst_change));
  }

  // 7. insensitivity to the number of centers
  {
    auto wide = cfg;
    wide.controller.centers = 50;
    const Batch b50 = run_batch(wide, false);
    const double m10 = mean_steady(nominal), m50 = mean_steady(b50);
    const double rel = std::abs(m50 - m10) / m10;
    bool faults = false;
    for (const auto& r : b50.trials) faults = faults || r.fault;
    verdict(7, rel < 0.25 && !faults,
            "mean steady |s| " + fmt("%.4f", m10) + " (P = 10) vs " + fmt("%.4f", m50) + " (P = 50), difference " +
                fmt("%.1f%%", 100 * rel));
  }

  std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASS" : (std::to_string(failures) + " CRITERIA FAIL").c_str());
  return failures == 0 ? 0 : 1;
}
