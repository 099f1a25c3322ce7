// End-to-end acceptance gate. Each numbered check prints one
// [PASS]/[FAIL] line with the measured quantities and the pinned
// tolerance it was judged against. Exit status is the number of
// failing checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <span>
#include <vector>

#include "mfdr/grid_sim.hpp"
#include "mfdr/load_model.hpp"
#include "mfdr/meanfield.hpp"
#include "mfdr/qos.hpp"
#include "mfdr/rng.hpp"
#include "mfdr/spectral.hpp"

namespace {

using Clock = std::chrono::steady_clock;
using mfdr::Complex;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Mirrors the CLI defaults: 400 h of 5-minute grid samples, first-order
// low-pass at 0.005 cycles/sample, reference stream seed 18.
constexpr long kGridSteps = 4800;
constexpr double kCutoff = 0.005;
constexpr std::uint64_t kRefSeed = 18;

int g_failures = 0;

void report(int id, bool ok, const char* what, const std::string& detail) {
  std::printf("[%s] %2d. %s: %s\n", ok ? "PASS" : "FAIL", id, what,
              detail.c_str());
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double rms(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / double(v.size()));
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Nominal tracking target shared by the closed-loop checks.
std::vector<double> nominal_reference() {
  mfdr::RngStream rng(kRefSeed, 0);
  const auto r0 = mfdr::generate_regulation(mfdr::bpa_arma_coeffs(),
                                            kGridSteps, rng);
  return mfdr::lowpass_reference(r0, kCutoff);
}

// Dense ergodic test chain with O(1) transition probabilities.
mfdr::ControlledFamily random_family(int d, std::uint64_t seed) {
  mfdr::RngStream rng(seed, 0);
  mfdr::Matrix p(d, d);
  mfdr::Vector u(d);
  for (int i = 0; i < d; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < d; ++j) {
      p(i, j) = -std::log(std::max(rng.next_double(), 1e-12));
      row_sum += p(i, j);
    }
    p.row(i) /= row_sum;
    u[i] = rng.next_double();
  }
  return mfdr::make_family(mfdr::TransitionMatrix{p}, u);
}

// Draws an index from the invariant law.
int stationary_draw(const mfdr::Distribution& pi0, double uniform) {
  double acc = 0.0;
  for (int i = 0; i < pi0.dim(); ++i) {
    acc += pi0.w[i];
    if (uniform < acc) return i;
  }
  return pi0.dim() - 1;
}

struct CovarianceCheck {
  double max_z = 0.0;  // worst |MC - analytic| / SE over sampled entries
  bool ok = true;
};

// Monte-Carlo one-step innovation covariance against the closed form,
// entrywise within 3 standard errors estimated from the same run.
CovarianceCheck covariance_vs_mc(const mfdr::ControlledFamily& family,
                                 long steps, std::uint64_t seed) {
  const int d = family.dim();
  std::vector<std::vector<double>> rows(d);
  std::vector<std::vector<int>> support(d);
  for (int i = 0; i < d; ++i) {
    rows[i].resize(d);
    for (int j = 0; j < d; ++j) {
      rows[i][j] = family.nominal.p(i, j);
      if (rows[i][j] > 0.0) support[i].push_back(j);
    }
  }

  mfdr::Matrix sum = mfdr::Matrix::Zero(d, d);
  mfdr::Matrix sumsq = mfdr::Matrix::Zero(d, d);
  mfdr::RngStream rng(seed, 0);
  int x = stationary_draw(family.pi0, rng.next_double());
  for (long t = 0; t < steps; ++t) {
    const int nx = mfdr::sample_index(rows[x], rng.next_double());
    // The innovation is supported on the reachable successors of x.
    for (int i : support[x]) {
      const double di = (i == nx ? 1.0 : 0.0) - rows[x][i];
      for (int j : support[x]) {
        const double dij = di * ((j == nx ? 1.0 : 0.0) - rows[x][j]);
        sum(i, j) += dij;
        sumsq(i, j) += dij * dij;
      }
    }
    x = nx;
  }

  const mfdr::Matrix analytic = mfdr::sigma_delta(family.nominal, family.pi0);
  CovarianceCheck out;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double mean = sum(i, j) / double(steps);
      const double var = sumsq(i, j) / double(steps) - mean * mean;
      const double se = std::sqrt(std::max(var, 0.0) / double(steps));
      const double diff = std::abs(mean - analytic(i, j));
      if (se == 0.0) {
        // Entry never touched by the walk: both sides must vanish.
        if (diff > 1e-12) out.ok = false;
        continue;
      }
      out.max_z = std::max(out.max_z, diff / se);
      if (diff > 3.0 * se) out.ok = false;
    }
  }
  return out;
}

void check_1_innovation_covariance() {
  const auto start = Clock::now();
  constexpr long kSteps = 1'000'000;
  const auto pool = mfdr::build_nominal_pool_model(48, 1.0 / 24.0);
  const auto pool_res = covariance_vs_mc(pool, kSteps, 101);
  const auto small = random_family(5, 42);
  const auto small_res = covariance_vs_mc(small, kSteps, 202);
  const double secs = seconds_since(start);
  const bool ok = pool_res.ok && small_res.ok && secs < 60.0;
  report(1, ok, "innovation covariance matches Monte Carlo (3 SE, 1e6 steps)",
         fmt("pool max|z| = %.2f, 5-state max|z| = %.2f, %.1f s (< 60 s)",
             pool_res.max_z, small_res.max_z, secs));
}

void check_2_broadcast_cross_psd() {
  const auto start = Clock::now();
  const auto family = random_family(5, 42);
  const int d = family.dim();
  constexpr int kM = 6;
  constexpr double kRho = 0.8;
  constexpr long kLoadSteps = 1 << 20;
  constexpr int kSeg = 128;
  const double sigma_z2 = 1.0 / (1.0 - kRho * kRho);

  // Joint path: stationary chain at the load timescale, AR(1) broadcast
  // at the grid timescale sampled every kM-th step.
  std::vector<std::vector<double>> rows(d);
  for (int i = 0; i < d; ++i) {
    rows[i].resize(d);
    for (int j = 0; j < d; ++j) rows[i][j] = family.nominal.p(i, j);
  }
  mfdr::RngStream chain_rng(7, 0);
  mfdr::RngStream zeta_rng(7, 1);
  auto normal = [](mfdr::RngStream& rng) {
    const double u1 = std::max(rng.next_double(), 0x1.0p-64);
    const double u2 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  };
  int x = stationary_draw(family.pi0, chain_rng.next_double());
  double zeta = std::sqrt(sigma_z2) * normal(zeta_rng);
  std::vector<std::vector<double>> xi(d, std::vector<double>(kLoadSteps));
  for (long tau = 0; tau < kLoadSteps; ++tau) {
    for (int j = 0; j < d; ++j) {
      xi[j][tau] = family.derivative(x, j) * zeta;
    }
    x = mfdr::sample_index(rows[x], chain_rng.next_double());
    for (int k = 0; k < kM; ++k) zeta = kRho * zeta + normal(zeta_rng);
  }

  // Welch cross-periodogram with the same window, overlap, and
  // normalization as the scalar estimator.
  std::vector<double> window(kSeg);
  double wpow = 0.0;
  for (int t = 0; t < kSeg; ++t) {
    window[t] = 0.5 * (1.0 - std::cos(kTwoPi * double(t) / double(kSeg)));
    wpow += window[t] * window[t];
  }
  std::vector<double> mean(d, 0.0);
  for (int j = 0; j < d; ++j) {
    for (double v : xi[j]) mean[j] += v;
    mean[j] /= double(kLoadSteps);
  }
  std::vector<mfdr::MatrixXc> mc(kSeg, mfdr::MatrixXc::Zero(d, d));
  std::vector<std::vector<Complex>> segf(d, std::vector<Complex>(kSeg));
  long nseg = 0;
  for (long off = 0; off + kSeg <= kLoadSteps; off += kSeg / 2, ++nseg) {
    for (int j = 0; j < d; ++j) {
      for (int t = 0; t < kSeg; ++t) {
        segf[j][t] = window[t] * (xi[j][off + t] - mean[j]);
      }
      mfdr::dft(segf[j]);
    }
    for (int k = 0; k < kSeg; ++k) {
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          // S_ij(theta) = sum_k E[xi_i(t) xi_j(t+k)] e^{-j theta k},
          // whose periodogram analogue is conj(X_i) X_j.
          mc[k](i, j) += std::conj(segf[i][k]) * segf[j][k];
        }
      }
    }
  }
  for (int k = 0; k < kSeg; ++k) mc[k] /= double(nseg) * wpow;

  // Entrywise relative error averaged over the frequency grid (DC bin
  // excluded: mean removal distorts it).
  const mfdr::Zeta1Model zmodel{kRho, sigma_z2};
  mfdr::Matrix num = mfdr::Matrix::Zero(d, d);
  mfdr::Matrix den = mfdr::Matrix::Zero(d, d);
  for (int k = 1; k < kSeg; ++k) {
    const double theta = kTwoPi * double(k) / double(kSeg);
    const mfdr::MatrixXc an = mfdr::psd_bzeta(family, zmodel, kM, theta);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        num(i, j) += std::abs(mc[k](i, j) - an(i, j));
        den(i, j) += std::abs(an(i, j));
      }
    }
  }
  const double worst = (num.array() / den.array()).maxCoeff();
  const double secs = seconds_since(start);
  const bool ok = worst <= 0.10 && secs < 120.0;
  report(2, ok,
         "broadcast-disturbance cross-PSD matches a joint simulation",
         fmt("worst entry mean rel. err = %.3f (<= 0.10), %.1f s (< 120 s)",
             worst, secs));
}

struct ClosedLoopRuns {
  mfdr::SimTrace nominal_on;    // opt-out active
  mfdr::SimTrace nominal_off;   // opt-out disabled
  mfdr::SimTrace stress;        // 2.2x reference, opt-out active
  std::vector<double> reference;
  long burn = 0;                // grid steps before QoS statistics settle
  double secs_nominal_on = 0.0;
};

ClosedLoopRuns run_closed_loops() {
  ClosedLoopRuns out;
  out.reference = nominal_reference();
  const auto family = mfdr::build_nominal_pool_model(48, 1.0 / 24.0);
  mfdr::SimConfig config;  // N = 9996, PI gains 120/3, opt-out on
  out.burn = config.burn_in_updates() * config.m;

  auto t0 = Clock::now();
  out.nominal_on = mfdr::run_closed_loop(config, out.reference, family);
  out.secs_nominal_on = seconds_since(t0);

  config.opt_out_enabled = false;
  out.nominal_off = mfdr::run_closed_loop(config, out.reference, family);

  config.opt_out_enabled = true;
  config.reference_scale = 2.2;
  out.stress = mfdr::run_closed_loop(config, out.reference, family);
  return out;
}

void check_3_mean_qos_prediction(const ClosedLoopRuns& runs) {
  const mfdr::SimConfig config;
  const auto two_r_beta =
      mfdr::predict_mean_qos(runs.nominal_on.r, config.beta, config.m);
  double dev = 0.0, peak = 0.0;
  for (std::size_t t = runs.burn; t < two_r_beta.size(); ++t) {
    dev = std::max(dev, std::abs(runs.nominal_on.qos_mean[t] - two_r_beta[t]));
    peak = std::max(peak, std::abs(two_r_beta[t]));
  }
  const bool ok = dev <= 0.05 * peak && runs.secs_nominal_on < 180.0;
  report(3, ok, "population-mean QoS follows the discounted-reference predictor",
         fmt("max dev = %.3f vs 5%% of peak %.2f = %.3f, run %.1f s (< 180 s)",
             dev, peak, 0.05 * peak, runs.secs_nominal_on));
}

void check_4_hard_bounds(const ClosedLoopRuns& runs) {
  const long v = runs.nominal_on.bound_violations;
  report(4, v == 0, "opt-out keeps every load inside the QoS bounds",
         fmt("violations = %ld (require 0) across all loads and updates", v));
}

void check_5_optout_fraction(const ClosedLoopRuns& runs) {
  // Every load starts with a zero QoS balance, so the cohort that never
  // switches during the first ~20 updates reaches the bound in lockstep
  // and produces a one-off override burst early in the burn-in. The
  // steady-state claim is judged on the post-burn-in window, like every
  // other QoS statistic; the full-run maximum is reported alongside.
  double worst = 0.0, worst_full = 0.0;
  const auto& f = runs.nominal_on.optout_fraction;
  for (std::size_t t = 0; t < f.size(); ++t) {
    worst_full = std::max(worst_full, f[t]);
    if (long(t) >= runs.burn) worst = std::max(worst, f[t]);
  }
  report(5, worst <= 0.05, "per-step opt-out fraction stays small",
         fmt("max fraction = %.4f (<= 0.05) at all post-burn-in steps; "
             "%.4f including the cold-start transient",
             worst, worst_full));
}

void check_6_variance_prediction(const ClosedLoopRuns& runs) {
  const mfdr::SimConfig config;
  const auto family = mfdr::build_nominal_pool_model(48, 1.0 / 24.0);
  const auto& trace = runs.nominal_off;

  const mfdr::Zeta1Model zmodel = mfdr::fit_zeta_model(trace.zeta, config.m);
  const auto dpsd = mfdr::disturbance_psd(family, zmodel, config.m, 4096);
  mfdr::Vector ell(family.dim());
  for (int i = 0; i < family.dim(); ++i) {
    ell[i] = mfdr::ell_signed(mfdr::pool_state_from_index(i, config.i_max));
  }
  const double predicted =
      std::sqrt(mfdr::qos_variance(family, dpsd, ell, config.beta));

  double mean = 0.0;
  for (double v : trace.final_qos) mean += v;
  mean /= double(trace.final_qos.size());
  double var = 0.0;
  for (double v : trace.final_qos) var += (v - mean) * (v - mean);
  const double empirical = std::sqrt(var / double(trace.final_qos.size() - 1));

  const double rel = std::abs(predicted / empirical - 1.0);
  report(6, rel <= 0.20, "spectral pipeline predicts the cross-load QoS spread",
         fmt("predicted sigma = %.1f vs empirical %.1f, rel. err = %.3f (<= 0.20)",
             predicted, empirical, rel));
}

void check_7_tracking(const ClosedLoopRuns& runs) {
  const mfdr::SimConfig config;
  // Tracking error of the logged (post-update) aggregate deviation.
  std::vector<double> base_err, base_ref;
  for (std::size_t t = runs.burn; t < runs.nominal_on.r.size(); ++t) {
    base_err.push_back(runs.nominal_on.r[t] - runs.nominal_on.y_tilde[t]);
    base_ref.push_back(runs.nominal_on.r[t]);
  }
  const double nrmse = rms(base_err) / rms(base_ref);

  // Stress case: errors while the predicted mean QoS sits beyond the
  // upper bound, against the nominal-run error floor.
  const auto two_r_beta =
      mfdr::predict_mean_qos(runs.stress.r, config.beta, config.m);
  std::vector<double> exc_err;
  for (std::size_t t = runs.burn; t < runs.stress.r.size(); ++t) {
    if (two_r_beta[t] > config.bounds.upper) {
      exc_err.push_back(runs.stress.r[t] - runs.stress.y_tilde[t]);
    }
  }
  const double ratio =
      exc_err.empty() ? 0.0 : rms(exc_err) / rms(base_err);
  const bool ok = nrmse <= 0.05 && ratio > 3.0;
  report(7, ok, "tracking is tight nominally and degrades under saturation",
         fmt("NRMSE = %.4f (<= 0.05); stress/base error ratio = %.1f (> 3, "
             "%zu saturated steps)",
             nrmse, ratio, exc_err.size()));
}

void check_8_arma_round_trip() {
  const auto truth = mfdr::bpa_arma_coeffs();
  mfdr::RngStream rng(7, 0);
  const auto samples = mfdr::generate_regulation(truth, 100'000, rng);
  const auto fit = mfdr::fit_arma_els(samples).coeffs;
  const double da1 = std::abs(fit.a1 - truth.a1);
  const double da2 = std::abs(fit.a2 - truth.a2);
  const double db1 = std::abs(fit.b1 - truth.b1);
  const double ds = std::abs(fit.sigma_w2 / truth.sigma_w2 - 1.0);
  const bool ok = da1 <= 0.03 && da2 <= 0.03 && db1 <= 0.03 && ds <= 0.10;
  report(8, ok, "extended least squares recovers the regulation model",
         fmt("|da1| = %.4f, |da2| = %.4f, |db1| = %.4f (<= 0.03); "
             "sigma_w2 rel. err = %.3f (<= 0.10)",
             da1, da2, db1, ds));
}

void check_9_window_qos() {
  mfdr::SimConfig config;
  config.gains = {0.0, 0.0};      // zeta stays identically zero
  config.opt_out_enabled = false; // natural, uncontrolled behaviour
  const auto family = mfdr::build_nominal_pool_model(48, 1.0 / 24.0);
  const std::vector<double> r(kGridSteps, 0.0);
  const auto trace = mfdr::run_closed_loop(config, r, family);

  const auto& hours = trace.final_window_qos_hours;
  const double n = double(hours.size());
  double mean = 0.0;
  for (double v : hours) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : hours) {
    const double c = v - mean;
    m2 += c * c;
    m3 += c * c * c;
  }
  m2 /= n;
  m3 /= n;
  const double skew = m3 / std::pow(m2, 1.5);
  const bool ok = std::abs(mean - 78.5) <= 1.5 && std::abs(skew) < 0.2;
  report(9, ok, "uncontrolled moving-window on-time is centred and symmetric",
         fmt("mean = %.2f h (78.5 +- 1.5), skewness = %.3f (|.| < 0.2)",
             mean, skew));
}

void check_10_linearization_order() {
  const auto family = mfdr::build_nominal_pool_model(48, 1.0 / 24.0);
  const auto model = mfdr::linearize(family);

  auto error_at = [&](double amp) {
    mfdr::Distribution mu = family.pi0;
    mfdr::Vector phi = mfdr::Vector::Zero(model.dim());
    constexpr int kSteps = 800;
    std::vector<double> err;
    for (int t = 0; t < kSteps; ++t) {
      const double zeta = amp * std::sin(kTwoPi * double(t) / 64.0);
      mu = mfdr::meanfield_step(mu, zeta, family);
      phi = model.a * phi + model.b * zeta;
      const double y_nl = mfdr::aggregate_output(mu, family);
      const double y_lin = family.ybar0 + model.c * phi;
      if (t >= kSteps / 2) err.push_back(y_nl - y_lin);
    }
    return rms(err);
  };

  const double e_full = error_at(0.2);
  const double e_half = error_at(0.1);
  const double ratio = e_full / e_half;
  report(10, ratio >= 3.5, "linear model error shrinks super-linearly",
         fmt("err(0.2)/err(0.1) = %.2f (>= 3.5)", ratio));
}

void check_11_meanfield_gap(const ClosedLoopRuns& runs) {
  const auto family = mfdr::build_nominal_pool_model(48, 1.0 / 24.0);
  const std::vector<double>& zeta = runs.nominal_off.zeta;

  auto gap_for = [&](int n_loads) {
    mfdr::SimConfig config;
    config.n_loads = n_loads;
    config.opt_out_enabled = false;
    config.seed = 11;
    const auto y_mf = mfdr::run_meanfield_trace(config, zeta, family);
    mfdr::LoadPopulation pop(config, family);
    std::vector<double> diff;
    for (std::size_t t = 0; t < zeta.size(); ++t) {
      const double y = pop.step(zeta[t], long(t), family).y;
      if (long(t) >= runs.burn) diff.push_back(y - y_mf[t]);
    }
    return rms(diff);
  };

  const double gap_small = gap_for(3996);
  const double gap_large = gap_for(15984);
  const double ratio = gap_small / gap_large;
  const bool ok = ratio >= 1.6 && ratio <= 2.6;
  report(11, ok, "finite-population gap shrinks like one over root N",
         fmt("gap(3996) = %.5f, gap(15984) = %.5f, ratio = %.2f in [1.6, 2.6]",
             gap_small, gap_large, ratio));
}

}  // namespace

int main() {
  check_1_innovation_covariance();
  check_2_broadcast_cross_psd();
  const ClosedLoopRuns runs = run_closed_loops();
  check_3_mean_qos_prediction(runs);
  check_4_hard_bounds(runs);
  check_5_optout_fraction(runs);
  check_6_variance_prediction(runs);
  check_7_tracking(runs);
  check_8_arma_round_trip();
  check_9_window_qos();
  check_10_linearization_order();
  check_11_meanfield_gap(runs);
  std::printf("%d of 11 checks passed\n", 11 - g_failures);
  return g_failures;
}
