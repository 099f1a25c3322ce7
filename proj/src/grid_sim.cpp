#include "mfdr/grid_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mfdr/meanfield.hpp"

namespace mfdr {

long SimConfig::burn_in_updates() const {
  const double half_life = std::log(0.5) / std::log(beta);
  return static_cast<long>(std::ceil(2.0 * half_life));
}

void SimConfig::validate() const {
  if (n_loads <= 0) throw std::invalid_argument("n_loads must be positive");
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (n_loads % m != 0) {
    throw std::invalid_argument("n_loads must be divisible by m (equal classes)");
  }
  if (!(grid_period_minutes > 0.0)) {
    throw std::invalid_argument("grid period must be positive");
  }
  bounds.validate(beta);
  if (!std::isfinite(gains.kp) || !std::isfinite(gains.ki) || gains.kp < 0.0 ||
      gains.ki < 0.0) {
    throw std::invalid_argument("controller gains must be finite and nonnegative");
  }
  if (!(zeta_clamp > 0.0)) throw std::invalid_argument("zeta clamp must be positive");
  if (n_workers < 1) throw std::invalid_argument("n_workers must be >= 1");
  if (tf_window < 0) throw std::invalid_argument("tf_window must be nonnegative");
}

PiController::Output PiController::step(double error) {
  const double integ_candidate = integ_ + error;
  const double raw = gains_.kp * error + gains_.ki * integ_candidate;
  if (std::abs(raw) > clamp_) {
    const double out = std::copysign(clamp_, raw);
    // Back-calculate the integrator so the command sits at the clamp
    // instead of winding up.
    if (gains_.ki != 0.0) integ_ = (out - gains_.kp * error) / gains_.ki;
    return {out, true};
  }
  integ_ = integ_candidate;
  return {raw, false};
}

PoolState opt_out_override(const PoolState& state, const PoolState& proposed,
                           const QoSAccumulator& acc, const QoSBounds& bounds,
                           int i_max) {
  const double candidate = acc.beta * acc.value + ell_signed(proposed);
  if (bounds.contains(candidate)) return proposed;
  const PoolState alternative =
      proposed.on == state.on
          ? PoolState{!state.on, 1}
          : PoolState{state.on, std::min(state.sojourn + 1, i_max)};
  const double alt_value = acc.beta * acc.value + ell_signed(alternative);
  if (!bounds.contains(alt_value)) {
    throw std::logic_error(
        "opt-out infeasible: both successors leave the QoS bounds");
  }
  return alternative;
}

LoadPopulation::LoadPopulation(const SimConfig& config,
                               const ControlledFamily& family)
    : config_(config) {
  config_.validate();
  if (family.i_max != config_.i_max) {
    throw std::invalid_argument("family does not match configured i_max");
  }
  const int n = config_.n_loads;
  states_.resize(n);
  qos_.assign(n, 0.0);
  window_len_ = config_.tf_window + 1;
  window_ring_.assign(static_cast<std::size_t>(n) * window_len_, 0);
  window_sum_.assign(n, 0);

  // Initial states drawn i.i.d. from pi0 at counter 0 of each stream.
  std::vector<double> cdf(family.dim());
  double acc = 0.0;
  for (int j = 0; j < family.dim(); ++j) {
    acc += family.pi0.w[j];
    cdf[j] = acc;
  }
  for (int i = 0; i < n; ++i) {
    const double u = RngStream::uniform_at(config_.seed, i, 0);
    const int idx = static_cast<int>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    states_[i] = pool_state_from_index(std::min(idx, family.dim() - 1),
                                       config_.i_max);
    if (states_[i].on) ++on_count_;
    const std::uint8_t on = states_[i].on ? 1 : 0;
    for (int k = 0; k < window_len_; ++k) {
      window_ring_[static_cast<std::size_t>(i) * window_len_ + k] = on;
    }
    window_sum_[i] = on * window_len_;
  }
}

LoadPopulation::BlockResult LoadPopulation::step_block(
    long lo, long hi, long t, long counter, const std::vector<double>& rows) {
  const int m = config_.m;
  const int cls = static_cast<int>(t % m);
  const int d = 2 * config_.i_max;
  const bool opt_out = config_.opt_out_enabled;
  BlockResult res;
  for (long pos = lo; pos < hi; ++pos) {
    const long i = cls + m * pos;
    const PoolState cur = states_[i];
    const double u = RngStream::uniform_at(config_.seed, i, counter);
    const int row = pool_state_index(cur, config_.i_max);
    PoolState next = pool_state_from_index(
        sample_index({rows.data() + row * d, static_cast<std::size_t>(d)}, u),
        config_.i_max);
    if (opt_out) {
      const PoolState granted = opt_out_override(
          cur, next, QoSAccumulator{qos_[i], config_.beta}, config_.bounds,
          config_.i_max);
      if (granted.on != next.on) ++res.overrides;
      next = granted;
    }
    const double new_qos = config_.beta * qos_[i] + ell_signed(next);
    if (opt_out && !config_.bounds.contains(new_qos)) ++res.violations;
    res.d_qos += new_qos - qos_[i];
    res.d_on += (next.on ? 1 : 0) - (cur.on ? 1 : 0);
    qos_[i] = new_qos;
    states_[i] = next;

    const std::size_t slot =
        static_cast<std::size_t>(i) * window_len_ + (counter % window_len_);
    const std::uint8_t on = next.on ? 1 : 0;
    window_sum_[i] += on - window_ring_[slot];
    window_ring_[slot] = on;
  }
  return res;
}

StepResult LoadPopulation::step(double zeta, long t,
                                const ControlledFamily& family) {
  const int m = config_.m;
  const long class_size = config_.n_loads / m;
  const long counter = t / m + 1;
  const int d = family.dim();

  // Row-major copy of P_zeta so block workers read contiguous rows.
  const TransitionMatrix p = tilt_transition(family, zeta);
  std::vector<double> rows(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) rows[static_cast<std::size_t>(i) * d + j] = p.p(i, j);
  }

  // Fixed-size blocks, reduced in block order: results are bit-identical
  // for any worker count.
  constexpr long kBlock = 4096;
  const long n_blocks = (class_size + kBlock - 1) / kBlock;
  std::vector<BlockResult> results(static_cast<std::size_t>(n_blocks));
  auto run_blocks = [&](long first_block, long stride) {
    for (long b = first_block; b < n_blocks; b += stride) {
      const long lo = b * kBlock;
      const long hi = std::min(lo + kBlock, class_size);
      results[b] = step_block(lo, hi, t, counter, rows);
    }
  };
  if (config_.n_workers > 1 && n_blocks > 1) {
    std::vector<std::thread> workers;
    const long w = std::min<long>(config_.n_workers, n_blocks);
    workers.reserve(w);
    for (long k = 0; k < w; ++k) workers.emplace_back(run_blocks, k, w);
    for (auto& th : workers) th.join();
  } else {
    run_blocks(0, 1);
  }

  StepResult out;
  for (const auto& res : results) {
    on_count_ += res.d_on;
    qos_sum_ += res.d_qos;
    out.optout_count += res.overrides;
    violations_ += res.violations;
  }
  out.y = aggregate();
  return out;
}

std::vector<double> LoadPopulation::window_qos_hours() const {
  std::vector<double> out(static_cast<std::size_t>(config_.n_loads));
  const double tau_s = config_.tau_s_hours();
  for (int i = 0; i < config_.n_loads; ++i) {
    out[i] = tau_s * window_sum_[i];
  }
  return out;
}

SimTrace run_closed_loop(const SimConfig& config,
                         std::span<const double> reference,
                         const ControlledFamily& family) {
  config.validate();
  const long horizon = static_cast<long>(reference.size());
  if (horizon == 0) throw std::invalid_argument("empty reference");

  LoadPopulation pop(config, family);
  PiController controller(config.gains, config.zeta_clamp);
  SimTrace trace;
  trace.y.reserve(horizon);
  trace.y_tilde.reserve(horizon);
  trace.r.reserve(horizon);
  trace.e.reserve(horizon);
  trace.zeta.reserve(horizon);
  trace.zeta_clamped.reserve(horizon);
  trace.optout_fraction.reserve(horizon);
  trace.qos_mean.reserve(horizon);

  const long burn_in_grid = config.burn_in_updates() * config.m;
  int divergence_run = 0;
  for (long t = 0; t < horizon; ++t) {
    const double r_t = config.reference_scale * reference[t];
    const double e_t = r_t - (pop.aggregate() - family.ybar0);
    if (std::abs(e_t) > 1.0) {
      if (++divergence_run >= 100) {
        std::ostringstream msg;
        msg << "controller divergence: |e| > 1 for 100 consecutive steps "
               "(t = " << t << ", e = " << e_t << ")";
        throw std::runtime_error(msg.str());
      }
    } else {
      divergence_run = 0;
    }
    const PiController::Output ctl = controller.step(e_t);
    const StepResult step = pop.step(ctl.zeta, t, family);

    trace.y.push_back(step.y);
    trace.y_tilde.push_back(step.y - family.ybar0);
    trace.r.push_back(r_t);
    trace.e.push_back(e_t);
    trace.zeta.push_back(ctl.zeta);
    trace.zeta_clamped.push_back(ctl.clamped ? 1 : 0);
    trace.optout_fraction.push_back(static_cast<double>(step.optout_count) /
                                    config.n_loads);
    trace.qos_mean.push_back(pop.qos_mean());

    if (config.collect_qos_samples && t >= burn_in_grid) {
      const int cls = static_cast<int>(t % config.m);
      for (long i = cls; i < config.n_loads; i += config.m) {
        trace.qos_samples.push_back(static_cast<float>(pop.qos()[i]));
      }
    }
  }
  trace.final_qos = pop.qos();
  trace.final_window_qos_hours = pop.window_qos_hours();
  trace.bound_violations = pop.bound_violations();
  return trace;
}

std::vector<double> run_meanfield_trace(const SimConfig& config,
                                        std::span<const double> zeta_trace,
                                        const ControlledFamily& family) {
  config.validate();
  std::vector<Distribution> classes(static_cast<std::size_t>(config.m),
                                    family.pi0);
  std::vector<double> y(zeta_trace.size());
  for (long t = 0; t < static_cast<long>(zeta_trace.size()); ++t) {
    const int cls = static_cast<int>(t % config.m);
    const TransitionMatrix p = tilt_transition(family, zeta_trace[t]);
    classes[cls].w = (classes[cls].w.transpose() * p.p).transpose();
    double acc = 0.0;
    for (const auto& mu : classes) acc += mu.w.dot(family.utility);
    y[t] = acc / config.m;
  }
  return y;
}

}  // namespace mfdr
