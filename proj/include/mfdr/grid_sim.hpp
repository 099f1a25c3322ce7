#pragma once

#include <cstdint>
#include <vector>

#include "mfdr/load_model.hpp"
#include "mfdr/qos.hpp"

namespace mfdr {

struct PiGains {
  double kp = 0.0;
  double ki = 0.0;
};

struct SimConfig {
  int n_loads = 9996;            // must be divisible by m
  int m = 6;                     // super-sampling factor
  double grid_period_minutes = 5.0;
  int i_max = 48;
  double switch_prob = 1.0 / 24.0;
  double beta = 0.9975;
  QoSBounds bounds{};
  PiGains gains{120.0, 3.0};
  double reference_scale = 1.0;
  std::uint64_t seed = 1;
  bool opt_out_enabled = true;
  double zeta_clamp = 50.0;
  int n_workers = 1;
  int tf_window = 314;           // moving-window QoS horizon, load slots
  double hist_bin_width = 1.0;
  bool collect_qos_samples = false;

  double load_period_minutes() const { return grid_period_minutes * m; }
  double tau_s_hours() const { return load_period_minutes() / 60.0; }
  // Discounted-QoS relaxation: two half-lives, in load updates.
  long burn_in_updates() const;
  void validate() const;
};

// PI error feedback with an anti-windup clamp on the broadcast signal.
class PiController {
 public:
  PiController(PiGains gains, double clamp) : gains_(gains), clamp_(clamp) {}

  struct Output {
    double zeta;
    bool clamped;
  };
  Output step(double error);

  double integrator() const { return integ_; }

 private:
  PiGains gains_;
  double clamp_;
  double integ_ = 0.0;
};

// Applies the opt-out rule: the proposed successor is kept when the
// resulting discounted QoS stays within bounds, otherwise the load takes
// the legal successor with the opposite mode. Aborts if neither
// successor restores the bound (impossible under valid bounds).
PoolState opt_out_override(const PoolState& state, const PoolState& proposed,
                           const QoSAccumulator& acc, const QoSBounds& bounds,
                           int i_max);

struct StepResult {
  double y = 0.0;          // aggregate output after the step
  long optout_count = 0;   // overrides applied this step
};

// N load replicas in m staggered classes. Load i belongs to class i % m
// and transitions exactly at grid times t with t % m == i % m.
class LoadPopulation {
 public:
  LoadPopulation(const SimConfig& config, const ControlledFamily& family);

  // Advances the class scheduled at grid time t; all other loads hold
  // their state and QoS. Deterministic for any worker count.
  StepResult step(double zeta, long t, const ControlledFamily& family);

  double aggregate() const {
    return static_cast<double>(on_count_) / config_.n_loads;
  }
  double qos_mean() const { return qos_sum_ / config_.n_loads; }
  const std::vector<PoolState>& states() const { return states_; }
  const std::vector<double>& qos() const { return qos_; }
  // On-time over the trailing tf_window + 1 load slots, in hours.
  std::vector<double> window_qos_hours() const;
  long bound_violations() const { return violations_; }

 private:
  SimConfig config_;
  std::vector<PoolState> states_;
  std::vector<double> qos_;
  std::vector<std::uint8_t> window_ring_;  // trailing on/off samples
  std::vector<int> window_sum_;
  int window_len_ = 0;
  long on_count_ = 0;
  double qos_sum_ = 0.0;
  long violations_ = 0;

  struct BlockResult {
    long d_on = 0;
    long overrides = 0;
    long violations = 0;
    double d_qos = 0.0;
  };
  BlockResult step_block(long lo, long hi, long t, long counter,
                         const std::vector<double>& rows);
};

struct SimTrace {
  std::vector<double> y;             // y_t^N, logged after the class update
  std::vector<double> y_tilde;       // y_t - ybar0
  std::vector<double> r;             // scaled reference actually tracked
  std::vector<double> e;             // r_t - y_tilde (pre-update measurement)
  std::vector<double> zeta;
  std::vector<std::uint8_t> zeta_clamped;
  std::vector<double> optout_fraction;  // overrides this step / N
  std::vector<double> qos_mean;         // population mean discounted QoS
  std::vector<double> final_qos;        // terminal per-load snapshot
  std::vector<double> final_window_qos_hours;
  std::vector<float> qos_samples;       // pooled post-burn-in updates
  long bound_violations = 0;
};

// Full feedback loop over the given grid-time reference (scaled by
// config.reference_scale). Throws on sustained controller divergence.
SimTrace run_closed_loop(const SimConfig& config,
                         std::span<const double> reference,
                         const ControlledFamily& family);

// Deterministic twin of the population: m class distributions stepped on
// the same schedule under a prescribed broadcast trace. Returns y_t.
std::vector<double> run_meanfield_trace(const SimConfig& config,
                                        std::span<const double> zeta_trace,
                                        const ControlledFamily& family);

}  // namespace mfdr
