#pragma once

#include <span>
#include <string>
#include <vector>

#include "mfdr/load_model.hpp"

namespace mfdr {

// Discounted per-load QoS state: L_tau = ell(X_tau) + beta * L_{tau-1}.
struct QoSAccumulator {
  double value = 0.0;
  double beta = 0.9975;
};

struct QoSBounds {
  double lower = -20.0;
  double upper = 20.0;

  // Feasibility of the opt-out override requires b- < 0 < b+ and both
  // bounds strictly inside (-1/(1-beta), 1/(1-beta)).
  void validate(double beta) const;
  bool contains(double v) const { return v >= lower && v <= upper; }
};

// Signed cleaning balance: +1 while operating, -1 while off.
inline double ell_signed(const PoolState& s) { return s.on ? 1.0 : -1.0; }

// Operation time accumulated per sampling slot.
inline double ell_ontime(const PoolState& s, double tau_s_hours) {
  return s.on ? tau_s_hours : 0.0;
}

QoSAccumulator update_discounted(const QoSAccumulator& acc, double ell_value);

// Sum of the last t_f + 1 entries. Throws when the history is shorter.
double moving_window_qos(std::span<const double> ell_history, int t_f);

// R_t^beta = sum_{k=0}^{tau} beta^k r_{m(tau-k)+j} with t = m*tau + j.
double discounted_reference(std::span<const double> r, double beta, int m,
                            long t);

// 2 R_t^beta at every grid instant: the class-averaged mean QoS
// predictor under perfect tracking for the symmetric model
// (ybar0 = 1/2).
std::vector<double> predict_mean_qos(std::span<const double> r, double beta,
                                     int m);

struct HistogramBin {
  double left;
  double right;
  long count;
};

std::vector<HistogramBin> make_histogram(std::span<const double> values,
                                         double bin_width);

// CSV with columns bin_left, bin_right, count.
void write_histogram_csv(const std::vector<HistogramBin>& bins,
                         const std::string& path);

}  // namespace mfdr
