#include "mfdr/qos.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mfdr {

void QoSBounds::validate(double beta) const {
  if (!(lower < 0.0) || !(upper > 0.0)) {
    throw std::invalid_argument("QoS bounds must straddle zero");
  }
  if (!(beta > 0.0) || !(beta < 1.0)) {
    throw std::invalid_argument("discount must lie in (0,1)");
  }
  const double reach = 1.0 / (1.0 - beta);
  if (lower <= -reach || upper >= reach) {
    throw std::invalid_argument("QoS bounds must lie inside (-1/(1-beta), 1/(1-beta))");
  }
}

QoSAccumulator update_discounted(const QoSAccumulator& acc, double ell_value) {
  return QoSAccumulator{ell_value + acc.beta * acc.value, acc.beta};
}

double moving_window_qos(std::span<const double> ell_history, int t_f) {
  if (t_f < 0) throw std::invalid_argument("window length must be nonnegative");
  const std::size_t need = static_cast<std::size_t>(t_f) + 1;
  if (ell_history.size() < need) {
    throw std::invalid_argument("history shorter than QoS window");
  }
  double sum = 0.0;
  for (std::size_t i = ell_history.size() - need; i < ell_history.size(); ++i) {
    sum += ell_history[i];
  }
  return sum;
}

double discounted_reference(std::span<const double> r, double beta, int m,
                            long t) {
  if (m < 1) throw std::invalid_argument("super-sampling factor must be >= 1");
  if (t < 0 || t >= static_cast<long>(r.size())) {
    throw std::out_of_range("grid time outside reference");
  }
  const long tau = t / m;
  const long j = t % m;
  double sum = 0.0;
  double w = 1.0;
  for (long k = 0; k <= tau; ++k) {
    sum += w * r[m * (tau - k) + j];
    w *= beta;
  }
  return sum;
}

std::vector<double> predict_mean_qos(std::span<const double> r, double beta,
                                     int m) {
  if (m < 1) throw std::invalid_argument("super-sampling factor must be >= 1");
  std::vector<double> out(r.size());
  // R_t = r_t + beta R_{t-m}; equivalent to the direct sub-sampled sum.
  for (long t = 0; t < static_cast<long>(r.size()); ++t) {
    const double prev = t >= m ? out[t - m] / 2.0 : 0.0;
    out[t] = 2.0 * (r[t] + beta * prev);
  }
  return out;
}

std::vector<HistogramBin> make_histogram(std::span<const double> values,
                                         double bin_width) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("bin width must be positive");
  if (values.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const long lo = static_cast<long>(std::floor(*lo_it / bin_width));
  const long hi = static_cast<long>(std::floor(*hi_it / bin_width));
  std::vector<HistogramBin> bins(static_cast<std::size_t>(hi - lo + 1));
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b] = {(lo + static_cast<long>(b)) * bin_width,
               (lo + static_cast<long>(b) + 1) * bin_width, 0};
  }
  for (double v : values) {
    long b = static_cast<long>(std::floor(v / bin_width)) - lo;
    b = std::clamp(b, 0L, static_cast<long>(bins.size()) - 1);
    ++bins[static_cast<std::size_t>(b)].count;
  }
  return bins;
}

void write_histogram_csv(const std::vector<HistogramBin>& bins,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "bin_left,bin_right,count\n";
  out.precision(12);
  for (const auto& b : bins) {
    out << b.left << ',' << b.right << ',' << b.count << '\n';
  }
}

}  // namespace mfdr
