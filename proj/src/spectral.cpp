#include "mfdr/spectral.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mfdr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normal_draw(RngStream& rng) {
  // Box-Muller; consumes two counter positions.
  const double u1 = std::max(rng.next_double(), 0x1.0p-64);
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

bool ARMACoeffs::stable() const {
  // Poles are the roots of z^2 + a1 z + a2.
  const Complex disc = std::sqrt(Complex(a1 * a1 - 4.0 * a2, 0.0));
  const Complex r1 = (-a1 + disc) / 2.0;
  const Complex r2 = (-a1 - disc) / 2.0;
  return std::abs(r1) < 1.0 && std::abs(r2) < 1.0 && sigma_w2 > 0.0;
}

double ARMACoeffs::transfer_gain2(double theta) const {
  const Complex z1 = std::polar(1.0, -theta);
  const Complex num = 1.0 + b1 * z1;
  const Complex den = 1.0 + a1 * z1 + a2 * z1 * z1;
  return std::norm(num) / std::norm(den);
}

double ARMACoeffs::stationary_variance() const {
  // Midpoint quadrature of the rational spectrum; geometric convergence
  // for smooth periodic integrands.
  constexpr int n = 1 << 14;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += transfer_gain2(kTwoPi * (i + 0.5) / n);
  }
  return sigma_w2 * acc / n;
}

ARMACoeffs bpa_arma_coeffs() { return ARMACoeffs{-0.9009, 0.0365, 0.0859, 0.005}; }

std::vector<double> generate_regulation(const ARMACoeffs& coeffs, long n,
                                        RngStream& rng) {
  if (!coeffs.stable()) {
    throw std::invalid_argument("unstable ARMA coefficients");
  }
  if (n <= 0) throw std::invalid_argument("length must be positive");
  const double sw = std::sqrt(coeffs.sigma_w2);
  const long warmup = 1000;
  std::vector<double> r(static_cast<std::size_t>(n));
  double r1 = 0.0, r2 = 0.0, w1 = 0.0;
  for (long t = -warmup; t < n; ++t) {
    const double w = sw * normal_draw(rng);
    const double rt = -coeffs.a1 * r1 - coeffs.a2 * r2 + w + coeffs.b1 * w1;
    r2 = r1;
    r1 = rt;
    w1 = w;
    if (t >= 0) r[static_cast<std::size_t>(t)] = rt;
  }
  return r;
}

ElsResult fit_arma_els(std::span<const double> samples) {
  const long n = static_cast<long>(samples.size());
  if (n < 1000) throw std::invalid_argument("ELS needs at least 1000 samples");
  double mean = 0.0, var = 0.0;
  for (double v : samples) mean += v;
  mean /= double(n);
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= double(n);
  if (var < 1e-14) {
    throw std::invalid_argument("degenerate regression: constant input");
  }
  const auto& y = samples;

  // Initialize from AR(2) ordinary least squares.
  Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
  Eigen::Vector2d atb = Eigen::Vector2d::Zero();
  for (long t = 2; t < n; ++t) {
    const Eigen::Vector2d x(-y[t - 1], -y[t - 2]);
    ata += x * x.transpose();
    atb += x * y[t];
  }
  Eigen::Vector2d ar = ata.ldlt().solve(atb);
  Eigen::Vector3d theta(ar[0], ar[1], 0.0);

  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  int sweep = 0;
  for (; sweep < 200; ++sweep) {
    // Reconstruct innovations with the current coefficients.
    w[0] = w[1] = 0.0;
    for (long t = 2; t < n; ++t) {
      w[t] = y[t] + theta[0] * y[t - 1] + theta[1] * y[t - 2] - theta[2] * w[t - 1];
    }
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (long t = 2; t < n; ++t) {
      const Eigen::Vector3d x(-y[t - 1], -y[t - 2], w[t - 1]);
      m += x * x.transpose();
      b += x * y[t];
    }
    const Eigen::Vector3d next = m.ldlt().solve(b);
    const double delta = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    if (delta < 1e-8) break;
  }
  if (sweep == 200) {
    std::ostringstream msg;
    msg << "ELS did not converge in 200 sweeps; last iterate [a1,a2,b1] = ["
        << theta[0] << ", " << theta[1] << ", " << theta[2] << "]";
    throw std::runtime_error(msg.str());
  }

  w[0] = w[1] = 0.0;
  double sw2 = 0.0;
  for (long t = 2; t < n; ++t) {
    w[t] = y[t] + theta[0] * y[t - 1] + theta[1] * y[t - 2] - theta[2] * w[t - 1];
    sw2 += w[t] * w[t];
  }
  sw2 /= double(n - 2);
  return ElsResult{ARMACoeffs{theta[0], theta[1], theta[2], sw2}, sweep + 1};
}

void dft(std::vector<Complex>& x) {
  const std::size_t n = x.size();
  if (n <= 1) return;
  if (!is_pow2(n)) {
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      Complex acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        acc += x[t] * std::polar(1.0, -kTwoPi * double(k * t % n) / double(n));
      }
      out[k] = acc;
    }
    x = std::move(out);
    return;
  }
  // Iterative radix-2 Cooley-Tukey with bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const Complex wl = std::polar(1.0, -kTwoPi / double(len));
    for (std::size_t i = 0; i < n; i += len) {
      Complex w = 1.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const Complex u = x[i + k];
        const Complex v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::vector<double> estimate_psd(std::span<const double> signal,
                                 int segment_length) {
  if (segment_length < 8) {
    throw std::invalid_argument("segment length must be at least 8");
  }
  const long n = static_cast<long>(signal.size());
  const long seg = segment_length;
  if (n < 2 * seg) {
    throw std::invalid_argument("signal shorter than two segments");
  }
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= double(n);

  std::vector<double> window(static_cast<std::size_t>(seg));
  double wpow = 0.0;
  for (long t = 0; t < seg; ++t) {
    window[t] = 0.5 * (1.0 - std::cos(kTwoPi * double(t) / double(seg)));
    wpow += window[t] * window[t];
  }

  std::vector<double> psd(static_cast<std::size_t>(seg), 0.0);
  const long hop = seg / 2;
  long nseg = 0;
  std::vector<Complex> buf(static_cast<std::size_t>(seg));
  for (long off = 0; off + seg <= n; off += hop, ++nseg) {
    for (long t = 0; t < seg; ++t) {
      buf[t] = window[t] * (signal[off + t] - mean);
    }
    dft(buf);
    for (long k = 0; k < seg; ++k) psd[k] += std::norm(buf[k]);
  }
  for (long k = 0; k < seg; ++k) psd[k] /= double(nseg) * wpow;
  return psd;
}

Matrix sigma_delta(const TransitionMatrix& p0, const Distribution& pi0) {
  p0.validate();
  const Eigen::RowVectorXd residual =
      pi0.w.transpose() * p0.p - pi0.w.transpose();
  if (residual.cwiseAbs().maxCoeff() > 1e-8) {
    throw std::invalid_argument("pi0 is not invariant for P0");
  }
  const Matrix pi = pi0.w.asDiagonal();
  return pi - p0.p.transpose() * pi * p0.p;
}

MatrixXc resolvent(const TransitionMatrix& p0, Complex varrho) {
  if (std::abs(varrho) >= 1.0) {
    throw std::invalid_argument("resolvent requires |rho| < 1");
  }
  const Eigen::Index d = p0.p.rows();
  MatrixXc m = -varrho * p0.p.cast<Complex>();
  m.diagonal().array() += 1.0;
  return m.partialPivLu().solve(MatrixXc::Identity(d, d));
}

MatrixXc psd_bzeta(const ControlledFamily& family, const Zeta1Model& zmodel,
                   int m, double theta) {
  if (m < 1) throw std::invalid_argument("super-sampling factor must be >= 1");
  if (zmodel.sigma_zeta2 < 0.0) {
    throw std::invalid_argument("negative zeta variance");
  }
  const Eigen::Index d = family.dim();
  if (zmodel.sigma_zeta2 == 0.0) return MatrixXc::Zero(d, d);
  if (zmodel.rho < 0.0 || zmodel.rho >= 1.0) {
    throw std::invalid_argument(
        "psd_bzeta requires an AR(1) pole in [0,1); refit the zeta model");
  }
  const Complex varrho =
      std::pow(zmodel.rho, m) * std::polar(1.0, -theta);
  const Matrix& e = family.derivative;
  const Vector& pi = family.pi0.w;

  MatrixXc lhs = -varrho * family.nominal.p.cast<Complex>();
  lhs.diagonal().array() += 1.0;
  const MatrixXc x = lhs.partialPivLu().solve(e.cast<Complex>());  // U_rho E
  const MatrixXc mkl = e.transpose().cast<Complex>() * (pi.asDiagonal() * x);
  const Matrix inner = e.transpose() * pi.asDiagonal() * e;
  return zmodel.sigma_zeta2 *
         (mkl + mkl.adjoint() - inner.cast<Complex>());
}

DisturbancePSD disturbance_psd(const ControlledFamily& family,
                               const Zeta1Model& zmodel, int m, int n_grid) {
  if (n_grid < 2 || n_grid % 2 != 0) {
    throw std::invalid_argument("theta grid size must be even and >= 2");
  }
  DisturbancePSD out;
  out.sigma_delta_part = sigma_delta(family.nominal, family.pi0);
  out.thetas.resize(static_cast<std::size_t>(n_grid));
  out.s.resize(static_cast<std::size_t>(n_grid));
  const MatrixXc flat = out.sigma_delta_part.cast<Complex>();
  for (int i = 0; i < n_grid; ++i) {
    out.thetas[i] = kTwoPi * (i + 0.5) / n_grid;
  }
  // Real-process symmetry: S(2pi - theta) = conj(S(theta)); the midpoint
  // grid pairs i with n-1-i.
  for (int i = 0; i < n_grid / 2; ++i) {
    MatrixXc s = psd_bzeta(family, zmodel, m, out.thetas[i]) + flat;
    Eigen::SelfAdjointEigenSolver<MatrixXc> eig(s, Eigen::EigenvaluesOnly);
    const double lambda_min = eig.eigenvalues().minCoeff();
    if (lambda_min < -1e-9) {
      std::ostringstream msg;
      msg << "disturbance PSD not positive semidefinite at theta = "
          << out.thetas[i] << " (min eigenvalue " << lambda_min << ")";
      throw std::runtime_error(msg.str());
    }
    out.s[i] = std::move(s);
    out.s[n_grid - 1 - i] = out.s[i].conjugate();
  }
  return out;
}

Zeta1Model fit_zeta_model(std::span<const double> zeta_trace, int m) {
  if (m < 1) throw std::invalid_argument("super-sampling factor must be >= 1");
  const long n = static_cast<long>(zeta_trace.size());
  if (n < 1000) {
    throw std::invalid_argument("zeta trace too short for a stable fit");
  }
  double mean = 0.0;
  for (double v : zeta_trace) mean += v;
  mean /= double(n);
  double var = 0.0, lag1 = 0.0;
  for (long t = 0; t < n; ++t) {
    const double x = zeta_trace[t] - mean;
    var += x * x;
    if (t + 1 < n) lag1 += x * (zeta_trace[t + 1] - mean);
  }
  var /= double(n);
  lag1 /= double(n - 1);
  Zeta1Model out;
  out.sigma_zeta2 = var;
  out.rho = var > 0.0 ? lag1 / var : 0.0;
  return out;
}

double qos_variance(const ControlledFamily& family, const DisturbancePSD& dpsd,
                    const Vector& ell_vector, double beta) {
  if (!(std::abs(beta) < 1.0)) {
    throw std::invalid_argument("discount must satisfy |beta| < 1");
  }
  if (dpsd.thetas.size() < 2048) {
    throw std::invalid_argument("theta grid too coarse for the QoS integral");
  }
  if (ell_vector.size() != family.dim()) {
    throw std::invalid_argument("ell vector dimension mismatch");
  }
  // Project out the pi0-stationary direction; 1^T phi = 0 along
  // trajectories, so shifting c by a multiple of 1 leaves c^T phi
  // unchanged while keeping H(theta) c bounded as theta -> 0.
  Vector c = ell_vector;
  c.array() -= family.pi0.w.dot(ell_vector);

  const std::size_t n = dpsd.thetas.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double theta = dpsd.thetas[i];
    const Complex z = std::polar(1.0, theta);
    MatrixXc lhs = -family.nominal.p.cast<Complex>();
    lhs.diagonal().array() += z;
    const Eigen::VectorXcd g = lhs.partialPivLu().solve(c.cast<Complex>());
    const Complex s_ell = g.transpose() * dpsd.s[i] * g.conjugate();
    const double discount_gain = 1.0 / std::norm(1.0 - beta * std::conj(z));
    acc += 2.0 * discount_gain * s_ell.real();  // mirrored point is equal
  }
  return acc / double(n);
}

std::vector<double> lowpass_reference(std::span<const double> r0, double cutoff) {
  if (!(cutoff > 0.0) || !(cutoff < 0.5)) {
    throw std::invalid_argument("cutoff must lie in (0, 0.5)");
  }
  std::vector<double> out(r0.size());
  if (r0.empty()) return out;
  const double pole = std::exp(-kTwoPi * cutoff);
  out[0] = r0[0];
  for (std::size_t t = 1; t < r0.size(); ++t) {
    out[t] = pole * out[t - 1] + (1.0 - pole) * r0[t];
  }
  return out;
}

}  // namespace mfdr
