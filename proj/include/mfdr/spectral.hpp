#pragma once

#include <complex>
#include <vector>

#include "mfdr/load_model.hpp"
#include "mfdr/rng.hpp"

namespace mfdr {

using Complex = std::complex<double>;
using MatrixXc = Eigen::MatrixXcd;

// ARMA(2,1) regulation-signal model:
//   r_t + a1 r_{t-1} + a2 r_{t-2} = w_t + b1 w_{t-1},  w ~ N(0, sigma_w2).
struct ARMACoeffs {
  double a1 = 0.0;
  double a2 = 0.0;
  double b1 = 0.0;
  double sigma_w2 = 1.0;

  // AR roots strictly inside the unit circle.
  bool stable() const;
  // |G_wr(e^{j theta})|^2 with G_wr(z) = (1 + b1 z^-1)/(1 + a1 z^-1 + a2 z^-2).
  double transfer_gain2(double theta) const;
  // Stationary output variance (spectral integral of sigma_w2 * |G_wr|^2).
  double stationary_variance() const;
};

// Coefficients measured on the Bonneville regulation trace.
ARMACoeffs bpa_arma_coeffs();

// AR(1) summary of the broadcast signal at the grid timescale.
struct Zeta1Model {
  double rho = 0.0;
  double sigma_zeta2 = 0.0;
};

// theta-gridded disturbance spectrum S(theta) = S_Bzeta(theta) + Sigma_Delta.
struct DisturbancePSD {
  std::vector<double> thetas;    // uniform midpoint grid on (0, 2*pi)
  std::vector<MatrixXc> s;       // Hermitian PSD matrix per grid point
  Matrix sigma_delta_part;       // the flat component
};

std::vector<double> generate_regulation(const ARMACoeffs& coeffs, long n,
                                        RngStream& rng);

struct ElsResult {
  ARMACoeffs coeffs;
  int sweeps = 0;
};

// Extended least squares for ARMA(2,1): regression on lagged outputs and
// reconstructed innovations, iterated to 1e-8 on the coefficients
// (at most 200 sweeps).
ElsResult fit_arma_els(std::span<const double> samples);

// Welch-averaged periodogram: Hann window, 50% overlap, full-circle grid
// of segment_length bins. Normalized so the grid mean equals the signal
// power, i.e. (1/2pi) * integral S = variance.
std::vector<double> estimate_psd(std::span<const double> signal,
                                 int segment_length);

// Sigma_Delta = Pi - P0^T Pi P0 with Pi = diag(pi0).
Matrix sigma_delta(const TransitionMatrix& p0, const Distribution& pi0);

// U_rho = (I - rho P0)^{-1}, |rho| < 1.
MatrixXc resolvent(const TransitionMatrix& p0, Complex varrho);

// S_Bzeta(theta) entries per the resolvent formula, with
// rho_sub = rho^m e^{-j theta} accounting for sub-sampling the broadcast
// at the load period.
MatrixXc psd_bzeta(const ControlledFamily& family, const Zeta1Model& zmodel,
                   int m, double theta);

// Full disturbance spectrum on an n_grid midpoint lattice; verifies that
// each point is Hermitian positive semidefinite (eigenvalue floor -1e-9).
DisturbancePSD disturbance_psd(const ControlledFamily& family,
                               const Zeta1Model& zmodel, int m, int n_grid);

// Lag-1 autocorrelation + variance fit of a closed-loop zeta trace.
Zeta1Model fit_zeta_model(std::span<const double> zeta_trace, int m);

// sigma_L^2 = (1/2pi) int |1/(1-beta e^{-j theta})|^2 c^T H S H^H c dtheta
// with H(theta) = (e^{j theta} I - P0^T)^{-1} and c the ell vector, with
// the pi0-direction of c projected out so H c stays bounded near theta=0.
double qos_variance(const ControlledFamily& family, const DisturbancePSD& dpsd,
                    const Vector& ell_vector, double beta);

// First-order low-pass with unity DC gain; cutoff is the pole frequency
// in cycles per sample, 0 < cutoff < 0.5.
std::vector<double> lowpass_reference(std::span<const double> r0, double cutoff);

// In-place radix-2 / direct DFT helper shared by the Welch estimators.
void dft(std::vector<Complex>& x);

}  // namespace mfdr
