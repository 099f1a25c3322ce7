#pragma once

#include <complex>

#include "mfdr/load_model.hpp"

namespace mfdr {

// Linearization of the mean-field recursion around (pi0, zeta = 0):
//   phi_{t+1} = A phi_t + B zeta_t,   gamma_t = C phi_t
// with A = P0^T, B_j = sum_x pi0(x) E(x, x^j), C_i = U(x^i).
struct LinearModel {
  Matrix a;
  Vector b;
  Eigen::RowVectorXd c;

  int dim() const { return static_cast<int>(a.rows()); }
};

// One step of mu_{t+1} = mu_t P_zeta.
Distribution meanfield_step(const Distribution& mu, double zeta,
                            const ControlledFamily& family);

// y = <mu, U>.
double aggregate_output(const Distribution& mu, const ControlledFamily& family);

LinearModel linearize(const ControlledFamily& family);

// G_p(e^{j theta}) = C (e^{j theta} I - A)^{-1} B. Throws when
// e^{j theta} is (numerically) the unit eigenvalue of A, i.e. theta = 0.
std::complex<double> frequency_response(const LinearModel& model, double theta);

}  // namespace mfdr
