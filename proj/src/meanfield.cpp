#include "mfdr/meanfield.hpp"

#include <stdexcept>

namespace mfdr {

Distribution meanfield_step(const Distribution& mu, double zeta,
                            const ControlledFamily& family) {
  mu.validate();
  const TransitionMatrix p = tilt_transition(family, zeta);
  Distribution out{(mu.w.transpose() * p.p).transpose()};
  return out;
}

double aggregate_output(const Distribution& mu, const ControlledFamily& family) {
  mu.validate();
  return mu.w.dot(family.utility);
}

LinearModel linearize(const ControlledFamily& family) {
  LinearModel model;
  model.a = family.nominal.p.transpose();
  model.b = family.derivative.transpose() * family.pi0.w;
  model.c = family.utility.transpose();

  // A is the transpose of a row-stochastic matrix: columns sum to 1 and
  // the spectrum lies in the closed unit disk with a simple eigenvalue
  // at 1 for an ergodic chain.
  const Eigen::VectorXcd eig = model.a.eigenvalues();
  int on_circle = 0;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const double r = std::abs(eig[i]);
    if (r > 1.0 + 1e-9) {
      throw std::runtime_error("linearized A has an eigenvalue outside the unit disk");
    }
    if (r > 1.0 - 1e-9) ++on_circle;
  }
  if (on_circle != 1) {
    throw std::runtime_error("linearized A does not have a simple unit eigenvalue");
  }
  return model;
}

std::complex<double> frequency_response(const LinearModel& model, double theta) {
  const std::complex<double> z = std::polar(1.0, theta);
  if (std::abs(z - 1.0) < 1e-9) {
    throw std::invalid_argument(
        "resolvent singular: A has an eigenvalue at 1, theta = 0 is excluded");
  }
  Eigen::MatrixXcd m = -model.a.cast<std::complex<double>>();
  m.diagonal().array() += z;
  const Eigen::VectorXcd x = m.partialPivLu().solve(model.b.cast<std::complex<double>>());
  return (model.c.cast<std::complex<double>>() * x)(0);
}

}  // namespace mfdr
