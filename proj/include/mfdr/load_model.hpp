#pragma once

#include <Eigen/Dense>
#include <span>

#include "mfdr/rng.hpp"

namespace mfdr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// State of a single pool pump: operating mode plus the number of
// consecutive sampling slots spent in that mode (saturating at i_max).
struct PoolState {
  bool on = false;
  int sojourn = 1;

  friend bool operator==(const PoolState&, const PoolState&) = default;
};

// Bijection between pool states and {0,...,2*i_max-1}: on-states first,
// ordered by sojourn, then off-states.
int pool_state_index(const PoolState& s, int i_max);
PoolState pool_state_from_index(int idx, int i_max);

// Row-stochastic matrix with validation.
struct TransitionMatrix {
  Matrix p;

  int dim() const { return static_cast<int>(p.rows()); }
  // Throws std::invalid_argument on negative entries or rows that do not
  // sum to 1 within 1e-12.
  void validate() const;
};

// Probability vector on the d-simplex.
struct Distribution {
  Vector w;

  int dim() const { return static_cast<int>(w.size()); }
  void validate(double tol = 1e-10) const;
};

// Nominal chain P0 together with the exponential-tilt control family
// P_zeta, its derivative at zeta = 0, the utility vector, and the
// invariant law of P0.
struct ControlledFamily {
  TransitionMatrix nominal;   // P0
  Vector utility;             // U(x), indicator of the on mode for pools
  Matrix derivative;          // dP_zeta/dzeta at zeta = 0
  Distribution pi0;           // invariant law of P0
  double ybar0 = 0.0;         // sum_x pi0(x) U(x)
  int i_max = 0;              // 0 when the family is not a pool model

  int dim() const { return nominal.dim(); }
};

// Assembles a family from an arbitrary ergodic chain and utility vector.
ControlledFamily make_family(TransitionMatrix nominal, Vector utility);

// Symmetric pool-pump model: from (mode, i) the load switches mode with
// probability switch_prob (sojourn resets to 1), otherwise the sojourn
// advances, saturating at i_max. Requires i_max >= 2 and
// switch_prob in (0,1).
ControlledFamily build_nominal_pool_model(int i_max, double switch_prob);

// P_zeta(x,x') = P0(x,x') exp(zeta U(x')) / Z(x,zeta). Computed in the
// log domain so large |zeta| cannot overflow; zero entries of P0 stay
// zero.
TransitionMatrix tilt_transition(const ControlledFamily& family, double zeta);

// Closed form E(x,x') = P0(x,x') (U(x') - sum_x'' P0(x,x'') U(x'')).
Matrix derivative_matrix(const TransitionMatrix& nominal, const Vector& utility);

// Dominant-eigenvector iteration to tolerance 1e-12. Throws on
// non-convergence (reducible or periodic chain suspected).
Distribution invariant_distribution(const TransitionMatrix& p);

// Draws a successor index from a probability row.
int sample_index(std::span<const double> row, double u);

// Draws the next pool state from the given transition row.
PoolState sample_next(const PoolState& state, std::span<const double> row,
                      int i_max, RngStream& rng);

}  // namespace mfdr
