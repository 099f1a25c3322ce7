#include "mfdr/load_model.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mfdr {

int pool_state_index(const PoolState& s, int i_max) {
  if (s.sojourn < 1 || s.sojourn > i_max) {
    throw std::invalid_argument("pool sojourn out of range");
  }
  return (s.on ? 0 : i_max) + (s.sojourn - 1);
}

PoolState pool_state_from_index(int idx, int i_max) {
  if (idx < 0 || idx >= 2 * i_max) {
    throw std::invalid_argument("pool state index out of range");
  }
  PoolState s;
  s.on = idx < i_max;
  s.sojourn = (idx % i_max) + 1;
  return s;
}

void TransitionMatrix::validate() const {
  if (p.rows() != p.cols() || p.rows() == 0) {
    throw std::invalid_argument("transition matrix must be square");
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double row_sum = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double v = p(i, j);
      if (v < 0.0 || v > 1.0 || !std::isfinite(v)) {
        throw std::invalid_argument("transition probability outside [0,1]");
      }
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg << "row " << i << " sums to " << row_sum << ", expected 1";
      throw std::invalid_argument(msg.str());
    }
  }
}

void Distribution::validate(double tol) const {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] < 0.0 || !std::isfinite(w[i])) {
      throw std::invalid_argument("distribution has a negative entry");
    }
    sum += w[i];
  }
  if (std::abs(sum - 1.0) > tol) {
    throw std::invalid_argument("distribution does not sum to 1");
  }
}

Matrix derivative_matrix(const TransitionMatrix& nominal, const Vector& utility) {
  const Matrix& p = nominal.p;
  const Vector row_mean = p * utility;  // sum_x'' P0(x,x'') U(x'')
  Matrix e(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      e(i, j) = p(i, j) * (utility[j] - row_mean[i]);
    }
  }
  return e;
}

Distribution invariant_distribution(const TransitionMatrix& p) {
  p.validate();
  const Eigen::Index d = p.p.rows();
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Constant(d, 1.0 / double(d));
  constexpr double kTol = 1e-12;
  constexpr long kMaxIter = 1000000;
  for (long it = 0; it < kMaxIter; ++it) {
    Eigen::RowVectorXd next = mu * p.p;
    next /= next.sum();
    const double delta = (next - mu).cwiseAbs().maxCoeff();
    mu = next;
    if (delta < kTol) {
      Distribution out{mu.transpose()};
      out.validate();
      return out;
    }
  }
  throw std::runtime_error(
      "invariant distribution did not converge; chain may be reducible or "
      "periodic");
}

ControlledFamily make_family(TransitionMatrix nominal, Vector utility) {
  nominal.validate();
  if (utility.size() != nominal.p.rows()) {
    throw std::invalid_argument("utility dimension mismatch");
  }
  ControlledFamily fam;
  fam.derivative = derivative_matrix(nominal, utility);
  fam.pi0 = invariant_distribution(nominal);
  fam.ybar0 = fam.pi0.w.dot(utility);
  fam.nominal = std::move(nominal);
  fam.utility = std::move(utility);
  return fam;
}

ControlledFamily build_nominal_pool_model(int i_max, double switch_prob) {
  if (i_max < 2) {
    throw std::invalid_argument("i_max must be at least 2");
  }
  if (!(switch_prob > 0.0) || !(switch_prob < 1.0)) {
    throw std::invalid_argument("switch_prob must lie in (0,1)");
  }
  const int d = 2 * i_max;
  Matrix p = Matrix::Zero(d, d);
  Vector u = Vector::Zero(d);
  for (int idx = 0; idx < d; ++idx) {
    const PoolState s = pool_state_from_index(idx, i_max);
    u[idx] = s.on ? 1.0 : 0.0;
    const PoolState stay{s.on, std::min(s.sojourn + 1, i_max)};
    const PoolState flip{!s.on, 1};
    p(idx, pool_state_index(stay, i_max)) += 1.0 - switch_prob;
    p(idx, pool_state_index(flip, i_max)) += switch_prob;
  }
  ControlledFamily fam = make_family(TransitionMatrix{std::move(p)}, std::move(u));
  fam.i_max = i_max;
  return fam;
}

TransitionMatrix tilt_transition(const ControlledFamily& family, double zeta) {
  if (!std::isfinite(zeta)) {
    throw std::invalid_argument("zeta must be finite");
  }
  const Matrix& p0 = family.nominal.p;
  const Vector& u = family.utility;
  const Eigen::Index d = p0.rows();
  Matrix out = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    // Log-domain normalization: shift by the max exponent on the row
    // support so exp never overflows for large |zeta|.
    double shift = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (p0(i, j) > 0.0) shift = std::max(shift, zeta * u[j]);
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (p0(i, j) > 0.0) {
        out(i, j) = p0(i, j) * std::exp(zeta * u[j] - shift);
        z += out(i, j);
      }
    }
    out.row(i) /= z;
  }
  TransitionMatrix t{std::move(out)};
  t.validate();
  return t;
}

int sample_index(std::span<const double> row, double u) {
  double acc = 0.0;
  const int n = static_cast<int>(row.size());
  for (int j = 0; j < n; ++j) {
    acc += row[j];
    if (u < acc) return j;
  }
  // Guard against accumulated round-off in the row sum.
  for (int j = n - 1; j >= 0; --j) {
    if (row[j] > 0.0) return j;
  }
  return n - 1;
}

PoolState sample_next(const PoolState& state, std::span<const double> row,
                      int i_max, RngStream& rng) {
  (void)state;
  const int j = sample_index(row, rng.next_double());
  return pool_state_from_index(j, i_max);
}

}  // namespace mfdr
