#pragma once

// Special functions (digamma, trigamma) and Dirichlet / exponential-family
// parameter algebra shared by every inference algorithm in this library.
//
// Deltas are stored and combined in lambda-space (pseudo-count space). For
// Dirichlet parameters this is equivalent to natural-parameter space: the
// (-1) shift cancels in xi_0 + sum_b (xi_b - xi_0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ldastream {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown when a combined parameter matrix leaves the positive orthant.
class positivity_error : public std::runtime_error {
 public:
  positivity_error(Eigen::Index row, Eigen::Index col, double value)
      : std::runtime_error("parameter positivity violated at (" + std::to_string(row) + "," +
                           std::to_string(col) + "): " + std::to_string(value)),
        row_(row),
        col_(col) {}
  Eigen::Index row() const { return row_; }
  Eigen::Index col() const { return col_; }

 private:
  Eigen::Index row_;
  Eigen::Index col_;
};

/// psi(x) = d/dx log Gamma(x). Recurrence lift to x >= 6, then the
/// asymptotic Bernoulli series through x^-14; absolute error < 1e-10
/// for x >= 1e-3.
inline double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: argument must be > 0, got " + std::to_string(x));
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double t = inv * inv;
  const double series =
      t * (1.0 / 12.0 -
           t * (1.0 / 120.0 -
                t * (1.0 / 252.0 -
                     t * (1.0 / 240.0 - t * (1.0 / 132.0 - t * (691.0 / 32760.0 - t * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

/// psi_1(x) = d/dx psi(x), same recurrence + series scheme.
inline double trigamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("trigamma: argument must be > 0, got " + std::to_string(x));
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double t = inv * inv;
  const double series =
      1.0 / 6.0 -
      t * (1.0 / 30.0 - t * (1.0 / 42.0 - t * (1.0 / 30.0 - t * (5.0 / 66.0 - t * (691.0 / 2730.0 - t * (7.0 / 6.0))))));
  return acc + inv * (1.0 + 0.5 * inv) + inv * t * series;
}

// Dense positive parameter vector of a Dirichlet distribution.
struct DirichletParams {
  Vector params;

  explicit DirichletParams(Vector p) : params(std::move(p)) {
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      if (!(params[i] > 0.0) || !std::isfinite(params[i]))
        throw std::invalid_argument("DirichletParams: entry " + std::to_string(i) + " not positive finite");
    }
  }
};

/// E[log x_i] under Dir(p): psi(p_i) - psi(sum p).
inline Vector expected_log_dirichlet(const DirichletParams& p) {
  const double psi_total = digamma(p.params.sum());
  Vector out(p.params.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = digamma(p.params[i]) - psi_total;
  return out;
}

struct DirichletMoments {
  Vector mean;
  Vector second_moment;
};

/// First and second marginal moments: E[x_i] = p_i/p0,
/// E[x_i^2] = p_i(p_i+1)/(p0(p0+1)).
inline DirichletMoments dirichlet_moments(const DirichletParams& p) {
  const double p0 = p.params.sum();
  DirichletMoments m;
  m.mean = p.params / p0;
  m.second_moment = (p.params.array() * (p.params.array() + 1.0) / (p0 * (p0 + 1.0))).matrix();
  return m;
}

// The unit of worker-to-master communication: xi - xi_0 in parameter space.
struct ParamDelta {
  Matrix value;
  std::int64_t batch_index = 0;
};

namespace detail {
inline void check_positive(const Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!(m(i, j) > 0.0)) throw positivity_error(i, j, m(i, j));
}
}  // namespace detail

/// xi + delta, entrywise; throws positivity_error if any entry leaves
/// (0, inf). VB deltas are non-negative so only EP-style deltas can trip it.
inline Matrix apply_delta(const Matrix& xi, const ParamDelta& d) {
  if (xi.rows() != d.value.rows() || xi.cols() != d.value.cols())
    throw std::invalid_argument("apply_delta: shape mismatch");
  Matrix out = xi + d.value;
  detail::check_positive(out);
  return out;
}

/// xi_0 + sum_b (xi_b - xi_0), folded in ascending batch index so that a
/// fixed stream yields bit-identical results regardless of arrival order.
inline Matrix combine_parallel(const Matrix& xi0, std::vector<ParamDelta> deltas) {
  std::sort(deltas.begin(), deltas.end(),
            [](const ParamDelta& a, const ParamDelta& b) { return a.batch_index < b.batch_index; });
  Matrix out = xi0;
  for (const ParamDelta& d : deltas) {
    if (out.rows() != d.value.rows() || out.cols() != d.value.cols())
      throw std::invalid_argument("combine_parallel: shape mismatch at batch " + std::to_string(d.batch_index));
    out += d.value;
  }
  detail::check_positive(out);
  return out;
}

}  // namespace ldastream
