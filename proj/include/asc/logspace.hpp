#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace asc {

template <typename Scalar = double>
constexpr Scalar neg_inf() {
  return -std::numeric_limits<Scalar>::infinity();
}

/// Element-wise exp(x - shift), exactly 0 where x is -inf.
template <typename Derived>
auto exp_shifted(const Eigen::ArrayBase<Derived>& x, typename Derived::Scalar shift) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([shift](Scalar v) { return std::exp(v - shift); });
}

/// log(sum(exp(x))) with max-shift; -inf for an empty or all -inf input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return neg_inf<Scalar>();
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log(exp_shifted(x.derived().array(), m).sum());
}

/// Pairwise log-add, stable for -inf operands.
template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  if (a < b) std::swap(a, b);
  if (b == neg_inf<Scalar>()) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Softmax of a row of logits.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> out = exp_shifted(logits.array(), logits.maxCoeff()).matrix();
  out /= out.sum();
  return out;
}

/// x * log(x / y) with the 0 log 0 = 0 convention.
template <typename Scalar>
Scalar kl_term(Scalar p, Scalar q) {
  if (p <= Scalar(0)) return Scalar(0);
  if (q <= Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return p * (std::log(p) - std::log(q));
}

/// KL(p || q) between two probability vectors.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  typename DerivedP::Scalar acc(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) acc += kl_term(p(i), q(i));
  return acc;
}

}  // namespace asc
