#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "caref/matrix.hpp"

// Precision-templated scalar kernels. The double instantiation is the
// production path; the long double instantiation backs the finite-difference
// oracle, so the differentiated function is the same formula evaluated with
// more headroom rather than a second hand-derived implementation.
namespace caref::detail {

/// Floor applied to |d| before the log inside the fractional power, keeping
/// the gradient of |d|^alpha finite at d = 0.
inline constexpr double kAbsDivFloor = 1e-300;

/// |a|^e with exp/log, special-casing e in {0, 1} so those cases stay exact.
template <class Real>
inline Real pow_abs(Real a, double e) {
  if (e == 1.0) return a;
  if (e == 0.0) return Real(1);
  using std::exp;
  using std::log;
  const Real base = a < Real(kAbsDivFloor) ? Real(kAbsDivFloor) : a;
  return exp(Real(e) * log(base));
}

/// Max-shifted softmax of one logit row. The floor (and the renormalization
/// it forces) only engages when some entry actually falls below it, so
/// benign rows come out of the plain normalization bit-for-bit.
template <class Real>
inline void softmax_row(std::span<const double> z, double floor, std::vector<Real>& out) {
  using std::exp;
  out.resize(z.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double x : z) m = std::max(m, x);
  Real sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = exp(Real(z[i]) - Real(m));
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  bool clipped = false;
  for (auto& x : out) {
    if (x < Real(floor)) {
      x = Real(floor);
      clipped = true;
    }
  }
  if (clipped) {
    Real total = 0;
    for (auto& x : out) total += x;
    for (auto& x : out) x /= total;
    // Renormalization can drag a just-at-floor entry below the floor by a
    // few ulp; push those back without renormalizing (deficit ~ |V|*floor*eps).
    for (auto& x : out) x = std::max(x, Real(floor));
  }
}

/// Shifted log-sum-exp of one logit row.
template <class Real>
inline Real log_sum_exp(std::span<const double> z) {
  using std::exp;
  using std::log;
  double m = -std::numeric_limits<double>::infinity();
  for (double x : z) m = std::max(m, x);
  Real sum = 0;
  for (double x : z) sum += exp(Real(x) - Real(m));
  return Real(m) + log(sum);
}

/// -log softmax(z)[y], via the shifted log-sum-exp (never via log(softmax)).
template <class Real>
inline Real ce_row_term(std::span<const double> z, int y) {
  const Real lse = log_sum_exp<Real>(z);
  return -(Real(z[static_cast<std::size_t>(y)]) - lse);
}

/// Cross entropy against the eps-smoothed one-hot target. At eps == 0 this
/// reduces to ce_row_term bit-for-bit: the smoothing term multiplies by an
/// exact zero and the one-hot term by an exact one.
template <class Real>
inline Real smoothed_ce_row_term(std::span<const double> z, int y, double eps) {
  using std::size_t;
  const Real lse = log_sum_exp<Real>(z);
  Real mean_term = 0;
  for (double x : z) mean_term += Real(x) - lse;
  const Real hot = Real(1.0 - eps) * (Real(z[static_cast<size_t>(y)]) - lse);
  return -(hot + Real(eps) / Real(static_cast<double>(z.size())) * mean_term);
}

/// Sum of p*(log p - log u) over one probability row; entries at exactly
/// zero contribute nothing (the p*log(p) -> 0 limit).
template <class Real>
inline Real kl_row_sum(std::span<const Real> p, Real log_u) {
  using std::log;
  Real acc = 0;
  for (Real x : p) {
    if (x > Real(0)) acc += x * (log(x) - log_u);
  }
  return acc;
}

/// Sum of |p*(log p - log u)|^alpha * (1-p)^beta over one row. beta == 0
/// short-circuits to an exact unit weight.
template <class Real>
inline Real sced_row_sum(std::span<const Real> p, double alpha, double beta, Real log_u) {
  using std::log;
  using std::pow;
  Real acc = 0;
  for (Real x : p) {
    const Real d = x > Real(0) ? x * (log(x) - log_u) : Real(0);
    const Real a = d < Real(0) ? -d : d;
    const Real w = beta == 0.0 ? Real(1) : pow(Real(1) - x, Real(beta));
    acc += pow_abs(a, alpha) * w;
  }
  return acc;
}

/// Full composite loss: cross entropy plus weighted divergence terms, all at
/// Real precision over the same floored softmax pipeline the double path uses.
template <class Real>
inline Real caref_total(const Matrix& logits, std::span<const int> targets, double alpha,
                        double beta, double lambda_sced, double lambda_kl, double floor) {
  using std::log;
  const int vocab = logits.cols();
  const Real log_u = log(Real(1) / Real(vocab));
  Real ce = 0, sced = 0, kl = 0;
  std::vector<Real> p;
  for (int t = 0; t < logits.rows(); ++t) {
    const auto row = logits.row(t);
    ce += ce_row_term<Real>(row, targets[static_cast<std::size_t>(t)]);
    softmax_row<Real>(row, floor, p);
    const std::span<const Real> ps(p.data(), p.size());
    sced += sced_row_sum<Real>(ps, alpha, beta, log_u);
    kl += kl_row_sum<Real>(ps, log_u);
  }
  return ce + Real(lambda_sced) * sced + Real(lambda_kl) * kl;
}

}  // namespace caref::detail
