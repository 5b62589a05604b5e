#pragma once

#include <vector>

#include "caref/dist.hpp"

namespace caref {

/// Exponent pair of the sparsity-calibrated entropic divergence.
/// alpha >= 1 curves the entropic term; beta >= 0 gates each entry by
/// (1 - P)^beta so confident tokens drop out of the penalty.
struct ScedParams {
  double alpha = 1.0;
  double beta = 0.0;

  ScedParams() = default;
  ScedParams(double a, double b);
};

/// Label-smoothing mix-in weight, in [0, 1).
struct SmoothingEps {
  double epsilon = 0.0;

  SmoothingEps() = default;
  explicit SmoothingEps(double e);
};

/// Gold token ids, one per step.
using TargetSeq = std::vector<int>;

/// Sum over all steps and entries of P * log(P / U). Nonnegative up to
/// floor-induced slack for valid rows.
double kl_uniform(const ProbSeq& p, const UniformPrior& u);

/// Sum over all steps and entries of |P log(P / U)|^alpha * (1 - P)^beta.
/// Summed exactly as written -- any per-step normalization is the caller's
/// business. Entries at exactly 0 or 1 follow the limit conventions
/// (p*log(p) -> 0, and 0^beta = 0 for beta > 0).
double sced(const ProbSeq& p, const ScedParams& params, const UniformPrior& u);

/// Negated summed entropy. Sign convention: gradient descent on this value
/// FLATTENS the distribution, which is exactly the failure mode this
/// baseline exists to demonstrate; weight it positively to reproduce it.
double entropy_penalty(const ProbSeq& p);

/// Cross entropy of log_softmax(logits) against the smoothed target
/// (1 - eps) * onehot + eps * U, summed over steps. Bit-identical to plain
/// cross entropy at eps == 0.
double label_smoothing_ce(const LogitSeq& logits, const TargetSeq& targets,
                          SmoothingEps eps, const UniformPrior& u);

/// Euclidean projection of one logit row onto the probability simplex
/// (sort, threshold, clip). Output may contain exact zeros.
std::vector<double> sparsemax(std::span<const double> logits);

/// Probability-space gradient of entropy_penalty: log(P) + 1 per entry.
Matrix entropy_penalty_grad_wrt_probs(const ProbSeq& p);

}  // namespace caref
