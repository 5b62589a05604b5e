#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "caref/regularizers.hpp"

namespace caref {

/// Mixing weights of the composite objective. Zero disables a term exactly.
struct CarefWeights {
  double lambda_sced = 0.0;
  double lambda_kl = 0.0;

  CarefWeights() = default;
  CarefWeights(double ls, double lk);
};

struct LossBreakdown {
  double ce = 0.0;
  double sced = 0.0;
  double kl = 0.0;
  double total = 0.0;  // always ce + lambda_sced*sced + lambda_kl*kl
};

/// -sum_t log_softmax(logits)[t, targets[t]].
double cross_entropy(const LogitSeq& logits, const TargetSeq& targets);

/// Full composite loss. The softmax of `logits` is taken once and shared by
/// the divergence terms; ce comes from the unfloored log-sum-exp path, so at
/// weights (0, 0) the total is bit-identical to cross_entropy.
LossBreakdown caref_loss(const LogitSeq& logits, const TargetSeq& targets,
                         const ScedParams& params, const CarefWeights& weights);

/// Per-entry derivative of the sced sum with respect to the probabilities.
/// With d = P log(P/U) and L = log(P/U):
///   alpha |d|^(alpha-1) sign(d) (L+1) (1-P)^beta  -  beta |d|^alpha (1-P)^(beta-1)
/// Conventions: sign(0) = 0 kills the first term on the kink; the second
/// term is exactly zero when beta == 0; (1-P) is floored at kProbFloor
/// before being raised to beta-1 when beta is in (0, 1).
Matrix sced_grad_wrt_probs(const ProbSeq& p, const ScedParams& params, const UniformPrior& u);

/// Per-entry derivative of kl_uniform: log(P/U) + 1.
Matrix kl_grad_wrt_probs(const ProbSeq& p, const UniformPrior& u);

/// Pulls a probability-space gradient g back through the softmax that
/// produced row p: out[u] = p[u] * (g[u] - <g, p>).
void softmax_vjp_row(std::span<const double> p, std::span<const double> g,
                     std::span<double> out);

/// Gradient of caref_loss with respect to the logits; every row lies in the
/// simplex tangent plane (sums to 0 up to fp noise). With both weights zero
/// this is exactly softmax(logits) - onehot(targets).
Matrix caref_grad_wrt_logits(const LogitSeq& logits, const TargetSeq& targets,
                             const ScedParams& params, const CarefWeights& weights);

struct GradCheckOptions {
  double h = 1e-5;             // central-difference step
  double denom_floor = 1e-8;   // relative-error denominator floor
  double kink_tolerance = 1e-6;  // |d| radius treated as kink-adjacent at alpha == 1
};

struct GradReport {
  double max_rel_error = 0.0;
  int worst_t = -1;
  int worst_v = -1;
  double step_size = 0.0;
  int checked = 0;
  int excluded = 0;
};

/// Loss evaluator used by the checker. Extended precision keeps the
/// difference quotient's rounding floor far below the audit thresholds.
using LossFn = std::function<long double(const LogitSeq&)>;

/// Central-difference check of `analytic` against `loss` at `at`. Relative
/// error per coordinate is |a - n| / max(|a|, |n|, denom_floor); coordinates
/// flagged in `exclude` (step-major) are skipped but counted.
GradReport finite_diff_check(const LossFn& loss, const Matrix& analytic, const LogitSeq& at,
                             const GradCheckOptions& opts = {},
                             const std::vector<std::uint8_t>* exclude = nullptr);

/// Audits caref_grad_wrt_logits on one instance. At alpha == 1 every
/// coordinate of a step whose row holds an entry within kink_tolerance of
/// d = 0 is excluded: perturbing any logit of that step moves the kink
/// entry, so its absolute-value crease contaminates the whole row's
/// difference quotients.
GradReport audit_caref_gradient(const LogitSeq& logits, const TargetSeq& targets,
                                const ScedParams& params, const CarefWeights& weights,
                                const GradCheckOptions& opts = {});

/// Grid audit over freshly drawn random instances.
struct AuditConfig {
  std::vector<double> alphas{1.0, 1.5, 2.0};
  std::vector<double> betas{0.0, 0.5, 1.0, 2.0};
  int instances = 100;
  int max_steps = 4;
  int max_vocab = 16;
  double h = 1e-5;
  double threshold = 1e-6;
  double lambda_sced = 0.05;
  double lambda_kl = 0.1;
  double kink_tolerance = 1e-6;
  std::uint64_t seed = 12022;
};

struct AuditWorstCase {
  int instance = -1;
  double alpha = 0.0;
  double beta = 0.0;
  GradReport report;
};

struct AuditResult {
  bool pass = false;
  int cases = 0;
  double worst_rel_error = 0.0;
  double max_row_sum_abs = 0.0;  // worst |sum of an analytic gradient row|
  AuditWorstCase worst;
};

/// Runs the (alpha, beta) grid over `instances` random (logits, targets)
/// draws. Instances are redrawn until no probability sits within 1% of
/// uniform and no gradient coordinate is smaller than 5e-4 anywhere on the
/// grid, keeping the difference quotients meaningful at the default step.
AuditResult run_gradient_audit(const AuditConfig& cfg);

}  // namespace caref
