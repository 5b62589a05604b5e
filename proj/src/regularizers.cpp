#include "caref/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caref/detail/kernels.hpp"

namespace caref {

ScedParams::ScedParams(double a, double b) : alpha(a), beta(b) {
  if (!std::isfinite(a) || a < 1.0) {
    throw std::invalid_argument("ScedParams: alpha must be finite and >= 1");
  }
  if (!std::isfinite(b) || b < 0.0) {
    throw std::invalid_argument("ScedParams: beta must be finite and >= 0");
  }
}

SmoothingEps::SmoothingEps(double e) : epsilon(e) {
  if (!std::isfinite(e) || e < 0.0 || e >= 1.0) {
    throw std::invalid_argument("SmoothingEps: epsilon must lie in [0, 1)");
  }
}

static void require_vocab_match(int cols, const UniformPrior& u, const char* what) {
  if (cols != u.vocab().size()) {
    throw std::invalid_argument(std::string(what) +
                                ": vocabulary size does not match the prior");
  }
}

double kl_uniform(const ProbSeq& p, const UniformPrior& u) {
  require_vocab_match(p.cols(), u, "kl_uniform");
  double acc = 0.0;
  for (int t = 0; t < p.rows(); ++t) {
    acc += detail::kl_row_sum<double>(
        std::span<const double>(p.row(t).data(), p.row(t).size()), u.log_value());
  }
  return acc;
}

double sced(const ProbSeq& p, const ScedParams& params, const UniformPrior& u) {
  require_vocab_match(p.cols(), u, "sced");
  double acc = 0.0;
  for (int t = 0; t < p.rows(); ++t) {
    acc += detail::sced_row_sum<double>(
        std::span<const double>(p.row(t).data(), p.row(t).size()), params.alpha,
        params.beta, u.log_value());
  }
  return acc;
}

double entropy_penalty(const ProbSeq& p) {
  double acc = 0.0;
  for (int t = 0; t < p.rows(); ++t) acc += entropy(p.row(t));
  return -acc;
}

double label_smoothing_ce(const LogitSeq& logits, const TargetSeq& targets,
                          SmoothingEps eps, const UniformPrior& u) {
  require_vocab_match(logits.cols(), u, "label_smoothing_ce");
  require_finite(logits);
  if (static_cast<int>(targets.size()) != logits.rows()) {
    throw std::invalid_argument("label_smoothing_ce: one target per step required");
  }
  double acc = 0.0;
  for (int t = 0; t < logits.rows(); ++t) {
    const int y = targets[static_cast<std::size_t>(t)];
    if (y < 0 || y >= logits.cols()) {
      throw std::out_of_range("label_smoothing_ce: target id out of vocabulary");
    }
    acc += detail::smoothed_ce_row_term<double>(logits.row(t), y, eps.epsilon);
  }
  return acc;
}

std::vector<double> sparsemax(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw std::invalid_argument("sparsemax: need at least 2 entries");
  }
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("sparsemax: non-finite logit");
  }
  std::vector<double> sorted(logits.begin(), logits.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  // Largest k with 1 + k*z_(k) > sum of the top k entries.
  double cumsum = 0.0;
  double support_sum = 0.0;
  int support = 0;
  for (int k = 1; k <= static_cast<int>(sorted.size()); ++k) {
    const double z = sorted[static_cast<std::size_t>(k - 1)];
    cumsum += z;
    if (1.0 + k * z > cumsum) {
      support = k;
      support_sum = cumsum;
    }
  }
  const double tau = (support_sum - 1.0) / support;

  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::max(logits[i] - tau, 0.0);
  }
  return out;
}

Matrix entropy_penalty_grad_wrt_probs(const ProbSeq& p) {
  Matrix g(p.rows(), p.cols());
  for (int t = 0; t < p.rows(); ++t) {
    for (int v = 0; v < p.cols(); ++v) {
      // d(-H)/dP = log(P) + 1, with the floor standing in for exact zeros.
      g(t, v) = std::log(std::max(p(t, v), kProbFloor)) + 1.0;
    }
  }
  return g;
}

}  // namespace caref
