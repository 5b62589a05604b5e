#pragma once

#include <span>

#include "caref/dist.hpp"

namespace caref {

/// Aggregate distribution statistics over a set of scored predictions.
struct MetricsReport {
  double accuracy = 0.0;
  double mean_entropy = 0.0;
  double mean_effective_support = 0.0;
  double mean_topk_mass = 0.0;
  double mean_kl_uniform = 0.0;
  int topk = 5;
  int n_items = 0;
};

/// exp(entropy): the number of vocabulary entries the row effectively
/// spreads over (1 for one-hot, |V| for uniform). Clamped into [1, |V|].
double effective_support(std::span<const double> row);

/// Mass on the k most probable entries; ties resolve toward lower indices.
/// k must lie in [1, |V|].
double topk_mass(std::span<const double> row, int k);

/// Index of the largest entry, lowest index winning ties.
int argmax_lowest(std::span<const double> row);

/// One evaluated item: the predictive row plus predicted and gold ids.
struct ScoredPrediction {
  ProbRow probs;
  int predicted = -1;
  int gold = -1;
};

/// Arithmetic means over items. Throws on an empty set or invalid k.
MetricsReport report(std::span<const ScoredPrediction> items, int topk = 5);

}  // namespace caref
