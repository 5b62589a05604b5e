#include "caref/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "caref/regularizers.hpp"

namespace caref {

double effective_support(std::span<const double> p) {
  if (p.size() < 2) throw std::invalid_argument("effective_support: need >= 2 entries");
  const double h = entropy(p);
  const double support = std::exp(h);
  return std::clamp(support, 1.0, static_cast<double>(p.size()));
}

double topk_mass(std::span<const double> p, int k) {
  if (p.size() < 2) throw std::invalid_argument("topk_mass: need >= 2 entries");
  if (k < 1 || k > static_cast<int>(p.size())) {
    throw std::invalid_argument("topk_mass: k out of range");
  }
  std::vector<double> sorted(p.begin(), p.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end(),
                   std::greater<double>());
  double mass = 0.0;
  for (int i = 0; i < k; ++i) mass += sorted[static_cast<std::size_t>(i)];
  return mass;
}

int argmax_lowest(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("argmax_lowest: empty distribution");
  int best = 0;
  for (int v = 1; v < static_cast<int>(p.size()); ++v) {
    if (p[static_cast<std::size_t>(v)] > p[static_cast<std::size_t>(best)]) best = v;
  }
  return best;
}

MetricsReport report(std::span<const ScoredPrediction> items, int topk) {
  if (items.empty()) throw std::invalid_argument("report: no predictions");
  MetricsReport out;
  out.topk = topk;
  out.n_items = static_cast<int>(items.size());

  const int vocab = static_cast<int>(items.front().probs.size());
  if (vocab < 2) throw std::invalid_argument("report: need >= 2 classes");
  if (topk < 1 || topk > vocab) throw std::invalid_argument("report: topk out of range");
  const UniformPrior u{Vocab{vocab}};

  int correct = 0;
  for (const ScoredPrediction& item : items) {
    if (static_cast<int>(item.probs.size()) != vocab) {
      throw std::invalid_argument("report: inconsistent distribution widths");
    }
    if (item.gold < 0 || item.gold >= vocab) {
      throw std::out_of_range("report: gold id out of vocabulary");
    }
    const std::span<const double> p{item.probs};
    if (item.predicted == item.gold) ++correct;
    out.mean_entropy += entropy(p);
    out.mean_effective_support += effective_support(p);
    out.mean_topk_mass += topk_mass(p, topk);

    ProbSeq row(1, vocab);
    for (int v = 0; v < vocab; ++v) row(0, v) = item.probs[static_cast<std::size_t>(v)];
    out.mean_kl_uniform += kl_uniform(row, u);
  }
  const double n = static_cast<double>(items.size());
  out.accuracy = correct / n;
  out.mean_entropy /= n;
  out.mean_effective_support /= n;
  out.mean_topk_mass /= n;
  out.mean_kl_uniform /= n;
  return out;
}

}  // namespace caref
