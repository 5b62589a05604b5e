#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "caref/metrics.hpp"
#include "caref/objective.hpp"

namespace caref {

struct SynthTaskConfig {
  int vocab_size = 16;
  int context_len = 8;
  int relevant_k = 2;           // number of signal-bearing context positions
  double distractor_noise = 0.0;  // probability a distractor overwrites one of them
  int num_train = 256;
  int num_eval = 512;
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

struct Example {
  std::vector<int> context;
  int target = -1;
  bool operator==(const Example&) const = default;
};
using Dataset = std::vector<Example>;

/// Synthetic next-token task. The vocabulary splits into a signal half
/// R = {0..ceil(|V|/2)-1} and a distractor half D = rest. Each example draws
/// one signal token s, writes it into the first `relevant_k` positions,
/// fills the remaining positions with distractor tokens, and labels the
/// example perm[s] for a seeded permutation of the vocabulary. With
/// probability `distractor_noise` one relevant position is overwritten by a
/// distractor token after the label is fixed -- the label noise source.
///
/// The split keeps the rule decodable from an order-free bag of tokens
/// (count the signal tokens, ignore the distractor half), which is exactly
/// what the mean-pooled linear model below can express.
class SynthTask {
 public:
  explicit SynthTask(SynthTaskConfig cfg);

  const SynthTaskConfig& config() const { return cfg_; }
  const Dataset& train_set() const { return train_; }
  const Dataset& eval_set() const { return eval_; }

  int signal_vocab_size() const { return signal_size_; }
  /// The label assigned to signal token s.
  int permuted_target(int s) const;

  /// Bayes-optimal prediction under the generator's own mechanism. Any
  /// signal token visible at a relevant position pins s exactly (a noise
  /// swap always writes a distractor token); with k == 1 and the single
  /// relevant position swapped out, s is unrecoverable and the lowest
  /// signal id is returned.
  int posterior_prediction(const std::vector<int>& context) const;

  /// Closed-form accuracy of posterior_prediction under the mechanism:
  /// 1 for relevant_k >= 2 or zero noise; (1-q) + q/|R| for relevant_k == 1.
  double bayes_accuracy() const;

 private:
  Example draw(std::mt19937_64& rng) const;

  SynthTaskConfig cfg_;
  int signal_size_ = 0;
  std::vector<int> perm_;
  Dataset train_;
  Dataset eval_;
};

/// One record per line: context ids space-separated, a tab, the target id.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

/// Linear bag-of-embeddings scorer: logits = mean_i embed[context[i]] * out_proj.
struct ToyModel {
  Matrix embed;     // |V| x dim
  Matrix out_proj;  // dim x |V|

  int vocab() const { return embed.rows(); }
  int dim() const { return embed.cols(); }
};

std::vector<double> forward(const ToyModel& model, std::span<const int> context);

struct ParamGrads {
  Matrix embed;
  Matrix out_proj;
};

struct BackwardResult {
  ParamGrads grads;
  LossBreakdown loss;
};

/// Loss and analytic parameter gradients for one teacher-forced example
/// (single-step: the whole context predicts one target).
BackwardResult backward(const ToyModel& model, std::span<const int> context, int target,
                        const ScedParams& params, const CarefWeights& weights);

struct TrainConfig {
  double lr = 1e-2;       // toy preset; the faithful preset ships lr = 3e-5
  int batch_size = 4;
  int epochs = 50;
  int warmup_steps = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;
  int embed_dim = 16;
  ScedParams sced{};
  CarefWeights weights{};
  std::uint64_t seed = 2;
  int topk = 5;

  void validate() const;  // lr == 0 is allowed (frozen-run contract)
};

struct EpochRecord {
  LossBreakdown train_loss;  // mean over the epoch's batches
  MetricsReport eval;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> lr_trace;         // one entry per optimizer step
  std::vector<double> post_clip_norms;  // global grad norm after clipping
};

/// Thrown when a training step produces a non-finite loss or parameter.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(int step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Linear warmup to `base_lr` over `warmup` steps, then linear decay to 0 at
/// `total_steps`. Steps are 1-based.
double schedule_lr(double base_lr, int step, int warmup, int total_steps);

struct TrainResult {
  ToyModel model;
  TrainHistory history;
};

/// Deterministic single-threaded training loop (decoupled weight decay,
/// bias-corrected moments, global-norm clipping). Bit-for-bit reproducible
/// for a fixed config; throws divergence_error naming the step otherwise.
TrainResult train(const SynthTask& task, const TrainConfig& cfg);

MetricsReport evaluate(const ToyModel& model, const Dataset& ds, int topk = 5);

/// Flat little-endian float64 dump (embed row-major, then out_proj
/// row-major) plus a one-line text sidecar `<path>.shape` giving shapes.
void save_model(const std::filesystem::path& path, const ToyModel& model);
ToyModel load_model(const std::filesystem::path& path);

}  // namespace caref
