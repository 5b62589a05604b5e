#include "caref/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace caref {

void SynthTaskConfig::validate() const {
  if (vocab_size < 4) throw std::invalid_argument("SynthTaskConfig: vocab_size must be >= 4");
  if (context_len < 1) throw std::invalid_argument("SynthTaskConfig: context_len must be >= 1");
  if (relevant_k < 1 || relevant_k > context_len) {
    throw std::invalid_argument("SynthTaskConfig: relevant_k must be in [1, context_len]");
  }
  if (!(distractor_noise >= 0.0 && distractor_noise <= 1.0)) {
    throw std::invalid_argument("SynthTaskConfig: distractor_noise must be in [0, 1]");
  }
  if (num_train < 1 || num_eval < 1) {
    throw std::invalid_argument("SynthTaskConfig: need at least one train and eval example");
  }
}

// Bias from the modulus is immaterial at these ranges; avoiding
// uniform_int_distribution keeps the stream independent of the stdlib.
static int draw_below(std::mt19937_64& rng, int n) {
  return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
}

static double draw_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

SynthTask::SynthTask(SynthTaskConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  signal_size_ = (cfg_.vocab_size + 1) / 2;

  std::mt19937_64 rng(cfg_.seed);
  perm_.resize(static_cast<std::size_t>(cfg_.vocab_size));
  std::iota(perm_.begin(), perm_.end(), 0);
  for (int i = cfg_.vocab_size - 1; i > 0; --i) {
    std::swap(perm_[static_cast<std::size_t>(i)],
              perm_[static_cast<std::size_t>(draw_below(rng, i + 1))]);
  }

  train_.reserve(static_cast<std::size_t>(cfg_.num_train));
  for (int i = 0; i < cfg_.num_train; ++i) train_.push_back(draw(rng));
  eval_.reserve(static_cast<std::size_t>(cfg_.num_eval));
  for (int i = 0; i < cfg_.num_eval; ++i) eval_.push_back(draw(rng));
}

Example SynthTask::draw(std::mt19937_64& rng) const {
  const int distractor_base = signal_size_;
  const int distractor_size = cfg_.vocab_size - signal_size_;
  const int s = draw_below(rng, signal_size_);

  Example ex;
  ex.context.assign(static_cast<std::size_t>(cfg_.context_len), s);
  for (int i = cfg_.relevant_k; i < cfg_.context_len; ++i) {
    ex.context[static_cast<std::size_t>(i)] = distractor_base + draw_below(rng, distractor_size);
  }
  ex.target = perm_[static_cast<std::size_t>(s)];

  if (cfg_.distractor_noise > 0.0 && draw_unit(rng) < cfg_.distractor_noise) {
    const int pos = draw_below(rng, cfg_.relevant_k);
    ex.context[static_cast<std::size_t>(pos)] = distractor_base + draw_below(rng, distractor_size);
  }
  return ex;
}

int SynthTask::permuted_target(int s) const {
  if (s < 0 || s >= cfg_.vocab_size) {
    throw std::out_of_range("permuted_target: token id out of vocabulary");
  }
  return perm_[static_cast<std::size_t>(s)];
}

int SynthTask::posterior_prediction(const std::vector<int>& context) const {
  // Signal tokens never appear as distractor fill, so seeing one pins s.
  for (int tok : context) {
    if (tok < 0 || tok >= cfg_.vocab_size) {
      throw std::out_of_range("posterior_prediction: token id out of vocabulary");
    }
    if (tok < signal_size_) return perm_[static_cast<std::size_t>(tok)];
  }
  return perm_[0];
}

double SynthTask::bayes_accuracy() const {
  if (cfg_.relevant_k >= 2 || cfg_.distractor_noise == 0.0) return 1.0;
  const double q = cfg_.distractor_noise;
  return (1.0 - q) + q / static_cast<double>(signal_size_);
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset: cannot open " + path.string());
  for (const Example& ex : ds) {
    for (std::size_t i = 0; i < ex.context.size(); ++i) {
      if (i > 0) out << ' ';
      out << ex.context[i];
    }
    out << '\t' << ex.target << '\n';
  }
  if (!out) throw std::runtime_error("write_dataset: write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + path.string());
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto where = [&] {
      return "read_dataset: " + path.string() + ":" + std::to_string(lineno);
    };
    if (tab == std::string::npos) {
      throw std::runtime_error(where() + ": missing tab before target id");
    }
    Example ex;
    std::istringstream ctx(line.substr(0, tab));
    int tok;
    while (ctx >> tok) {
      if (tok < 0) throw std::runtime_error(where() + ": negative token id");
      ex.context.push_back(tok);
    }
    if (!ctx.eof()) throw std::runtime_error(where() + ": malformed context token");
    if (ex.context.empty()) throw std::runtime_error(where() + ": empty context");

    std::istringstream tgt(line.substr(tab + 1));
    if (!(tgt >> ex.target) || ex.target < 0) {
      throw std::runtime_error(where() + ": malformed target id");
    }
    std::string rest;
    if (tgt >> rest) throw std::runtime_error(where() + ": trailing characters after target");
    ds.push_back(std::move(ex));
  }
  return ds;
}

static std::vector<double> pooled_embedding(const ToyModel& model,
                                            std::span<const int> context) {
  if (context.empty()) throw std::invalid_argument("forward: empty context");
  std::vector<double> f(static_cast<std::size_t>(model.dim()), 0.0);
  for (int tok : context) {
    if (tok < 0 || tok >= model.vocab()) {
      throw std::out_of_range("forward: token id out of vocabulary");
    }
    for (int j = 0; j < model.dim(); ++j) {
      f[static_cast<std::size_t>(j)] += model.embed(tok, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(context.size());
  for (double& x : f) x *= inv;
  return f;
}

std::vector<double> forward(const ToyModel& model, std::span<const int> context) {
  const std::vector<double> f = pooled_embedding(model, context);
  std::vector<double> logits(static_cast<std::size_t>(model.vocab()), 0.0);
  for (int j = 0; j < model.dim(); ++j) {
    const double fj = f[static_cast<std::size_t>(j)];
    for (int v = 0; v < model.vocab(); ++v) {
      logits[static_cast<std::size_t>(v)] += fj * model.out_proj(j, v);
    }
  }
  return logits;
}

BackwardResult backward(const ToyModel& model, std::span<const int> context, int target,
                        const ScedParams& params, const CarefWeights& weights) {
  const std::vector<double> f = pooled_embedding(model, context);
  LogitSeq logits(1, model.vocab());
  for (int j = 0; j < model.dim(); ++j) {
    const double fj = f[static_cast<std::size_t>(j)];
    for (int v = 0; v < model.vocab(); ++v) logits(0, v) += fj * model.out_proj(j, v);
  }

  BackwardResult out;
  const TargetSeq targets{target};
  out.loss = caref_loss(logits, targets, params, weights);
  const Matrix g = caref_grad_wrt_logits(logits, targets, params, weights);

  out.grads.out_proj = Matrix(model.dim(), model.vocab());
  std::vector<double> df(static_cast<std::size_t>(model.dim()), 0.0);
  for (int j = 0; j < model.dim(); ++j) {
    const double fj = f[static_cast<std::size_t>(j)];
    double acc = 0.0;
    for (int v = 0; v < model.vocab(); ++v) {
      out.grads.out_proj(j, v) = fj * g(0, v);
      acc += model.out_proj(j, v) * g(0, v);
    }
    df[static_cast<std::size_t>(j)] = acc;
  }

  out.grads.embed = Matrix(model.vocab(), model.dim());
  const double inv = 1.0 / static_cast<double>(context.size());
  for (int tok : context) {
    for (int j = 0; j < model.dim(); ++j) {
      out.grads.embed(tok, j) += inv * df[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (!std::isfinite(lr) || lr < 0.0) {
    throw std::invalid_argument("TrainConfig: lr must be finite and >= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (warmup_steps < 0) throw std::invalid_argument("TrainConfig: warmup_steps must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) {
    throw std::invalid_argument("TrainConfig: weight_decay must be finite and >= 0");
  }
  if (!(max_grad_norm > 0.0)) {
    throw std::invalid_argument("TrainConfig: max_grad_norm must be > 0");
  }
  if (embed_dim < 1) throw std::invalid_argument("TrainConfig: embed_dim must be >= 1");
  if (topk < 1) throw std::invalid_argument("TrainConfig: topk must be >= 1");
}

double schedule_lr(double base_lr, int step, int warmup, int total_steps) {
  if (step < 1 || total_steps < 1 || warmup < 0) {
    throw std::invalid_argument("schedule_lr: step and total_steps are 1-based positives");
  }
  if (step <= warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps <= warmup) return 0.0;
  const double frac = static_cast<double>(total_steps - step) /
                      static_cast<double>(total_steps - warmup);
  return base_lr * std::max(frac, 0.0);
}

namespace {

struct AdamState {
  Matrix m;
  Matrix v;
  explicit AdamState(const Matrix& shape) : m(shape.rows(), shape.cols()),
                                            v(shape.rows(), shape.cols()) {}
};

void adamw_update(Matrix& p, const Matrix& g, AdamState& st, const TrainConfig& cfg,
                  double lr, int step) {
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
  double* pd = p.data();
  const double* gd = g.data();
  double* md = st.m.data();
  double* vd = st.v.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    pd[i] *= 1.0 - lr * cfg.weight_decay;
    md[i] = cfg.adam_beta1 * md[i] + (1.0 - cfg.adam_beta1) * gd[i];
    vd[i] = cfg.adam_beta2 * vd[i] + (1.0 - cfg.adam_beta2) * gd[i] * gd[i];
    const double mhat = md[i] / bc1;
    const double vhat = vd[i] / bc2;
    pd[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

double squared_norm(const Matrix& g) {
  double acc = 0.0;
  const double* d = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) acc += d[i] * d[i];
  return acc;
}

void scale(Matrix& g, double factor) {
  double* d = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] *= factor;
}

bool all_finite(const Matrix& p) {
  const double* d = p.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(d[i])) return false;
  }
  return true;
}

}  // namespace

TrainResult train(const SynthTask& task, const TrainConfig& cfg) {
  cfg.validate();
  const SynthTaskConfig& tc = task.config();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 0.02);
  ToyModel model{Matrix(tc.vocab_size, cfg.embed_dim), Matrix(cfg.embed_dim, tc.vocab_size)};
  for (std::size_t i = 0; i < model.embed.size(); ++i) model.embed.data()[i] = init(rng);
  for (std::size_t i = 0; i < model.out_proj.size(); ++i) model.out_proj.data()[i] = init(rng);

  AdamState embed_state(model.embed);
  AdamState proj_state(model.out_proj);

  const Dataset& train_set = task.train_set();
  const int n = static_cast<int>(train_set.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = cfg.epochs * steps_per_epoch;

  TrainHistory history;
  history.lr_trace.reserve(static_cast<std::size_t>(total_steps));
  history.post_clip_norms.reserve(static_cast<std::size_t>(total_steps));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(draw_below(rng, i + 1))]);
    }

    LossBreakdown epoch_loss;
    for (int start = 0; start < n; start += cfg.batch_size) {
      ++step;
      const int end = std::min(start + cfg.batch_size, n);
      const double inv_batch = 1.0 / static_cast<double>(end - start);

      ParamGrads grads{Matrix(model.embed.rows(), model.embed.cols()),
                       Matrix(model.out_proj.rows(), model.out_proj.cols())};
      LossBreakdown batch_loss;
      for (int i = start; i < end; ++i) {
        const Example& ex = train_set[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        // Exploding parameters can overflow the logits while the parameters
        // themselves are still finite, in which case the loss rejects its
        // input before the post-update scan below ever sees the blow-up.
        const BackwardResult res = [&] {
          try {
            return backward(model, ex.context, ex.target, cfg.sced, cfg.weights);
          } catch (const std::invalid_argument& e) {
            throw divergence_error(step, "training diverged at step " + std::to_string(step) +
                                             ": " + e.what());
          }
        }();
        batch_loss.ce += res.loss.ce;
        batch_loss.sced += res.loss.sced;
        batch_loss.kl += res.loss.kl;
        batch_loss.total += res.loss.total;
        for (std::size_t j = 0; j < grads.embed.size(); ++j) {
          grads.embed.data()[j] += inv_batch * res.grads.embed.data()[j];
        }
        for (std::size_t j = 0; j < grads.out_proj.size(); ++j) {
          grads.out_proj.data()[j] += inv_batch * res.grads.out_proj.data()[j];
        }
      }
      batch_loss.ce *= inv_batch;
      batch_loss.sced *= inv_batch;
      batch_loss.kl *= inv_batch;
      batch_loss.total *= inv_batch;
      if (!std::isfinite(batch_loss.total)) {
        throw divergence_error(step, "training diverged at step " + std::to_string(step) +
                                         ": non-finite loss");
      }

      const double norm = std::sqrt(squared_norm(grads.embed) + squared_norm(grads.out_proj));
      double post_clip = norm;
      if (norm > cfg.max_grad_norm) {
        const double factor = cfg.max_grad_norm / norm;
        scale(grads.embed, factor);
        scale(grads.out_proj, factor);
        post_clip = cfg.max_grad_norm;
      }
      history.post_clip_norms.push_back(post_clip);

      const double lr = schedule_lr(cfg.lr, step, cfg.warmup_steps, total_steps);
      history.lr_trace.push_back(lr);
      adamw_update(model.embed, grads.embed, embed_state, cfg, lr, step);
      adamw_update(model.out_proj, grads.out_proj, proj_state, cfg, lr, step);
      if (!all_finite(model.embed) || !all_finite(model.out_proj)) {
        throw divergence_error(step, "training diverged at step " + std::to_string(step) +
                                         ": non-finite parameter");
      }

      epoch_loss.ce += batch_loss.ce;
      epoch_loss.sced += batch_loss.sced;
      epoch_loss.kl += batch_loss.kl;
      epoch_loss.total += batch_loss.total;
    }

    const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
    epoch_loss.ce *= inv_steps;
    epoch_loss.sced *= inv_steps;
    epoch_loss.kl *= inv_steps;
    epoch_loss.total *= inv_steps;
    history.epochs.push_back(EpochRecord{epoch_loss, evaluate(model, task.eval_set(), cfg.topk)});
  }
  return TrainResult{std::move(model), std::move(history)};
}

MetricsReport evaluate(const ToyModel& model, const Dataset& ds, int topk) {
  if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<ScoredPrediction> items;
  items.reserve(ds.size());
  for (const Example& ex : ds) {
    const std::vector<double> logits = forward(model, ex.context);
    LogitSeq z(1, static_cast<int>(logits.size()));
    for (int v = 0; v < z.cols(); ++v) z(0, v) = logits[static_cast<std::size_t>(v)];
    const ProbSeq p = softmax(z);
    ScoredPrediction item;
    item.probs.assign(p.row(0).begin(), p.row(0).end());
    item.predicted = argmax_lowest(item.probs);
    item.gold = ex.target;
    items.push_back(std::move(item));
  }
  return report(items, topk);
}

void save_model(const std::filesystem::path& path, const ToyModel& model) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(model.embed.data()),
              static_cast<std::streamsize>(model.embed.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.out_proj.data()),
              static_cast<std::streamsize>(model.out_proj.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_model: write failed for " + path.string());
  }
  std::ofstream shape(path.string() + ".shape");
  if (!shape) throw std::runtime_error("save_model: cannot open shape sidecar");
  shape << model.vocab() << ' ' << model.dim() << '\n';
  if (!shape) throw std::runtime_error("save_model: shape sidecar write failed");
}

ToyModel load_model(const std::filesystem::path& path) {
  std::ifstream shape(path.string() + ".shape");
  if (!shape) throw std::runtime_error("load_model: missing shape sidecar for " + path.string());
  int vocab = 0, dim = 0;
  if (!(shape >> vocab >> dim) || vocab < 2 || dim < 1) {
    throw std::runtime_error("load_model: malformed shape sidecar for " + path.string());
  }

  ToyModel model{Matrix(vocab, dim), Matrix(dim, vocab)};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path.string());
  in.read(reinterpret_cast<char*>(model.embed.data()),
          static_cast<std::streamsize>(model.embed.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(model.out_proj.data()),
          static_cast<std::streamsize>(model.out_proj.size() * sizeof(double)));
  if (!in || in.gcount() != static_cast<std::streamsize>(model.out_proj.size() * sizeof(double))) {
    throw std::runtime_error("load_model: truncated weight file " + path.string());
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw std::runtime_error("load_model: trailing bytes in " + path.string());
  }
  return model;
}

}  // namespace caref
