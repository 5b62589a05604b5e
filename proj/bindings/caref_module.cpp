// Python bindings for the caref core. Matrices cross the boundary as nested
// lists of floats (row-major, steps x vocab); everything heavier than a loss
// evaluation stays on the C++ side and comes back as plain dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "caref/metrics.hpp"
#include "caref/objective.hpp"
#include "caref/toy_model.hpp"

namespace py = pybind11;

namespace {

using namespace caref;

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows) {
  if (rows.empty()) throw std::invalid_argument("expected at least one row");
  const int cols = static_cast<int>(rows.front().size());
  Matrix m(static_cast<int>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != cols) {
      throw std::invalid_argument("ragged rows");
    }
    for (int c = 0; c < cols; ++c) m(static_cast<int>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  return m;
}

Rows to_rows(const Matrix& m) {
  Rows out(static_cast<std::size_t>(m.rows()));
  for (int r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out[static_cast<std::size_t>(r)].assign(row.begin(), row.end());
  }
  return out;
}

UniformPrior prior_for(const Matrix& m) { return UniformPrior{Vocab{m.cols()}}; }

py::dict breakdown_dict(const LossBreakdown& l) {
  py::dict d;
  d["ce"] = l.ce;
  d["sced"] = l.sced;
  d["kl"] = l.kl;
  d["total"] = l.total;
  return d;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["mean_entropy"] = m.mean_entropy;
  d["mean_effective_support"] = m.mean_effective_support;
  d["mean_topk_mass"] = m.mean_topk_mass;
  d["mean_kl_uniform"] = m.mean_kl_uniform;
  d["topk"] = m.topk;
  d["n_items"] = m.n_items;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SCED loss family and CAREF composite objective";
  m.attr("__version__") = "0.1.0";
  m.attr("PROB_FLOOR") = kProbFloor;

  py::register_exception<divergence_error>(m, "DivergenceError", PyExc_RuntimeError);

  // distributions -----------------------------------------------------------
  m.def(
      "softmax", [](const Rows& z) { return to_rows(softmax(to_matrix(z))); }, py::arg("logits"),
      "Row-wise floored softmax of a steps x vocab logit table.");
  m.def(
      "log_softmax", [](const Rows& z) { return to_rows(log_softmax(to_matrix(z))); },
      py::arg("logits"), "Row-wise log-probabilities (unfloored).");
  m.def(
      "entropy", [](const std::vector<double>& row) { return entropy(row); }, py::arg("row"),
      "Shannon entropy of one probability row, in nats.");
  m.def(
      "validate",
      [](const Rows& p) -> py::object {
        const auto v = validate(to_matrix(p));
        if (!v) return py::none();
        return py::str(v->describe());
      },
      py::arg("probs"),
      "None when every row is a floored distribution, else a description of "
      "the first violation.");

  // losses and regularizers --------------------------------------------------
  m.def(
      "sced",
      [](const Rows& p, double alpha, double beta) {
        const Matrix probs = to_matrix(p);
        return sced(probs, ScedParams{alpha, beta}, prior_for(probs));
      },
      py::arg("probs"), py::arg("alpha") = 1.0, py::arg("beta") = 0.0,
      "Sum over entries of |P log(P/U)|^alpha * (1 - P)^beta against the "
      "uniform reference.");
  m.def(
      "kl_uniform",
      [](const Rows& p) {
        const Matrix probs = to_matrix(p);
        return kl_uniform(probs, prior_for(probs));
      },
      py::arg("probs"), "Summed KL divergence from the uniform reference.");
  m.def(
      "entropy_penalty", [](const Rows& p) { return entropy_penalty(to_matrix(p)); },
      py::arg("probs"), "Negated summed entropy (the flattening baseline).");
  m.def(
      "sparsemax", [](const std::vector<double>& z) { return sparsemax(z); }, py::arg("logits"),
      "Euclidean projection of one logit row onto the simplex.");
  m.def(
      "label_smoothing_ce",
      [](const Rows& z, const TargetSeq& y, double eps) {
        const Matrix logits = to_matrix(z);
        return label_smoothing_ce(logits, y, SmoothingEps{eps}, prior_for(logits));
      },
      py::arg("logits"), py::arg("targets"), py::arg("epsilon") = 0.0,
      "Cross entropy against the epsilon-smoothed target.");
  m.def(
      "cross_entropy",
      [](const Rows& z, const TargetSeq& y) { return cross_entropy(to_matrix(z), y); },
      py::arg("logits"), py::arg("targets"), "Summed negative log-likelihood.");

  // composite objective -------------------------------------------------------
  m.def(
      "caref_loss",
      [](const Rows& z, const TargetSeq& y, double alpha, double beta, double lambda_sced,
         double lambda_kl) {
        return breakdown_dict(caref_loss(to_matrix(z), y, ScedParams{alpha, beta},
                                         CarefWeights{lambda_sced, lambda_kl}));
      },
      py::arg("logits"), py::arg("targets"), py::arg("alpha") = 1.0, py::arg("beta") = 0.0,
      py::arg("lambda_sced") = 0.0, py::arg("lambda_kl") = 0.0,
      "Composite loss breakdown as {ce, sced, kl, total}.");
  m.def(
      "caref_grad",
      [](const Rows& z, const TargetSeq& y, double alpha, double beta, double lambda_sced,
         double lambda_kl) {
        return to_rows(caref_grad_wrt_logits(to_matrix(z), y, ScedParams{alpha, beta},
                                             CarefWeights{lambda_sced, lambda_kl}));
      },
      py::arg("logits"), py::arg("targets"), py::arg("alpha") = 1.0, py::arg("beta") = 0.0,
      py::arg("lambda_sced") = 0.0, py::arg("lambda_kl") = 0.0,
      "Analytic gradient of the composite loss with respect to the logits.");
  m.def(
      "gradient_audit",
      [](int instances, int max_steps, int max_vocab, double h, double threshold,
         std::uint64_t seed) {
        AuditConfig cfg;
        cfg.instances = instances;
        cfg.max_steps = max_steps;
        cfg.max_vocab = max_vocab;
        cfg.h = h;
        cfg.threshold = threshold;
        cfg.seed = seed;
        const AuditResult r = run_gradient_audit(cfg);
        py::dict d;
        d["pass"] = r.pass;
        d["cases"] = r.cases;
        d["worst_rel_error"] = r.worst_rel_error;
        d["max_row_sum_abs"] = r.max_row_sum_abs;
        return d;
      },
      py::arg("instances") = 100, py::arg("max_steps") = 4, py::arg("max_vocab") = 16,
      py::arg("h") = 1e-5, py::arg("threshold") = 1e-6, py::arg("seed") = 12022,
      "Finite-difference audit of the analytic gradient over random instances.");

  // metrics -------------------------------------------------------------------
  m.def(
      "effective_support", [](const std::vector<double>& row) { return effective_support(row); },
      py::arg("row"), "exp(entropy) of one probability row.");
  m.def(
      "topk_mass", [](const std::vector<double>& row, int k) { return topk_mass(row, k); },
      py::arg("row"), py::arg("k") = 5, "Probability mass on the k most likely entries.");

  // toy task and training ------------------------------------------------------
  m.def("schedule_lr", &schedule_lr, py::arg("base_lr"), py::arg("step"), py::arg("warmup"),
        py::arg("total_steps"), "Linear warmup then linear decay; steps are 1-based.");
  m.def(
      "train_toy",
      [](int vocab_size, int context_len, int relevant_k, double distractor_noise, int num_train,
         int num_eval, std::uint64_t task_seed, double lr, int batch_size, int epochs,
         int warmup_steps, int embed_dim, double alpha, double beta, double lambda_sced,
         double lambda_kl, std::uint64_t train_seed) {
        SynthTaskConfig tc;
        tc.vocab_size = vocab_size;
        tc.context_len = context_len;
        tc.relevant_k = relevant_k;
        tc.distractor_noise = distractor_noise;
        tc.num_train = num_train;
        tc.num_eval = num_eval;
        tc.seed = task_seed;
        const SynthTask task(tc);

        TrainConfig cfg;
        cfg.lr = lr;
        cfg.batch_size = batch_size;
        cfg.epochs = epochs;
        cfg.warmup_steps = warmup_steps;
        cfg.embed_dim = embed_dim;
        cfg.sced = ScedParams{alpha, beta};
        cfg.weights = CarefWeights{lambda_sced, lambda_kl};
        cfg.seed = train_seed;

        const TrainResult result = train(task, cfg);
        const EpochRecord& last = result.history.epochs.back();
        py::dict d;
        d["eval"] = metrics_dict(last.eval);
        d["train_loss"] = breakdown_dict(last.train_loss);
        d["bayes_accuracy"] = task.bayes_accuracy();
        d["epochs"] = static_cast<int>(result.history.epochs.size());
        d["steps"] = static_cast<int>(result.history.lr_trace.size());
        return d;
      },
      py::arg("vocab_size") = 16, py::arg("context_len") = 8, py::arg("relevant_k") = 2,
      py::arg("distractor_noise") = 0.0, py::arg("num_train") = 256, py::arg("num_eval") = 512,
      py::arg("task_seed") = 1, py::arg("lr") = 1e-2, py::arg("batch_size") = 4,
      py::arg("epochs") = 50, py::arg("warmup_steps") = 500, py::arg("embed_dim") = 16,
      py::arg("alpha") = 1.0, py::arg("beta") = 0.0, py::arg("lambda_sced") = 0.0,
      py::arg("lambda_kl") = 0.0, py::arg("train_seed") = 2,
      "Trains the linear bag-of-embeddings model on the synthetic task and "
      "returns the final epoch's evaluation.");
}
