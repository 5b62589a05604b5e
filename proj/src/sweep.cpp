#include "caref/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace caref {

void SweepGrid::validate() const {
  if (alphas.empty() || betas.empty() || lambda_sceds.empty() || lambda_kls.empty() ||
      seeds.empty()) {
    throw std::invalid_argument("SweepGrid: every axis needs at least one value");
  }
  for (double a : alphas) {
    if (!std::isfinite(a) || a < 1.0) {
      throw std::invalid_argument("SweepGrid: alphas must be finite and >= 1");
    }
  }
  for (double b : betas) {
    if (!std::isfinite(b) || b < 0.0) {
      throw std::invalid_argument("SweepGrid: betas must be finite and >= 0");
    }
  }
  for (double l : lambda_sceds) {
    if (!std::isfinite(l) || l < 0.0) {
      throw std::invalid_argument("SweepGrid: lambda_sceds must be finite and >= 0");
    }
  }
  for (double l : lambda_kls) {
    if (!std::isfinite(l) || l < 0.0) {
      throw std::invalid_argument("SweepGrid: lambda_kls must be finite and >= 0");
    }
  }
}

std::size_t SweepGrid::cells() const {
  return alphas.size() * betas.size() * lambda_sceds.size() * lambda_kls.size() * seeds.size();
}

SynthTaskConfig task_config_from(const KeyValueConfig& cfg) {
  SynthTaskConfig tc;
  tc.vocab_size = static_cast<int>(cfg.get_int("vocab_size", tc.vocab_size));
  tc.context_len = static_cast<int>(cfg.get_int("context_len", tc.context_len));
  tc.relevant_k = static_cast<int>(cfg.get_int("relevant_k", tc.relevant_k));
  tc.distractor_noise = cfg.get_double("distractor_noise", tc.distractor_noise);
  tc.num_train = static_cast<int>(cfg.get_int("num_train", tc.num_train));
  tc.num_eval = static_cast<int>(cfg.get_int("num_eval", tc.num_eval));
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("task_seed", static_cast<std::int64_t>(tc.seed)));
  tc.validate();
  return tc;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig tr;
  tr.lr = cfg.get_double("lr", tr.lr);
  tr.batch_size = static_cast<int>(cfg.get_int("batch_size", tr.batch_size));
  tr.epochs = static_cast<int>(cfg.get_int("epochs", tr.epochs));
  tr.warmup_steps = static_cast<int>(cfg.get_int("warmup_steps", tr.warmup_steps));
  tr.adam_beta1 = cfg.get_double("adam_beta1", tr.adam_beta1);
  tr.adam_beta2 = cfg.get_double("adam_beta2", tr.adam_beta2);
  tr.adam_eps = cfg.get_double("adam_eps", tr.adam_eps);
  tr.weight_decay = cfg.get_double("weight_decay", tr.weight_decay);
  tr.max_grad_norm = cfg.get_double("max_grad_norm", tr.max_grad_norm);
  tr.embed_dim = static_cast<int>(cfg.get_int("embed_dim", tr.embed_dim));
  tr.sced = ScedParams{cfg.get_double("alpha", tr.sced.alpha),
                       cfg.get_double("beta", tr.sced.beta)};
  tr.weights = CarefWeights{cfg.get_double("lambda_sced", tr.weights.lambda_sced),
                            cfg.get_double("lambda_kl", tr.weights.lambda_kl)};
  tr.seed = static_cast<std::uint64_t>(
      cfg.get_int("train_seed", static_cast<std::int64_t>(tr.seed)));
  tr.topk = static_cast<int>(cfg.get_int("topk", tr.topk));
  tr.validate();
  return tr;
}

SweepGrid sweep_grid_from(const KeyValueConfig& cfg) {
  SweepGrid grid;
  grid.alphas = cfg.get_double_list("alphas");
  grid.betas = cfg.get_double_list("betas");
  grid.lambda_sceds = cfg.get_double_list("lambda_sceds");
  grid.lambda_kls = cfg.get_double_list("lambda_kls");
  for (std::int64_t s : cfg.get_int_list("seeds")) {
    if (s < 0) throw std::invalid_argument("SweepGrid: seeds must be >= 0");
    grid.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  grid.validate();
  return grid;
}

namespace {

RunRecord run_cell(const SynthTask& task, const TrainConfig& base, double alpha, double beta,
                   double lambda_sced, double lambda_kl, std::uint64_t seed) {
  RunRecord rec;
  rec.alpha = alpha;
  rec.beta = beta;
  rec.lambda_sced = lambda_sced;
  rec.lambda_kl = lambda_kl;
  rec.seed = seed;

  TrainConfig cfg = base;
  cfg.sced = ScedParams{alpha, beta};
  cfg.weights = CarefWeights{lambda_sced, lambda_kl};
  cfg.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const TrainResult result = train(task, cfg);
    rec.metrics = result.history.epochs.back().eval;
    rec.final_loss = result.history.epochs.back().train_loss;
  } catch (const divergence_error&) {
    rec.status = "diverged";
  }
  rec.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace

std::vector<RunRecord> run_sweep(const SynthTask& task, const TrainConfig& base,
                                 const SweepGrid& grid, int jobs) {
  grid.validate();
  base.validate();
  if (jobs < 1) throw std::invalid_argument("run_sweep: jobs must be >= 1");

  struct Cell {
    double alpha, beta, lambda_sced, lambda_kl;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  cells.reserve(grid.cells());
  for (double a : grid.alphas) {
    for (double b : grid.betas) {
      for (double ls : grid.lambda_sceds) {
        for (double lk : grid.lambda_kls) {
          for (std::uint64_t s : grid.seeds) cells.push_back(Cell{a, b, ls, lk, s});
        }
      }
    }
  }

  std::vector<RunRecord> records(cells.size());
  const int workers = std::min<int>(jobs, static_cast<int>(cells.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Cell& c = cells[i];
      records[i] = run_cell(task, base, c.alpha, c.beta, c.lambda_sced, c.lambda_kl, c.seed);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          const Cell& c = cells[i];
          records[i] = run_cell(task, base, c.alpha, c.beta, c.lambda_sced, c.lambda_kl, c.seed);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  std::sort(records.begin(), records.end(), [](const RunRecord& x, const RunRecord& y) {
    return std::tie(x.alpha, x.beta, x.lambda_sced, x.lambda_kl, x.seed) <
           std::tie(y.alpha, y.beta, y.lambda_sced, y.lambda_kl, y.seed);
  });
  return records;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const RunRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError(-1, "cannot open " + path.string() + " for writing");
  out << kSweepCsvHeader << '\n';
  for (const RunRecord& r : records) {
    const std::vector<std::string> fields{
        format_double(r.alpha),
        format_double(r.beta),
        format_double(r.lambda_sced),
        format_double(r.lambda_kl),
        std::to_string(r.seed),
        r.status,
        format_double(r.metrics.accuracy),
        format_double(r.metrics.mean_entropy),
        format_double(r.metrics.mean_effective_support),
        format_double(r.metrics.mean_topk_mass),
        format_double(r.metrics.mean_kl_uniform),
        format_double(r.final_loss.ce),
        format_double(r.final_loss.sced),
        format_double(r.final_loss.kl),
        format_double(r.final_loss.total),
        format_double(r.wall_time_seconds),
    };
    write_csv_row(out, fields);
  }
  if (!out) throw CsvError(-1, "write failed for " + path.string());
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError(-1, "cannot open " + path.string() + " for writing");
  out << kHistoryCsvHeader << '\n';
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochRecord& rec = history.epochs[e];
    const std::vector<std::string> fields{
        std::to_string(e + 1),
        format_double(rec.train_loss.ce),
        format_double(rec.train_loss.sced),
        format_double(rec.train_loss.kl),
        format_double(rec.train_loss.total),
        format_double(rec.eval.accuracy),
        format_double(rec.eval.mean_entropy),
        format_double(rec.eval.mean_effective_support),
    };
    write_csv_row(out, fields);
  }
  if (!out) throw CsvError(-1, "write failed for " + path.string());
}

namespace {

std::vector<std::string> split_header(const char* header) {
  std::vector<std::string> out;
  std::istringstream in(header);
  std::string field;
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::vector<CellSummary> summarize_sweep(const CsvTable& table) {
  const std::vector<std::string> expected = split_header(kSweepCsvHeader);
  if (table.header != expected) {
    throw CsvError(1, "line 1: unexpected sweep CSV header");
  }
  const auto col = [&](const char* name) {
    return static_cast<std::size_t>(
        std::find(expected.begin(), expected.end(), name) - expected.begin());
  };
  const std::size_t c_alpha = col("alpha");
  const std::size_t c_beta = col("beta");
  const std::size_t c_status = col("status");
  const std::size_t c_acc = col("accuracy");
  const std::size_t c_supp = col("mean_effective_support");

  std::map<std::pair<double, double>, std::vector<std::pair<double, double>>> groups;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const int line = static_cast<int>(r) + 2;  // header occupies line 1
    const std::vector<std::string>& row = table.rows[r];
    const std::string& status = row[c_status];
    if (status != "ok" && status != "diverged") {
      throw CsvError(line, "line " + std::to_string(line) + ": unknown status '" + status + "'");
    }
    try {
      const double alpha = parse_double(row[c_alpha]);
      const double beta = parse_double(row[c_beta]);
      if (status == "ok") {
        groups[{alpha, beta}].emplace_back(parse_double(row[c_acc]), parse_double(row[c_supp]));
      } else {
        groups[{alpha, beta}];  // keep the cell visible even if every run diverged
      }
    } catch (const std::invalid_argument& e) {
      throw CsvError(line, "line " + std::to_string(line) + ": " + e.what());
    }
  }

  std::vector<CellSummary> out;
  out.reserve(groups.size());
  for (const auto& [key, runs] : groups) {
    CellSummary cell;
    cell.alpha = key.first;
    cell.beta = key.second;
    cell.n = static_cast<int>(runs.size());
    if (!runs.empty()) {
      for (const auto& [acc, supp] : runs) {
        cell.accuracy_mean += acc;
        cell.support_mean += supp;
      }
      cell.accuracy_mean /= cell.n;
      cell.support_mean /= cell.n;
      double acc_var = 0.0, supp_var = 0.0;
      for (const auto& [acc, supp] : runs) {
        acc_var += (acc - cell.accuracy_mean) * (acc - cell.accuracy_mean);
        supp_var += (supp - cell.support_mean) * (supp - cell.support_mean);
      }
      cell.accuracy_std = std::sqrt(acc_var / cell.n);
      cell.support_std = std::sqrt(supp_var / cell.n);
    }
    out.push_back(cell);
  }
  return out;
}

std::string render_summary_table(std::span<const CellSummary> cells) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s%-8s%-6s%-22s%-22s\n", "alpha", "beta", "n",
                "accuracy", "eff_support");
  out += line;
  for (const CellSummary& c : cells) {
    std::snprintf(line, sizeof(line), "%-8g%-8g%-6d%.4f +/- %-11.4f%.4f +/- %-11.4f\n",
                  c.alpha, c.beta, c.n, c.accuracy_mean, c.accuracy_std, c.support_mean,
                  c.support_std);
    out += line;
  }
  return out;
}

}  // namespace caref
