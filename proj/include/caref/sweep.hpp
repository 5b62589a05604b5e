#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caref/config.hpp"
#include "caref/csv.hpp"
#include "caref/toy_model.hpp"

namespace caref {

/// Cartesian grid of objective settings, crossed with explicit seeds.
struct SweepGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> lambda_sceds;
  std::vector<double> lambda_kls;
  std::vector<std::uint64_t> seeds;

  void validate() const;  // every axis nonempty, alphas >= 1, betas/lambdas >= 0
  std::size_t cells() const;
};

/// One grid cell's outcome. Rows sort by (alpha, beta, lambda_sced,
/// lambda_kl, seed); diverged cells keep their key columns and a status.
struct RunRecord {
  double alpha = 0.0;
  double beta = 0.0;
  double lambda_sced = 0.0;
  double lambda_kl = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | diverged
  MetricsReport metrics;
  LossBreakdown final_loss;
  double wall_time_seconds = 0.0;
};

inline constexpr const char* kSweepCsvHeader =
    "alpha,beta,lambda_sced,lambda_kl,seed,status,accuracy,mean_entropy,"
    "mean_effective_support,mean_topk_mass,mean_kl_uniform,ce,sced,kl,total,"
    "wall_time_seconds";

inline constexpr const char* kHistoryCsvHeader =
    "epoch,ce,sced,kl,total,accuracy,mean_entropy,mean_effective_support";

SynthTaskConfig task_config_from(const KeyValueConfig& cfg);
TrainConfig train_config_from(const KeyValueConfig& cfg);
SweepGrid sweep_grid_from(const KeyValueConfig& cfg);

/// Runs every cell x seed over a shared task. Cells may run on up to `jobs`
/// worker threads; each run is self-contained and deterministic, and rows
/// come back sorted, so concurrency never changes anything but the
/// wall-time column. Diverged cells are recorded, not fatal.
std::vector<RunRecord> run_sweep(const SynthTask& task, const TrainConfig& base,
                                 const SweepGrid& grid, int jobs = 1);

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const RunRecord> records);

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Per-(alpha, beta) aggregation of a sweep CSV across seeds and lambda
/// settings; diverged rows are skipped. std is the population deviation, so
/// a single-run cell reports 0.
struct CellSummary {
  double alpha = 0.0;
  double beta = 0.0;
  int n = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double support_mean = 0.0;
  double support_std = 0.0;
};

/// Validates the header and every needed field; throws CsvError naming the
/// line on any mismatch.
std::vector<CellSummary> summarize_sweep(const CsvTable& table);

std::string render_summary_table(std::span<const CellSummary> cells);

}  // namespace caref
