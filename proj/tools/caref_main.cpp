#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "caref/config.hpp"
#include "caref/csv.hpp"
#include "caref/objective.hpp"
#include "caref/sweep.hpp"
#include "caref/toy_model.hpp"

namespace fs = std::filesystem;

namespace {

caref::AuditConfig audit_config_from(const caref::KeyValueConfig& cf) {
  caref::AuditConfig cfg;
  if (cf.has("alphas")) cfg.alphas = cf.get_double_list("alphas");
  if (cf.has("betas")) cfg.betas = cf.get_double_list("betas");
  cfg.instances = static_cast<int>(cf.get_int("instances", cfg.instances));
  cfg.max_steps = static_cast<int>(cf.get_int("max_steps", cfg.max_steps));
  cfg.max_vocab = static_cast<int>(cf.get_int("max_vocab", cfg.max_vocab));
  cfg.h = cf.get_double("h", cfg.h);
  cfg.threshold = cf.get_double("threshold", cfg.threshold);
  cfg.lambda_sced = cf.get_double("lambda_sced", cfg.lambda_sced);
  cfg.lambda_kl = cf.get_double("lambda_kl", cfg.lambda_kl);
  cfg.kink_tolerance = cf.get_double("kink_tolerance", cfg.kink_tolerance);
  cfg.seed = static_cast<std::uint64_t>(cf.get_int("seed", static_cast<std::int64_t>(cfg.seed)));
  return cfg;
}

int cmd_gradcheck(const std::string& config_path, bool has_threshold, double threshold) {
  caref::AuditConfig cfg = audit_config_from(caref::KeyValueConfig::parse_file(config_path));
  if (has_threshold) cfg.threshold = threshold;

  const caref::AuditResult result = caref::run_gradient_audit(cfg);
  std::printf("cases:           %d  (%d instances x %zu alphas x %zu betas)\n", result.cases,
              cfg.instances, cfg.alphas.size(), cfg.betas.size());
  std::printf("worst rel error: %.6e  (instance %d, alpha=%g, beta=%g, t=%d, v=%d)\n",
              result.worst_rel_error, result.worst.instance, result.worst.alpha,
              result.worst.beta, result.worst.report.worst_t, result.worst.report.worst_v);
  std::printf("worst case:      %d coords checked, %d excluded as kink rows, h=%g\n",
              result.worst.report.checked, result.worst.report.excluded,
              result.worst.report.step_size);
  std::printf("max |row sum|:   %.6e  (tolerance 1e-09)\n", result.max_row_sum_abs);
  std::printf("threshold:       %g\n", cfg.threshold);
  std::printf("%s\n", result.pass ? "PASS" : "FAIL");
  return result.pass ? 0 : 1;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const caref::KeyValueConfig cf = caref::KeyValueConfig::parse_file(config_path);
  const caref::SynthTask task(caref::task_config_from(cf));
  const caref::TrainConfig cfg = caref::train_config_from(cf);

  fs::create_directories(out_dir);
  const caref::TrainResult result = caref::train(task, cfg);

  const fs::path out(out_dir);
  caref::write_history_csv(out / "history.csv", result.history);
  caref::save_model(out / "model.bin", result.model);
  caref::write_dataset(out / "train.txt", task.train_set());
  caref::write_dataset(out / "eval.txt", task.eval_set());

  const caref::EpochRecord& last = result.history.epochs.back();
  std::printf("epochs:           %zu  (%zu optimizer steps)\n", result.history.epochs.size(),
              result.history.lr_trace.size());
  std::printf("final train loss: ce=%.6f sced=%.6f kl=%.6f total=%.6f\n", last.train_loss.ce,
              last.train_loss.sced, last.train_loss.kl, last.train_loss.total);
  std::printf("final eval:       accuracy=%.4f entropy=%.4f eff_support=%.4f top%d_mass=%.4f\n",
              last.eval.accuracy, last.eval.mean_entropy, last.eval.mean_effective_support,
              last.eval.topk, last.eval.mean_topk_mass);
  std::printf("bayes accuracy:   %.4f\n", task.bayes_accuracy());
  std::printf("wrote history.csv, model.bin, model.bin.shape, train.txt, eval.txt to %s\n",
              out_dir.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_csv, int jobs) {
  const caref::KeyValueConfig cf = caref::KeyValueConfig::parse_file(config_path);
  const caref::SynthTask task(caref::task_config_from(cf));
  const caref::TrainConfig base = caref::train_config_from(cf);
  const caref::SweepGrid grid = caref::sweep_grid_from(cf);

  const std::vector<caref::RunRecord> records = caref::run_sweep(task, base, grid, jobs);
  caref::write_sweep_csv(out_csv, records);

  int diverged = 0;
  for (const caref::RunRecord& r : records) {
    if (r.status != "ok") ++diverged;
  }
  std::printf("ran %zu cells (%d diverged) -> %s\n", records.size(), diverged, out_csv.c_str());
  return 0;
}

int cmd_report(const std::string& csv_path, const std::string& out_json) {
  const caref::CsvTable table = caref::read_csv(csv_path);
  const std::vector<caref::CellSummary> cells = caref::summarize_sweep(table);
  std::cout << caref::render_summary_table(cells);

  if (!out_json.empty()) {
    nlohmann::json doc;
    doc["cells"] = nlohmann::json::array();
    for (const caref::CellSummary& c : cells) {
      doc["cells"].push_back({{"alpha", c.alpha},
                              {"beta", c.beta},
                              {"n", c.n},
                              {"accuracy_mean", c.accuracy_mean},
                              {"accuracy_std", c.accuracy_std},
                              {"support_mean", c.support_mean},
                              {"support_std", c.support_std}});
    }
    std::ofstream out(out_json);
    if (!out) throw std::runtime_error("report: cannot open " + out_json + " for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("report: write failed for " + out_json);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SCED loss and CAREF composite-objective toolkit"};
  app.require_subcommand(1);

  std::string g_config;
  double g_threshold = 0.0;
  CLI::App* grad = app.add_subcommand("gradcheck", "Audit analytic gradients against central differences");
  grad->add_option("--config", g_config, "key = value audit settings")->required();
  grad->add_option("--threshold", g_threshold, "override the relative-error threshold");

  std::string t_config, t_out;
  CLI::App* train = app.add_subcommand("train", "Train the toy model on the synthetic task");
  train->add_option("--config", t_config, "key = value task and training settings")->required();
  train->add_option("--out", t_out, "output directory for history, model, and datasets")
      ->required();

  std::string s_config, s_out;
  int s_jobs = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "Run the objective grid and write one CSV row per run");
  sweep->add_option("--config", s_config, "key = value grid, task, and training settings")
      ->required();
  sweep->add_option("--out", s_out, "output CSV path")->required();
  sweep->add_option("--jobs", s_jobs, "worker threads (results are order-independent)");

  std::string r_csv, r_out;
  CLI::App* report = app.add_subcommand("report", "Summarize a sweep CSV per (alpha, beta) cell");
  report->add_option("csv", r_csv, "sweep CSV produced by the sweep subcommand")->required();
  report->add_option("--out", r_out, "also write the summary as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (grad->parsed()) return cmd_gradcheck(g_config, grad->count("--threshold") > 0, g_threshold);
    if (train->parsed()) return cmd_train(t_config, t_out);
    if (sweep->parsed()) return cmd_sweep(s_config, s_out, s_jobs);
    if (report->parsed()) return cmd_report(r_csv, r_out);
  } catch (const caref::divergence_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;  // unreachable: require_subcommand(1) guarantees one branch above
}
