#pragma once

#include "frontdoor/config.hpp"
#include "frontdoor/frontdoor.hpp"
#include "frontdoor/scm.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace frontdoor {

struct ScmVerifyOptions {
  std::string treatment = "X";
  std::string outcome = "Y";
  std::string mediator = "Z";
  /// Back-door adjustment set; empty skips the back-door estimate.
  std::vector<std::string> adjust;
};

/// JSON diagnostics: criterion report, front-door and back-door estimates,
/// interventional truth from the mutilated model and the observational
/// conditional, per treatment value.
std::string cmd_scm_verify(const scm::DiscreteScm& model, const ScmVerifyOptions& options);

/// Trained NST models keyed by everything that determines them, shared
/// across configs and threads. With a directory, models persist as
/// checkpoints and are reloaded on later runs.
class NstCache {
 public:
  explicit NstCache(std::filesystem::path dir = {});

  const NstModel& get(const ExperimentConfig& config, const bench::Dataset& data, int heldout);
  /// Checkpoint file name for a fold under this cache directory.
  std::filesystem::path path_for(const ExperimentConfig& config, const bench::Dataset& data, int heldout) const;
  NstProvider provider(const ExperimentConfig& config, const bench::Dataset& data);

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<NstModel> model;
  };
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

/// Datasets keyed by their generation config.
class DatasetCache {
 public:
  const bench::Dataset& get(const ExperimentConfig& config);

 private:
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<bench::Dataset>> entries_;
};

struct RunReport {
  LodoResult result;
  std::string summary;
  std::string metrics_csv;
  std::string config_echo;
  double wall_seconds = 0.0;
};

RunReport cmd_run(const ExperimentConfig& config, const bench::Dataset& data, int jobs, NstCache& nst);
/// Writes summary.json, metrics.csv, config.txt and run_report.json.
void write_run_report(const std::filesystem::path& dir, const RunReport& report);

struct AblationRow {
  std::string sweep;
  double value = 0.0;
  std::string sampling;
  int repeat = 0;
  std::uint64_t seed = 0;
  double mean_test_acc = 0.0;
  double mean_val_acc = 0.0;
};

/// One LODO run per (value, repeat[, sampling]). Sweeping k covers both
/// sampling strategies; repeat r uses master seed config.seed + r.
std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config, const std::string& sweep,
                                    const std::vector<double>& values, int repeats, int jobs, NstCache& nst,
                                    DatasetCache& data);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct GridCell {
  double alpha = 0.0;
  double beta = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  GridCell best;
};

/// Highest validation accuracy; ties go to smaller alpha, then smaller beta.
GridCell select_best(const std::vector<GridCell>& cells);
GridResult cmd_gridsearch(const ExperimentConfig& config, const std::vector<double>& alphas,
                          const std::vector<double>& betas, int jobs, NstCache& nst, DatasetCache& data);
std::string grid_csv(const GridResult& result);

/// lo, lo + step, ..., hi (inclusive within 1e-9).
std::vector<double> make_grid(double lo, double hi, double step);

}  // namespace frontdoor
