#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deft/adapt.hpp"
#include "deft/baselines.hpp"
#include "deft/dataset.hpp"
#include "deft/detector.hpp"
#include "deft/noise.hpp"
#include "deft/synthetic.hpp"

namespace deft {

enum class Strategy { deft, label_match, small_loss, gmm };

const char* to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);

enum class ReportFormat { csv, jsonl };

const char* to_string(ReportFormat format);
ReportFormat report_format_from_string(const std::string& name);

/// Adapter learned alongside the detector during phase 1.
struct AdapterConfig {
  AdapterMode mode = AdapterMode::low_rank;
  std::size_t rank = 8;
  double residual_scale = 0.1;
};

/// Exactly one of `synthetic` and `train_path` must be set.
struct DataConfig {
  std::optional<SyntheticConfig> synthetic;
  std::size_t synthetic_test_n = 1000;
  std::optional<std::string> train_path;
  std::optional<std::string> test_path;

  void validate() const;
};

struct ExperimentConfig {
  DataConfig data;
  NoiseFamily noise_family = NoiseFamily::symmetric;
  double noise_ratio = 0.0;
  Strategy strategy = Strategy::deft;
  DetectorConfig detector;
  AdapterConfig detector_adapter;
  Phase2Config phase2;
  bool bake_phase1_adapter = false;  // fold the learned adapter into embeddings before phase 2
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "runs/out";
  ReportFormat format = ReportFormat::csv;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);
/// Reads a config file; manifests (objects carrying a "config" key) load the
/// embedded config, so a previous run reproduces from its own manifest.
ExperimentConfig load_experiment_config(const std::string& path);
/// FNV-1a over the canonical JSON serialization.
std::uint64_t config_hash(const ExperimentConfig& config);

/// One line of a report: a seed replicate, an aggregate, or a delta row.
struct RunRow {
  std::string row_label;  // seed number, "mean", "std" or "delta"
  std::string strategy;
  std::string noise_family;
  std::optional<double> n_train;
  std::optional<double> n_test;
  std::optional<double> target_ratio;
  std::optional<double> realized_ratio;
  std::optional<double> n_selected;
  std::optional<double> n_true_clean;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> acc_best;
  std::optional<double> acc_last;
};

struct RunReport {
  std::vector<RunRow> rows;  // one per seed, then mean and std
};

/// Aggregate (mean, then sample std) rows computed from the per-seed rows.
std::pair<RunRow, RunRow> aggregate_rows(const std::vector<RunRow>& rows);

void write_report_csv(const std::vector<RunRow>& rows, const std::string& path);
void write_report_jsonl(const std::vector<RunRow>& rows, const std::string& path);
std::string report_to_string(const std::vector<RunRow>& rows, ReportFormat format);

/// End-to-end pipeline: data -> noise -> selection strategy -> metrics ->
/// phase-2 adaptation -> best/last accuracy. Per-seed artifacts (masks,
/// traces, checkpoints, noise spec) and report.csv/report.jsonl plus
/// manifest.json land under config.out_dir. Deterministic per config.
RunReport run_experiment(const ExperimentConfig& config);

struct ComparisonReport {
  std::vector<RunRow> rows;  // per strategy: seeds + aggregates; then deltas
};

/// Runs several strategies over the same per-seed datasets and noise
/// realizations, then appends delta-vs-small-loss rows when small_loss is
/// among the strategies.
ComparisonReport compare_strategies(const ExperimentConfig& config,
                                    const std::vector<Strategy>& strategies);

/// The frozen desk benchmark: 5000 train + 1000 test samples, 64 dimensions,
/// 10 classes, seeds 0-4.
SyntheticConfig bench_std_synthetic();
ExperimentConfig bench_std_experiment(NoiseFamily family, double ratio, Strategy strategy);

/// JSON sidecar for a noise realization.
void write_noise_spec(const NoiseSpec& spec, const std::string& path);

}  // namespace deft
