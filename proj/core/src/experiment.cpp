#include "deft/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deft/error.hpp"
#include "deft/format.hpp"
#include "deft/metrics.hpp"
#include "deft/rng.hpp"
#include "deft/version.hpp"

namespace deft {

namespace {

using nlohmann::json;

// Seed sub-stream tags for one replicate.
enum : std::uint64_t {
  kStreamData = 101,
  kStreamNoise = 102,
  kStreamDetector = 103,
  kStreamAdapterInit = 104,
  kStreamPhase2 = 105,
  kStreamProbe = 106,
  kStreamBatches = 107,
  kStreamGmm = 108,
};

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    hash ^= static_cast<std::uint8_t>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out << text;
  if (!out.good()) {
    throw IoError("failed writing " + path);
  }
}

struct PreparedData {
  LabeledDataset train;
  std::optional<LabeledDataset> test;
  std::optional<Matrix> anchors;  // oracle text anchors for synthetic sources
  NoiseSpec noise;
};

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  PreparedData prepared;
  if (config.data.synthetic) {
    SyntheticConfig synth = *config.data.synthetic;
    const std::size_t train_n = synth.n;
    synth.n = train_n + config.data.synthetic_test_n;
    synth.seed = derive_seed(seed, kStreamData);
    SyntheticData generated = generate_synthetic(synth);
    prepared.anchors = std::move(generated.text_anchors);

    LabeledDataset& full = generated.dataset;
    LabeledDataset train;
    train.n = train_n;
    train.dim = full.dim;
    train.num_classes = full.num_classes;
    train.class_names = full.class_names;
    train.normalized = full.normalized;
    train.features.assign(full.features.begin(),
                          full.features.begin() + static_cast<std::ptrdiff_t>(train_n * full.dim));
    train.given_labels.assign(full.given_labels.begin(),
                              full.given_labels.begin() + static_cast<std::ptrdiff_t>(train_n));
    train.true_labels = std::vector<std::uint32_t>(
        full.true_labels->begin(), full.true_labels->begin() + static_cast<std::ptrdiff_t>(train_n));
    prepared.train = std::move(train);

    if (config.data.synthetic_test_n > 0) {
      LabeledDataset test;
      test.n = config.data.synthetic_test_n;
      test.dim = full.dim;
      test.num_classes = full.num_classes;
      test.class_names = full.class_names;
      test.normalized = full.normalized;
      test.features.assign(full.features.begin() + static_cast<std::ptrdiff_t>(train_n * full.dim),
                           full.features.end());
      test.given_labels.assign(full.given_labels.begin() + static_cast<std::ptrdiff_t>(train_n),
                               full.given_labels.end());
      test.true_labels = std::vector<std::uint32_t>(
          full.true_labels->begin() + static_cast<std::ptrdiff_t>(train_n), full.true_labels->end());
      prepared.test = std::move(test);
    }
  } else {
    prepared.train = load_embeddings(*config.data.train_path, format_from_path(*config.data.train_path));
    if (config.data.test_path) {
      prepared.test = load_embeddings(*config.data.test_path, format_from_path(*config.data.test_path));
    }
  }

  if (config.noise_ratio > 0.0 && prepared.train.has_true_labels()) {
    const std::uint64_t noise_seed = derive_seed(seed, kStreamNoise);
    auto [noisy, spec] = config.noise_family == NoiseFamily::symmetric
                             ? inject_symmetric_noise(prepared.train, config.noise_ratio, noise_seed)
                             : inject_instance_noise(prepared.train, config.noise_ratio, noise_seed);
    prepared.train = std::move(noisy);
    prepared.noise = std::move(spec);
  } else {
    // Ratio zero, or a file dataset without stored truth: take the labels as
    // they are. With truth present the realized ratio is measured; without
    // it the configured ratio stands in as the assumed corruption level.
    prepared.noise = describe_existing_noise(prepared.train, config.noise_family, config.noise_ratio);
  }
  return prepared;
}

Matrix class_mean_anchors(const LabeledDataset& ds, std::uint64_t seed) {
  return init_prompts(ds, seed).positive;
}

struct StrategyOutcome {
  Mask mask;
  std::vector<DetectorEpochStats> detector_trace;  // deft only
  std::optional<AdapterParams> phase1_adapter;     // deft only
};

StrategyOutcome run_strategy(const ExperimentConfig& config, Strategy strategy,
                             const PreparedData& prepared, std::uint64_t seed) {
  const LabeledDataset& train = prepared.train;
  StrategyOutcome outcome;
  switch (strategy) {
    case Strategy::deft: {
      DetectorConfig det = config.detector;
      det.seed = derive_seed(seed, kStreamDetector);
      AdapterParams adapter = AdapterParams::make_identity(train.dim);
      if (config.detector_adapter.mode == AdapterMode::low_rank) {
        adapter = AdapterParams::make_low_rank(train.dim, config.detector_adapter.rank,
                                               config.detector_adapter.residual_scale,
                                               derive_seed(seed, kStreamAdapterInit));
      } else if (config.detector_adapter.mode == AdapterMode::full) {
        adapter = AdapterParams::make_full(train.dim);
      }
      DetectorResult result = train_detector(train, det, std::move(adapter));
      outcome.mask = std::move(result.selection.clean_mask);
      outcome.detector_trace = std::move(result.trace);
      outcome.phase1_adapter = std::move(result.adapter);
      return outcome;
    }
    case Strategy::label_match: {
      const Matrix anchors = prepared.anchors
                                 ? *prepared.anchors
                                 : class_mean_anchors(train, derive_seed(seed, kStreamAdapterInit));
      outcome.mask = select_label_match(train, anchors, Temperature(config.detector.tau));
      return outcome;
    }
    case Strategy::small_loss:
    case Strategy::gmm: {
      // Both loss-based selectors read per-sample cross-entropy from a
      // one-epoch linear probe warmed up on the full noisy data.
      Phase2Config probe = config.phase2;
      probe.mode = Phase2Mode::linear_probe;
      probe.epochs = 1;
      probe.seed = derive_seed(seed, kStreamProbe);
      const Mask all(train.n, 1);
      const Phase2Result warmup = train_phase2(train, all, probe, nullptr);
      const std::vector<double> losses =
          per_sample_losses(warmup.classifier, warmup.adapter, train);
      if (strategy == Strategy::small_loss) {
        Rng batch_rng(derive_seed(seed, kStreamBatches));
        std::vector<std::size_t> order(train.n);
        for (std::size_t i = 0; i < train.n; ++i) {
          order[i] = i;
        }
        batch_rng.shuffle(order);
        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t start = 0; start < order.size(); start += config.phase2.batch_size) {
          const std::size_t end = std::min(order.size(), start + config.phase2.batch_size);
          batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(end));
        }
        outcome.mask = select_small_loss(losses, prepared.noise.realized_ratio, batches);
      } else {
        const GmmModel model = fit_gmm_em(losses, 100, 1e-6, derive_seed(seed, kStreamGmm));
        outcome.mask = select_gmm(losses, model, 0.5);
      }
      return outcome;
    }
  }
  throw ConfigError("unknown strategy");
}

LabeledDataset bake_adapter_into(const LabeledDataset& ds, const AdapterParams& adapter) {
  LabeledDataset out = ds;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::vector<float> adapted = apply_adapter(ds.embedding(i), adapter);
    std::copy(adapted.begin(), adapted.end(), out.features.begin() + static_cast<std::ptrdiff_t>(i * ds.dim));
  }
  out.normalized = true;
  return out;
}

RunRow run_single(const ExperimentConfig& config, Strategy strategy, const PreparedData& prepared,
                  std::uint64_t seed, const std::string& artifact_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(artifact_dir);

  StrategyOutcome outcome = run_strategy(config, strategy, prepared, seed);

  RunRow row;
  row.row_label = std::to_string(seed);
  row.strategy = to_string(strategy);
  row.noise_family = to_string(prepared.noise.family);
  row.n_train = static_cast<double>(prepared.train.n);
  row.n_test = prepared.test ? static_cast<double>(prepared.test->n) : 0.0;
  row.target_ratio = prepared.noise.target_ratio;
  row.realized_ratio = prepared.noise.realized_ratio;
  std::size_t selected = 0;
  for (const std::uint8_t v : outcome.mask) {
    selected += v ? 1 : 0;
  }
  row.n_selected = static_cast<double>(selected);
  if (prepared.train.has_true_labels()) {
    const SelectionMetrics metrics = selection_metrics(outcome.mask, true_clean_mask(prepared.train));
    row.n_true_clean = static_cast<double>(metrics.n_true_clean);
    row.precision = metrics.precision;
    row.recall = metrics.recall;
    row.f1 = metrics.f1;
  }

  write_mask(outcome.mask, artifact_dir + "/mask.txt");
  write_noise_spec(prepared.noise, artifact_dir + "/noise.json");
  if (!outcome.detector_trace.empty()) {
    write_detector_trace(outcome.detector_trace, artifact_dir + "/detector_trace.csv");
  }

  // Phase 2 on the strategy's clean subset.
  Phase2Config phase2 = config.phase2;
  phase2.seed = derive_seed(seed, kStreamPhase2);
  const LabeledDataset* train_ptr = &prepared.train;
  const LabeledDataset* test_ptr = prepared.test ? &*prepared.test : nullptr;
  LabeledDataset baked_train;
  LabeledDataset baked_test;
  if (config.bake_phase1_adapter && outcome.phase1_adapter) {
    baked_train = bake_adapter_into(prepared.train, *outcome.phase1_adapter);
    train_ptr = &baked_train;
    if (prepared.test) {
      baked_test = bake_adapter_into(*prepared.test, *outcome.phase1_adapter);
      test_ptr = &baked_test;
    }
  }
  const Phase2Result adapted = train_phase2(*train_ptr, outcome.mask, phase2, test_ptr);
  row.acc_best = adapted.best_test_accuracy();
  row.acc_last = adapted.last_test_accuracy();

  write_phase2_trace(adapted.trace, artifact_dir + "/phase2_trace.csv");
  save_model(adapted.classifier, adapted.adapter, artifact_dir + "/model.bin");
  return row;
}

json config_to_json_object(const ExperimentConfig& config) {
  json data;
  if (config.data.synthetic) {
    const SyntheticConfig& s = *config.data.synthetic;
    data["synthetic"] = {
        {"n", s.n},
        {"test_n", config.data.synthetic_test_n},
        {"dim", s.dim},
        {"classes", s.num_classes},
        {"class_separation", s.class_separation},
        {"intra_class_noise", s.intra_class_noise},
        {"text_anchor_jitter", s.text_anchor_jitter},
    };
  } else {
    json file;
    file["train"] = config.data.train_path.value_or("");
    if (config.data.test_path) {
      file["test"] = *config.data.test_path;
    }
    data["file"] = file;
  }

  json detector = {
      {"tau", config.detector.tau},
      {"warmup_epochs", config.detector.warmup_epochs},
      {"detect_epochs", config.detector.detect_epochs},
      {"lr", config.detector.lr},
      {"momentum", config.detector.momentum},
      {"weight_decay", config.detector.weight_decay},
      {"batch_size", config.detector.batch_size},
      {"lambda_pos", config.detector.lambda_pos},
      {"consistency_constraint", config.detector.consistency_constraint},
      {"adapter",
       {{"mode", to_string(config.detector_adapter.mode)},
        {"rank", config.detector_adapter.rank},
        {"residual_scale", config.detector_adapter.residual_scale}}},
  };

  json phase2 = {
      {"mode", to_string(config.phase2.mode)},
      {"epochs", config.phase2.epochs},
      {"lr", config.phase2.lr},
      {"momentum", config.phase2.momentum},
      {"weight_decay", config.phase2.weight_decay},
      {"batch_size", config.phase2.batch_size},
      {"adapter_rank", config.phase2.adapter_rank},
      {"residual_scale", config.phase2.residual_scale},
      {"bake_phase1_adapter", config.bake_phase1_adapter},
  };

  return json{
      {"data", data},
      {"noise", {{"family", to_string(config.noise_family)}, {"ratio", config.noise_ratio}}},
      {"strategy", to_string(config.strategy)},
      {"detector", detector},
      {"phase2", phase2},
      {"seeds", config.seeds},
      {"out", config.out_dir},
      {"format", to_string(config.format)},
  };
}

ExperimentConfig config_from_json_object(const json& j) {
  ExperimentConfig config;
  if (!j.contains("data")) {
    throw ConfigError("experiment config needs a 'data' section");
  }
  const json& data = j.at("data");
  if (data.contains("synthetic") == data.contains("file")) {
    throw ConfigError("experiment data must name exactly one of 'synthetic' or 'file'");
  }
  if (data.contains("synthetic")) {
    const json& s = data.at("synthetic");
    SyntheticConfig synth;
    synth.n = s.value("n", synth.n);
    synth.dim = s.value("dim", synth.dim);
    synth.num_classes = s.value("classes", synth.num_classes);
    synth.class_separation = s.value("class_separation", synth.class_separation);
    synth.intra_class_noise = s.value("intra_class_noise", synth.intra_class_noise);
    synth.text_anchor_jitter = s.value("text_anchor_jitter", synth.text_anchor_jitter);
    config.data.synthetic = synth;
    config.data.synthetic_test_n = s.value("test_n", config.data.synthetic_test_n);
  } else {
    const json& f = data.at("file");
    if (!f.contains("train")) {
      throw ConfigError("file data source needs a 'train' path");
    }
    config.data.train_path = f.at("train").get<std::string>();
    if (f.contains("test")) {
      config.data.test_path = f.at("test").get<std::string>();
    }
  }

  if (j.contains("noise")) {
    const json& noise = j.at("noise");
    config.noise_family = noise_family_from_string(noise.value("family", "symmetric"));
    config.noise_ratio = noise.value("ratio", 0.0);
  }
  config.strategy = strategy_from_string(j.value("strategy", "deft"));

  if (j.contains("detector")) {
    const json& d = j.at("detector");
    config.detector.tau = d.value("tau", config.detector.tau);
    config.detector.warmup_epochs = d.value("warmup_epochs", config.detector.warmup_epochs);
    config.detector.detect_epochs = d.value("detect_epochs", config.detector.detect_epochs);
    config.detector.lr = d.value("lr", config.detector.lr);
    config.detector.momentum = d.value("momentum", config.detector.momentum);
    config.detector.weight_decay = d.value("weight_decay", config.detector.weight_decay);
    config.detector.batch_size = d.value("batch_size", config.detector.batch_size);
    config.detector.lambda_pos = d.value("lambda_pos", config.detector.lambda_pos);
    config.detector.consistency_constraint =
        d.value("consistency_constraint", config.detector.consistency_constraint);
    if (d.contains("adapter")) {
      const json& a = d.at("adapter");
      config.detector_adapter.mode =
          adapter_mode_from_string(a.value("mode", to_string(config.detector_adapter.mode)));
      config.detector_adapter.rank = a.value("rank", config.detector_adapter.rank);
      config.detector_adapter.residual_scale =
          a.value("residual_scale", config.detector_adapter.residual_scale);
    }
  }

  if (j.contains("phase2")) {
    const json& p = j.at("phase2");
    config.phase2.mode = phase2_mode_from_string(p.value("mode", to_string(config.phase2.mode)));
    config.phase2.epochs = p.value("epochs", config.phase2.epochs);
    config.phase2.lr = p.value("lr", config.phase2.lr);
    config.phase2.momentum = p.value("momentum", config.phase2.momentum);
    config.phase2.weight_decay = p.value("weight_decay", config.phase2.weight_decay);
    config.phase2.batch_size = p.value("batch_size", config.phase2.batch_size);
    config.phase2.adapter_rank = p.value("adapter_rank", config.phase2.adapter_rank);
    config.phase2.residual_scale = p.value("residual_scale", config.phase2.residual_scale);
    config.bake_phase1_adapter = p.value("bake_phase1_adapter", config.bake_phase1_adapter);
  }

  if (j.contains("seeds")) {
    config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  config.out_dir = j.value("out", config.out_dir);
  config.format = report_format_from_string(j.value("format", "csv"));
  return config;
}

std::optional<std::string> format_optional(const std::optional<double>& v, bool fixed) {
  if (!v) {
    return std::nullopt;
  }
  return fixed ? format_fixed6(*v) : format_g9(*v);
}

// Column layout shared by the CSV and JSONL writers.
struct Column {
  const char* name;
  bool fixed;  // fixed6 vs g9 formatting
  std::optional<double> RunRow::* field;
};

constexpr Column kColumns[] = {
    {"n_train", false, &RunRow::n_train},
    {"n_test", false, &RunRow::n_test},
    {"target_ratio", true, &RunRow::target_ratio},
    {"realized_ratio", true, &RunRow::realized_ratio},
    {"n_selected", false, &RunRow::n_selected},
    {"n_true_clean", false, &RunRow::n_true_clean},
    {"precision", true, &RunRow::precision},
    {"recall", true, &RunRow::recall},
    {"f1", true, &RunRow::f1},
    {"acc_best", true, &RunRow::acc_best},
    {"acc_last", true, &RunRow::acc_last},
};

}  // namespace

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::deft:
      return "deft";
    case Strategy::label_match:
      return "label_match";
    case Strategy::small_loss:
      return "small_loss";
    case Strategy::gmm:
      return "gmm";
  }
  return "deft";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "deft") return Strategy::deft;
  if (name == "label_match") return Strategy::label_match;
  if (name == "small_loss") return Strategy::small_loss;
  if (name == "gmm") return Strategy::gmm;
  throw ConfigError("unknown strategy '" + name + "'");
}

const char* to_string(ReportFormat format) {
  return format == ReportFormat::csv ? "csv" : "jsonl";
}

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "jsonl") return ReportFormat::jsonl;
  throw ConfigError("unknown report format '" + name + "' (expected csv or jsonl)");
}

void DataConfig::validate() const {
  if (synthetic.has_value() == train_path.has_value()) {
    throw ConfigError("experiment data must name exactly one of synthetic or file source");
  }
  if (synthetic) {
    synthetic->validate();
  }
}

void ExperimentConfig::validate() const {
  data.validate();
  if (!(noise_ratio >= 0.0) || noise_ratio >= 1.0) {
    throw ConfigError("noise ratio must lie in [0, 1)");
  }
  detector.validate();
  phase2.validate();
  if (seeds.empty()) {
    throw ConfigError("experiment needs at least one seed");
  }
  if (out_dir.empty()) {
    throw ConfigError("experiment needs an output directory");
  }
}

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config JSON parse error: ") + e.what());
  }
  if (j.contains("config")) {
    // Manifest from a previous run.
    return config_from_json_object(j.at("config"));
  }
  return config_from_json_object(j);
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
  return config_to_json_object(config).dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open config file " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return experiment_config_from_json(buffer.str());
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a64(config_to_json_object(config).dump());
}

std::pair<RunRow, RunRow> aggregate_rows(const std::vector<RunRow>& rows) {
  RunRow mean;
  RunRow stddev;
  mean.row_label = "mean";
  stddev.row_label = "std";
  if (rows.empty()) {
    return {mean, stddev};
  }
  mean.strategy = rows.front().strategy;
  stddev.strategy = rows.front().strategy;
  mean.noise_family = rows.front().noise_family;
  stddev.noise_family = rows.front().noise_family;
  for (const Column& column : kColumns) {
    std::vector<double> values;
    for (const RunRow& row : rows) {
      if (row.*(column.field)) {
        values.push_back(*(row.*(column.field)));
      }
    }
    if (values.size() != rows.size()) {
      continue;  // leave the aggregate empty unless every row has the metric
    }
    double sum = 0.0;
    for (const double v : values) {
      sum += v;
    }
    const double avg = sum / static_cast<double>(values.size());
    mean.*(column.field) = avg;
    double ss = 0.0;
    for (const double v : values) {
      ss += (v - avg) * (v - avg);
    }
    stddev.*(column.field) =
        values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  }
  return {mean, stddev};
}

void write_report_csv(const std::vector<RunRow>& rows, const std::string& path) {
  write_text_file(path, report_to_string(rows, ReportFormat::csv));
}

void write_report_jsonl(const std::vector<RunRow>& rows, const std::string& path) {
  write_text_file(path, report_to_string(rows, ReportFormat::jsonl));
}

std::string report_to_string(const std::vector<RunRow>& rows, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::csv) {
    out = "row,strategy,noise_family";
    for (const Column& column : kColumns) {
      out += ',';
      out += column.name;
    }
    out += '\n';
    for (const RunRow& row : rows) {
      out += row.row_label + ',' + row.strategy + ',' + row.noise_family;
      for (const Column& column : kColumns) {
        out += ',';
        if (const auto text = format_optional(row.*(column.field), column.fixed)) {
          out += *text;
        }
      }
      out += '\n';
    }
    return out;
  }
  for (const RunRow& row : rows) {
    json j;
    j["row"] = row.row_label;
    j["strategy"] = row.strategy;
    j["noise_family"] = row.noise_family;
    for (const Column& column : kColumns) {
      if (row.*(column.field)) {
        j[column.name] = *(row.*(column.field));
      }
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

RunReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  json manifest = {
      {"tool", "deft"},
      {"version", kVersion},
      {"config", config_to_json_object(config)},
      {"config_hash", hex64(config_hash(config))},
  };
  write_text_file(config.out_dir + "/manifest.json", manifest.dump(2) + "\n");

  RunReport report;
  for (const std::uint64_t seed : config.seeds) {
    const PreparedData prepared = prepare_data(config, seed);
    report.rows.push_back(run_single(config, config.strategy, prepared, seed,
                                     config.out_dir + "/seed_" + std::to_string(seed)));
  }
  const auto [mean, stddev] = aggregate_rows(report.rows);
  report.rows.push_back(mean);
  report.rows.push_back(stddev);

  write_report_csv(report.rows, config.out_dir + "/report.csv");
  write_report_jsonl(report.rows, config.out_dir + "/report.jsonl");
  return report;
}

ComparisonReport compare_strategies(const ExperimentConfig& config,
                                    const std::vector<Strategy>& strategies) {
  config.validate();
  if (strategies.size() < 2) {
    throw ConfigError("strategy comparison needs at least 2 strategies");
  }
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  json manifest = {
      {"tool", "deft"},
      {"version", kVersion},
      {"config", config_to_json_object(config)},
      {"config_hash", hex64(config_hash(config))},
  };
  json strategy_names = json::array();
  for (const Strategy s : strategies) {
    strategy_names.push_back(to_string(s));
  }
  manifest["strategies"] = strategy_names;
  write_text_file(config.out_dir + "/manifest.json", manifest.dump(2) + "\n");

  // One shared data + noise realization per seed, reused by every strategy.
  ComparisonReport report;
  std::vector<std::vector<RunRow>> per_strategy(strategies.size());
  for (const std::uint64_t seed : config.seeds) {
    const PreparedData prepared = prepare_data(config, seed);
    for (std::size_t s = 0; s < strategies.size(); ++s) {
      const std::string dir = config.out_dir + "/" + to_string(strategies[s]) + "/seed_" +
                              std::to_string(seed);
      per_strategy[s].push_back(run_single(config, strategies[s], prepared, seed, dir));
    }
  }

  std::optional<RunRow> small_loss_mean;
  std::vector<RunRow> means;
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    const auto [mean, stddev] = aggregate_rows(per_strategy[s]);
    means.push_back(mean);
    if (strategies[s] == Strategy::small_loss) {
      small_loss_mean = mean;
    }
    for (const RunRow& row : per_strategy[s]) {
      report.rows.push_back(row);
    }
    report.rows.push_back(mean);
    report.rows.push_back(stddev);
  }

  if (small_loss_mean) {
    for (std::size_t s = 0; s < strategies.size(); ++s) {
      if (strategies[s] == Strategy::small_loss) {
        continue;
      }
      RunRow delta;
      delta.row_label = "delta";
      delta.strategy = std::string(to_string(strategies[s])) + "-small_loss";
      delta.noise_family = means[s].noise_family;
      for (const Column& column : kColumns) {
        const auto& lhs = means[s].*(column.field);
        const auto& rhs = (*small_loss_mean).*(column.field);
        if (lhs && rhs) {
          delta.*(column.field) = *lhs - *rhs;
        }
      }
      report.rows.push_back(delta);
    }
  }

  write_report_csv(report.rows, config.out_dir + "/comparison.csv");
  write_report_jsonl(report.rows, config.out_dir + "/comparison.jsonl");
  return report;
}

SyntheticConfig bench_std_synthetic() {
  SyntheticConfig config;
  config.n = 5000;
  config.dim = 64;
  config.num_classes = 10;
  config.class_separation = 0.9;
  config.intra_class_noise = 0.2;
  config.text_anchor_jitter = 0.05;
  return config;
}

ExperimentConfig bench_std_experiment(NoiseFamily family, double ratio, Strategy strategy) {
  ExperimentConfig config;
  config.data.synthetic = bench_std_synthetic();
  config.data.synthetic_test_n = 1000;
  config.noise_family = family;
  config.noise_ratio = ratio;
  config.strategy = strategy;
  config.seeds = {0, 1, 2, 3, 4};
  return config;
}

void write_noise_spec(const NoiseSpec& spec, const std::string& path) {
  json j;
  j["family"] = to_string(spec.family);
  j["target_ratio"] = spec.target_ratio;
  j["realized_ratio"] = spec.realized_ratio;
  j["seed"] = spec.seed;
  json matrix = json::array();
  for (std::size_t r = 0; r < spec.transition_matrix.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < spec.transition_matrix.cols(); ++c) {
      row.push_back(spec.transition_matrix.at(r, c));
    }
    matrix.push_back(row);
  }
  j["transition_matrix"] = matrix;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace deft
