// deft: dual-prompt noisy-label detection and clean-subset adaptation over
// embedding datasets.

#include <clocale>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deft/adapt.hpp"
#include "deft/baselines.hpp"
#include "deft/detector.hpp"
#include "deft/error.hpp"
#include "deft/experiment.hpp"
#include "deft/format.hpp"
#include "deft/metrics.hpp"
#include "deft/noise.hpp"
#include "deft/synthetic.hpp"
#include "deft/version.hpp"

namespace {

using namespace deft;

LabeledDataset load_dataset(const std::string& path) {
  return load_embeddings(path, format_from_path(path));
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  write_embeddings(ds, path, format_from_path(path));
}

Matrix anchors_as_matrix(const SyntheticData& data) { return data.text_anchors; }

void write_anchor_file(const Matrix& anchors, std::size_t dim, const std::string& path) {
  LabeledDataset anchor_ds;
  anchor_ds.n = anchors.rows();
  anchor_ds.dim = dim;
  anchor_ds.num_classes = anchors.rows();
  anchor_ds.class_names = default_class_names(anchors.rows());
  anchor_ds.normalized = true;
  anchor_ds.features.resize(anchors.rows() * dim);
  anchor_ds.given_labels.resize(anchors.rows());
  for (std::size_t k = 0; k < anchors.rows(); ++k) {
    anchor_ds.given_labels[k] = static_cast<std::uint32_t>(k);
    for (std::size_t j = 0; j < dim; ++j) {
      anchor_ds.features[k * dim + j] = static_cast<float>(anchors.at(k, j));
    }
  }
  save_dataset(anchor_ds, path);
}

std::string metrics_line(const SelectionMetrics& m, ReportFormat format) {
  if (format == ReportFormat::jsonl) {
    return std::string("{\"precision\":") + format_g9(m.precision) +
           ",\"recall\":" + format_g9(m.recall) + ",\"f1\":" + format_g9(m.f1) +
           ",\"n_selected\":" + std::to_string(m.n_selected) +
           ",\"n_true_clean\":" + std::to_string(m.n_true_clean) + "}\n";
  }
  return "precision,recall,f1,n_selected,n_true_clean\n" + format_fixed6(m.precision) + "," +
         format_fixed6(m.recall) + "," + format_fixed6(m.f1) + "," + std::to_string(m.n_selected) +
         "," + std::to_string(m.n_true_clean) + "\n";
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
};

// `run`/`compare` share the config assembly: a JSON config/manifest, the
// bench-std preset, or both (preset first, file overrides ignored then).
ExperimentConfig assemble_config(const CommonFlags& common, bool bench_std,
                                 const std::string& family, double ratio,
                                 const std::string& strategy) {
  ExperimentConfig config;
  if (!common.config_path.empty()) {
    config = load_experiment_config(common.config_path);
  } else if (bench_std) {
    config = bench_std_experiment(noise_family_from_string(family), ratio,
                                  strategy_from_string(strategy));
  } else {
    throw ConfigError("provide --config <file> or --bench-std");
  }
  if (common.seed) {
    config.seeds = {*common.seed};
  }
  if (!common.out.empty()) {
    config.out_dir = common.out;
  }
  config.format = report_format_from_string(common.format);
  return config;
}

void print_report(const std::vector<RunRow>& rows, ReportFormat format) {
  std::cout << report_to_string(rows, format);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"dual-prompt noisy-label detection and clean-subset adaptation"};
  app.set_version_flag("--version", std::string("deft ") + kVersion);
  app.require_subcommand(1);

  // ---- gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic embedding dataset");
  SyntheticConfig synth;
  std::size_t gen_test_n = 0;
  std::string gen_out;
  std::string gen_test_out;
  std::string gen_anchors_out;
  gen->add_option("--n", synth.n, "training samples")->capture_default_str();
  gen->add_option("--dim", synth.dim, "embedding dimension")->capture_default_str();
  gen->add_option("--classes", synth.num_classes, "class count")->capture_default_str();
  gen->add_option("--separation", synth.class_separation,
                  "minimum pairwise prototype angle (radians)")
      ->capture_default_str();
  gen->add_option("--cluster-noise", synth.intra_class_noise, "intra-class Gaussian scale")
      ->capture_default_str();
  gen->add_option("--anchor-jitter", synth.text_anchor_jitter, "text anchor jitter scale")
      ->capture_default_str();
  gen->add_option("--seed", synth.seed, "generation seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset file (.bin or .csv)")->required();
  gen->add_option("--test-n", gen_test_n, "additionally generated test samples");
  gen->add_option("--test-out", gen_test_out, "output file for the test split");
  gen->add_option("--anchors-out", gen_anchors_out, "output file for the oracle text anchors");

  // ---- noise --------------------------------------------------------------
  auto* noise = app.add_subcommand("noise", "corrupt labels with a noise family");
  std::string noise_in;
  std::string noise_family = "symmetric";
  double noise_ratio = 0.4;
  std::uint64_t noise_seed = 0;
  std::string noise_out;
  std::string noise_spec_out;
  noise->add_option("--in", noise_in, "input dataset")->required();
  noise->add_option("--family", noise_family, "symmetric | instance_dependent")
      ->capture_default_str();
  noise->add_option("--ratio", noise_ratio, "target noise ratio in [0,1)")->capture_default_str();
  noise->add_option("--seed", noise_seed, "injection seed")->capture_default_str();
  noise->add_option("--out", noise_out, "output dataset file")->required();
  noise->add_option("--spec-out", noise_spec_out, "noise spec JSON (default <out>.noise.json)");

  // ---- detect ---------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "phase 1: train the detector, emit the clean mask");
  std::string detect_in;
  std::string detect_out;
  DetectorConfig detector;
  std::string detect_adapter = "low_rank";
  std::size_t detect_rank = 8;
  double detect_scale = 0.1;
  bool severe = false;
  std::string detect_format = "csv";
  detect->add_option("--in", detect_in, "input (noisy) dataset")->required();
  detect->add_option("--out", detect_out, "output directory")->required();
  detect->add_option("--tau", detector.tau, "softmax temperature")->capture_default_str();
  detect->add_option("--warmup-epochs", detector.warmup_epochs, "warm-up epochs (T0)")
      ->capture_default_str();
  detect->add_option("--epochs", detector.detect_epochs, "total detection epochs (T1)")
      ->capture_default_str();
  detect->add_option("--lr", detector.lr, "learning rate")->capture_default_str();
  detect->add_option("--momentum", detector.momentum, "SGD momentum")->capture_default_str();
  detect->add_option("--weight-decay", detector.weight_decay, "weight decay")
      ->capture_default_str();
  detect->add_option("--batch-size", detector.batch_size, "mini-batch size")
      ->capture_default_str();
  detect->add_option("--lambda-pos", detector.lambda_pos, "positive loss weight")
      ->capture_default_str();
  detect->add_flag("--consistency", detector.consistency_constraint,
                   "require the zero-shot prediction to match the given label");
  detect->add_flag("--severe-noise", severe,
                   "preset for heavy corruption: lambda_pos 0.25, lr 1e-2");
  detect->add_option("--seed", detector.seed, "training seed")->capture_default_str();
  detect->add_option("--adapter", detect_adapter, "identity | low_rank | full")
      ->capture_default_str();
  detect->add_option("--rank", detect_rank, "low-rank adapter bottleneck")->capture_default_str();
  detect->add_option("--residual-scale", detect_scale, "low-rank residual scale")
      ->capture_default_str();
  detect->add_option("--format", detect_format, "metrics output format: csv | jsonl")
      ->capture_default_str();

  // ---- adapt ---------------------------------------------------------
  auto* adapt = app.add_subcommand("adapt", "phase 2: train a classifier on the masked subset");
  std::string adapt_in;
  std::string adapt_mask;
  std::string adapt_test;
  std::string adapt_out;
  std::string adapt_mode = "fft";
  Phase2Config phase2;
  adapt->add_option("--in", adapt_in, "input (noisy) dataset")->required();
  adapt->add_option("--mask", adapt_mask, "clean mask file (one 0/1 per line)")->required();
  adapt->add_option("--mode", adapt_mode, "linear_probe | peft | fft")->capture_default_str();
  adapt->add_option("--epochs", phase2.epochs, "training epochs (T2)")->capture_default_str();
  adapt->add_option("--lr", phase2.lr, "learning rate")->capture_default_str();
  adapt->add_option("--momentum", phase2.momentum, "SGD momentum")->capture_default_str();
  adapt->add_option("--weight-decay", phase2.weight_decay, "weight decay")->capture_default_str();
  adapt->add_option("--batch-size", phase2.batch_size, "mini-batch size")->capture_default_str();
  adapt->add_option("--rank", phase2.adapter_rank, "peft surrogate bottleneck")
      ->capture_default_str();
  adapt->add_flag("--freeze-transform", phase2.freeze_transform,
                  "train the classifier only, keep the transform fixed");
  adapt->add_option("--seed", phase2.seed, "training seed")->capture_default_str();
  adapt->add_option("--test", adapt_test, "held-out dataset for per-epoch accuracy");
  adapt->add_option("--out", adapt_out, "output directory")->required();

  // ---- run / compare ----------------------------------------------------
  CommonFlags run_common;
  bool run_bench = false;
  std::string run_family = "symmetric";
  double run_ratio = 0.4;
  std::string run_strategy = "deft";
  auto* run = app.add_subcommand("run", "end-to-end experiment from a config file");
  run->add_option("--config", run_common.config_path, "experiment config or manifest JSON");
  run->add_flag("--bench-std", run_bench, "use the frozen bench-std synthetic benchmark");
  run->add_option("--family", run_family, "bench-std noise family")->capture_default_str();
  run->add_option("--ratio", run_ratio, "bench-std noise ratio")->capture_default_str();
  run->add_option("--strategy", run_strategy, "deft | label_match | small_loss | gmm")
      ->capture_default_str();
  run->add_option("--seed", run_common.seed, "replace the seed list with a single seed");
  run->add_option("--out", run_common.out, "output directory override");
  run->add_option("--format", run_common.format, "stdout report format: csv | jsonl")
      ->capture_default_str();

  CommonFlags cmp_common;
  bool cmp_bench = false;
  std::string cmp_family = "symmetric";
  double cmp_ratio = 0.4;
  std::vector<std::string> cmp_strategies{"deft", "label_match", "small_loss", "gmm"};
  auto* compare = app.add_subcommand("compare", "run several strategies on shared noise");
  compare->add_option("--config", cmp_common.config_path, "experiment config or manifest JSON");
  compare->add_flag("--bench-std", cmp_bench, "use the frozen bench-std synthetic benchmark");
  compare->add_option("--family", cmp_family, "bench-std noise family")->capture_default_str();
  compare->add_option("--ratio", cmp_ratio, "bench-std noise ratio")->capture_default_str();
  compare->add_option("--strategies", cmp_strategies, "strategies to compare")
      ->delimiter(',')
      ->capture_default_str();
  compare->add_option("--seed", cmp_common.seed, "replace the seed list with a single seed");
  compare->add_option("--out", cmp_common.out, "output directory override");
  compare->add_option("--format", cmp_common.format, "stdout report format: csv | jsonl")
      ->capture_default_str();

  // ---- eval-mask ---------------------------------------------------------
  auto* eval_mask = app.add_subcommand("eval-mask", "score a mask against ground truth");
  std::string em_mask;
  std::string em_truth_data;
  std::string em_truth_mask;
  std::string em_out;
  std::string em_format = "csv";
  eval_mask->add_option("--mask", em_mask, "selection mask file")->required();
  eval_mask->add_option("--truth-data", em_truth_data,
                        "dataset with true labels (clean = given == true)");
  eval_mask->add_option("--truth-mask", em_truth_mask, "explicit ground-truth mask file");
  eval_mask->add_option("--out", em_out, "also write the metrics to this file");
  eval_mask->add_option("--format", em_format, "csv | jsonl")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // Help/version exit cleanly; anything else is a configuration error.
    return code == 0 ? 0 : static_cast<int>(ErrorCode::config);
  }

  if (gen->parsed()) {
    SyntheticConfig full = synth;
    full.n = synth.n + gen_test_n;
    const SyntheticData data = generate_synthetic(full);
    LabeledDataset train = data.dataset;
    if (gen_test_n > 0) {
      if (gen_test_out.empty()) {
        throw ConfigError("--test-n needs --test-out");
      }
      LabeledDataset test;
      test.n = gen_test_n;
      test.dim = train.dim;
      test.num_classes = train.num_classes;
      test.class_names = train.class_names;
      test.normalized = train.normalized;
      test.features.assign(train.features.begin() + static_cast<std::ptrdiff_t>(synth.n * train.dim),
                           train.features.end());
      test.given_labels.assign(train.given_labels.begin() + static_cast<std::ptrdiff_t>(synth.n),
                               train.given_labels.end());
      test.true_labels = std::vector<std::uint32_t>(
          train.true_labels->begin() + static_cast<std::ptrdiff_t>(synth.n),
          train.true_labels->end());
      save_dataset(test, gen_test_out);

      train.n = synth.n;
      train.features.resize(synth.n * train.dim);
      train.given_labels.resize(synth.n);
      train.true_labels->resize(synth.n);
    }
    save_dataset(train, gen_out);
    if (!gen_anchors_out.empty()) {
      write_anchor_file(anchors_as_matrix(data), train.dim, gen_anchors_out);
    }
    std::cout << "wrote " << train.n << " samples (dim " << train.dim << ", " << train.num_classes
              << " classes) to " << gen_out << "\n";
    return 0;
  }

  if (noise->parsed()) {
    const LabeledDataset ds = load_dataset(noise_in);
    const NoiseFamily family = noise_family_from_string(noise_family);
    const auto [noisy, spec] = family == NoiseFamily::symmetric
                                   ? inject_symmetric_noise(ds, noise_ratio, noise_seed)
                                   : inject_instance_noise(ds, noise_ratio, noise_seed);
    save_dataset(noisy, noise_out);
    write_noise_spec(spec, noise_spec_out.empty() ? noise_out + ".noise.json" : noise_spec_out);
    std::cout << "realized noise ratio " << format_fixed6(spec.realized_ratio) << " -> "
              << noise_out << "\n";
    return 0;
  }

  if (detect->parsed()) {
    const LabeledDataset ds = load_dataset(detect_in);
    if (severe) {
      detector = severe_noise_preset(detector);
    }
    AdapterParams adapter = AdapterParams::make_identity(ds.dim);
    const AdapterMode mode = adapter_mode_from_string(detect_adapter);
    if (mode == AdapterMode::low_rank) {
      adapter = AdapterParams::make_low_rank(ds.dim, detect_rank, detect_scale,
                                             derive_seed(detector.seed, 104));
    } else if (mode == AdapterMode::full) {
      adapter = AdapterParams::make_full(ds.dim);
    }
    const DetectorResult result = train_detector(ds, detector, std::move(adapter));
    std::filesystem::create_directories(detect_out);
    write_mask(result.selection.clean_mask, detect_out + "/mask.txt");
    write_detector_trace(result.trace, detect_out + "/detector_trace.csv");
    std::cout << "selected " << result.selection.selected_count() << " of " << ds.n
              << " samples as clean\n";
    if (ds.has_true_labels()) {
      const SelectionMetrics m =
          selection_metrics(result.selection.clean_mask, true_clean_mask(ds));
      std::cout << metrics_line(m, report_format_from_string(detect_format));
    }
    return 0;
  }

  if (adapt->parsed()) {
    const LabeledDataset ds = load_dataset(adapt_in);
    const Mask mask = load_mask(adapt_mask);
    phase2.mode = phase2_mode_from_string(adapt_mode);
    std::optional<LabeledDataset> test;
    if (!adapt_test.empty()) {
      test = load_dataset(adapt_test);
    }
    const Phase2Result result = train_phase2(ds, mask, phase2, test ? &*test : nullptr);
    std::filesystem::create_directories(adapt_out);
    save_model(result.classifier, result.adapter, adapt_out + "/model.bin");
    write_phase2_trace(result.trace, adapt_out + "/phase2_trace.csv");
    if (const auto best = result.best_test_accuracy()) {
      std::cout << "best accuracy " << format_fixed6(*best) << ", last accuracy "
                << format_fixed6(*result.last_test_accuracy()) << "\n";
    } else {
      std::cout << "trained on " << mask.size() << "-sample mask ("
                << std::count(mask.begin(), mask.end(), 1) << " clean)\n";
    }
    return 0;
  }

  if (run->parsed()) {
    const ExperimentConfig config =
        assemble_config(run_common, run_bench, run_family, run_ratio, run_strategy);
    const RunReport report = run_experiment(config);
    print_report(report.rows, config.format);
    std::cout << "artifacts under " << config.out_dir << "\n";
    return 0;
  }

  if (compare->parsed()) {
    ExperimentConfig config =
        assemble_config(cmp_common, cmp_bench, cmp_family, cmp_ratio, "deft");
    std::vector<Strategy> strategies;
    strategies.reserve(cmp_strategies.size());
    for (const std::string& name : cmp_strategies) {
      strategies.push_back(strategy_from_string(name));
    }
    const ComparisonReport report = compare_strategies(config, strategies);
    print_report(report.rows, config.format);
    std::cout << "artifacts under " << config.out_dir << "\n";
    return 0;
  }

  if (eval_mask->parsed()) {
    const Mask mask = load_mask(em_mask);
    Mask truth;
    if (!em_truth_data.empty()) {
      truth = true_clean_mask(load_dataset(em_truth_data));
    } else if (!em_truth_mask.empty()) {
      truth = load_mask(em_truth_mask);
    } else {
      throw ConfigError("eval-mask needs --truth-data or --truth-mask");
    }
    const SelectionMetrics m = selection_metrics(mask, truth);
    const std::string text = metrics_line(m, report_format_from_string(em_format));
    std::cout << text;
    if (!em_out.empty()) {
      std::ofstream out(em_out, std::ios::binary | std::ios::trunc);
      out << text;
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::setlocale(LC_ALL, "C");
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
