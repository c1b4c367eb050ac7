// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each, nonzero exit when anything fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "deft/adapt.hpp"
#include "deft/baselines.hpp"
#include "deft/detector.hpp"
#include "deft/experiment.hpp"
#include "deft/metrics.hpp"
#include "deft/noise.hpp"
#include "deft/synthetic.hpp"
#include "test_support.hpp"

using namespace deft;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %d. %s%s%s\n", pass ? "PASS" : "FAIL", index, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) {
    ++failures;
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// 1. F1 arithmetic fixtures on percentage-scale precision/recall pairs.
void criterion_f1_fixtures() {
  const double a = f1_score(91.48, 73.88);
  const double b = f1_score(97.94, 63.68);
  const bool pass = std::abs(a - 81.74) <= 0.01 && std::abs(b - 77.18) <= 0.01;
  report(1, "F1 arithmetic fixtures", pass, "f1(91.48,73.88)=" + fmt(a) + " f1(97.94,63.68)=" + fmt(b));
}

// 2. Criterion equivalence over 10^4 random states.
void criterion_equivalence_fuzz() {
  Rng rng(0xE0F);
  std::size_t states = 0;
  std::size_t violations = 0;
  while (states < 10000) {
    const std::size_t dim = 2 + rng.uniform_int(14);
    const std::size_t k = 2 + rng.uniform_int(7);
    const std::size_t n = 1 + rng.uniform_int(4);
    const LabeledDataset ds = test::random_dataset(n, dim, k, rng.next_u64());
    PromptPair prompts;
    prompts.positive = Matrix(k, dim);
    prompts.negative = Matrix(k, dim);
    for (std::size_t c = 0; c < k; ++c) {
      const auto pos = test::random_unit(rng, dim);
      const auto neg = test::random_unit(rng, dim);
      for (std::size_t j = 0; j < dim; ++j) {
        prompts.positive.at(c, j) = pos[j];
        prompts.negative.at(c, j) = neg[j];
      }
    }
    const Temperature tau(std::exp(rng.uniform(std::log(1e-3), 0.0)));
    const SelectionResult sel = select_clean(ds, prompts, tau, false);
    for (std::size_t i = 0; i < n && states < 10000; ++i, ++states) {
      const bool by_prob = sel.clean_prob[i] > 0.5;
      const bool by_threshold = sel.pos_sim[i] > sel.threshold[i];
      const bool by_mask = sel.clean_mask[i] != 0;
      if (by_prob != by_threshold || by_threshold != by_mask) {
        ++violations;
      }
    }
  }
  report(2, "criterion equivalence fuzz (10^4 states)", violations == 0,
         std::to_string(violations) + " violations");
}

// 3. Analytic gradients vs central finite differences (f64, step 1e-5).
void criterion_gradient_suite() {
  const double step = 1e-5;
  double worst = 0.0;
  const auto fd = [&](double& parameter, const std::function<double()>& f) {
    const double saved = parameter;
    parameter = saved + step;
    const double hi = f();
    parameter = saved - step;
    const double lo = f();
    parameter = saved;
    return (hi - lo) / (2.0 * step);
  };
  const auto check_matrix = [&](Matrix& params, const Matrix& analytic,
                                const std::function<double()>& f) {
    for (std::size_t r = 0; r < params.rows(); ++r) {
      for (std::size_t c = 0; c < params.cols(); ++c) {
        const double numeric = fd(params.at(r, c), f);
        const double a = analytic.at(r, c);
        const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / scale);
      }
    }
  };

  Rng rng(0x96AD);
  for (int state = 0; state < 100; ++state) {
    const std::size_t dim = 3 + rng.uniform_int(6);
    const std::size_t k = 2 + rng.uniform_int(4);
    const std::size_t n = 2 + rng.uniform_int(4);
    const LabeledDataset ds = test::random_dataset(n, dim, k, 5000 + state);
    PromptPair prompts;
    prompts.positive = Matrix(k, dim);
    prompts.negative = Matrix(k, dim);
    for (std::size_t c = 0; c < k; ++c) {
      const auto pos = test::random_unit(rng, dim);
      const auto neg = test::random_unit(rng, dim);
      for (std::size_t j = 0; j < dim; ++j) {
        prompts.positive.at(c, j) = pos[j];
        prompts.negative.at(c, j) = neg[j];
      }
    }
    const Temperature tau(rng.uniform(0.2, 1.0));
    std::vector<std::uint32_t> pseudo(n);
    std::vector<std::uint32_t> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
      pseudo[i] = static_cast<std::uint32_t>(rng.uniform_int(k));
      targets[i] = static_cast<std::uint32_t>(rng.uniform_int(k));
    }
    Rng comp_rng(state);
    const auto comp = sample_complementary_labels(ds, pseudo, comp_rng);
    const double lambda_pos = rng.uniform(0.25, 1.0);

    // L_dp wrt both prompt matrices.
    const DualPromptLoss dp = loss_dp(ds, prompts, tau, pseudo, comp, lambda_pos);
    const auto dp_value = [&]() { return loss_dp(ds, prompts, tau, pseudo, comp, lambda_pos).value; };
    check_matrix(prompts.positive, dp.grad_positive, dp_value);
    check_matrix(prompts.negative, dp.grad_negative, dp_value);

    // L_sim wrt positive prompts and adapter parameters.
    std::vector<std::size_t> subset(n);
    std::iota(subset.begin(), subset.end(), 0);
    AdapterParams adapter = AdapterParams::make_identity(dim);
    const int mode = state % 3;
    if (mode == 1) {
      adapter = AdapterParams::make_low_rank(dim, 2, 0.1, 300 + state);
      for (double& v : adapter.up.data()) {
        v = 0.3 * rng.normal();
      }
    } else if (mode == 2) {
      adapter = AdapterParams::make_full(dim);
      for (double& v : adapter.dense.data()) {
        v += 0.05 * rng.normal();
      }
    }
    const AlignmentLoss sim = loss_sim(ds, subset, targets, prompts.positive, tau, adapter);
    const auto sim_value = [&]() {
      return loss_sim(ds, subset, targets, prompts.positive, tau, adapter).value;
    };
    check_matrix(prompts.positive, sim.grad_positive, sim_value);
    if (mode == 1) {
      check_matrix(adapter.down, sim.grad_adapter.down, sim_value);
      check_matrix(adapter.up, sim.grad_adapter.up, sim_value);
    } else if (mode == 2) {
      check_matrix(adapter.dense, sim.grad_adapter.dense, sim_value);
    }

    // Cross-entropy wrt logits.
    Matrix logits(1, k);
    for (double& v : logits.data()) {
      v = rng.uniform(-3.0, 3.0);
    }
    const std::uint32_t label = static_cast<std::uint32_t>(rng.uniform_int(k));
    const CrossEntropyLoss ce = cross_entropy(logits.row(0), label);
    Matrix analytic(1, k);
    for (std::size_t c = 0; c < k; ++c) {
      analytic.at(0, c) = ce.grad[c];
    }
    const auto ce_value = [&]() { return cross_entropy(logits.row(0), label).value; };
    check_matrix(logits, analytic, ce_value);
  }
  report(3, "gradient suite (L_dp, L_sim, cross-entropy vs finite differences)", worst < 1e-4,
         "max relative error " + fmt(worst));
}

// 4. EM monotonicity and planted-mixture recovery.
void criterion_em() {
  bool monotone = true;
  Rng rng(0x6E);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> losses(2000);
    for (double& v : losses) {
      switch (trial % 3) {
        case 0:
          v = std::abs(rng.normal());
          break;
        case 1:
          v = rng.uniform(0.0, 5.0);
          break;
        default:
          v = rng.uniform() < 0.5 ? 0.2 + 0.1 * std::abs(rng.normal())
                                  : 1.5 + 0.4 * std::abs(rng.normal());
          break;
      }
    }
    const GmmModel model = fit_gmm_em(losses);
    for (std::size_t t = 1; t < model.log_likelihood_trace.size(); ++t) {
      if (model.log_likelihood_trace[t] < model.log_likelihood_trace[t - 1] - 1e-9) {
        monotone = false;
      }
    }
  }

  std::vector<double> planted;
  const std::size_t n_clean = 500;
  for (std::size_t i = 0; i < n_clean; ++i) {
    planted.push_back(0.1 + 0.01 * rng.normal());
  }
  for (std::size_t i = 0; i < 500; ++i) {
    planted.push_back(2.0 + 0.01 * rng.normal());
  }
  const GmmModel model = fit_gmm_em(planted);
  const std::size_t low = model.clean_component();
  const bool means_ok =
      std::abs(model.means[low] - 0.1) <= 0.02 && std::abs(model.means[1 - low] - 2.0) <= 0.02;
  const Mask mask = select_gmm(planted, model);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < planted.size(); ++i) {
    correct += (mask[i] == 1) == (i < n_clean) ? 1 : 0;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(planted.size());
  report(4, "EM monotonicity and planted mixture recovery", monotone && means_ok && accuracy >= 0.99,
         "means (" + fmt(model.means[low]) + "," + fmt(model.means[1 - low]) + ") accuracy " +
             fmt(accuracy));
}

// 5. Noise exactness for both families.
void criterion_noise() {
  SyntheticConfig synth;
  synth.n = 5000;
  synth.dim = 32;
  synth.num_classes = 10;
  synth.seed = 0x4E;
  const LabeledDataset ds = generate_synthetic(synth).dataset;

  bool symmetric_ok = true;
  std::string detail;
  for (const double r : {0.2, 0.4, 0.6, 0.8}) {
    const auto [noisy, spec] = inject_symmetric_noise(ds, r, 0x55);
    std::size_t flips = 0;
    bool onto_truth = false;
    for (std::size_t i = 0; i < ds.n; ++i) {
      if (noisy.given_labels[i] != (*noisy.true_labels)[i]) {
        ++flips;
      } else if ((*ds.true_labels)[i] != (*noisy.true_labels)[i]) {
        onto_truth = true;
      }
    }
    const std::size_t expected = static_cast<std::size_t>(5000.0 * r);
    if (flips != expected || onto_truth) {
      symmetric_ok = false;
      detail += " sym(r=" + fmt(r) + ")=" + std::to_string(flips);
    }
  }

  bool instance_ok = true;
  for (const double r : {0.2, 0.3, 0.4, 0.5}) {
    const auto [noisy, spec] = inject_instance_noise(ds, r, 0x77);
    const double realized = noisy.noise_fraction();
    if (std::abs(realized - r) > 0.02) {
      instance_ok = false;
      detail += " ins(r=" + fmt(r) + ")=" + fmt(realized);
    }
  }
  report(5, "noise exactness (symmetric exact counts, instance calibration)",
         symmetric_ok && instance_ok, detail.empty() ? "all ratios in range" : detail);
}

struct BenchOutcome {
  double deft_f1 = 0.0;
  double small_loss_f1 = 0.0;
};

BenchOutcome bench_selection(double ratio) {
  BenchOutcome outcome;
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double deft_sum = 0.0;
  double small_sum = 0.0;
  double deft_min = 1.0;
  for (const std::uint64_t seed : seeds) {
    SyntheticConfig synth = bench_std_synthetic();
    synth.seed = derive_seed(seed, 101);
    const LabeledDataset clean = generate_synthetic(synth).dataset;
    const auto [noisy, spec] = inject_symmetric_noise(clean, ratio, derive_seed(seed, 102));
    const Mask truth = true_clean_mask(noisy);

    DetectorConfig det;
    det.seed = derive_seed(seed, 103);
    const DetectorResult deft = train_detector(
        noisy, det, AdapterParams::make_low_rank(noisy.dim, 8, 0.1, derive_seed(seed, 104)));
    const double deft_f1 = selection_metrics(deft.selection.clean_mask, truth).f1;
    deft_sum += deft_f1;
    deft_min = std::min(deft_min, deft_f1);

    Phase2Config probe;
    probe.mode = Phase2Mode::linear_probe;
    probe.epochs = 1;
    probe.seed = derive_seed(seed, 106);
    const Mask all(noisy.n, 1);
    const Phase2Result warm = train_phase2(noisy, all, probe, nullptr);
    const std::vector<double> losses = per_sample_losses(warm.classifier, warm.adapter, noisy);
    Rng batch_rng(derive_seed(seed, 107));
    std::vector<std::size_t> order(noisy.n);
    std::iota(order.begin(), order.end(), 0);
    batch_rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += 64) {
      const std::size_t end = std::min(order.size(), start + 64);
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    const Mask small = select_small_loss(losses, spec.realized_ratio, batches);
    small_sum += selection_metrics(small, truth).f1;
  }
  outcome.deft_f1 = deft_sum / 5.0;
  outcome.small_loss_f1 = small_sum / 5.0;
  return outcome;
}

// 6. Desk-scale Table-1 direction on bench-std. The exact means come from
// the frozen reference run; the window absorbs single-verdict flips from
// cross-toolchain floating-point differences.
void criterion_table1_direction() {
  const BenchOutcome at40 = bench_selection(0.4);
  const BenchOutcome at60 = bench_selection(0.6);
  const bool direction = at40.deft_f1 >= 0.95 && at40.deft_f1 >= at40.small_loss_f1 &&
                         (at60.deft_f1 - at60.small_loss_f1) > 0.0;
  const bool pinned = std::abs(at40.deft_f1 - 0.962313) <= 0.005 &&
                      std::abs(at40.small_loss_f1 - 0.945461) <= 0.005 &&
                      std::abs(at60.deft_f1 - 0.921390) <= 0.005 &&
                      std::abs(at60.small_loss_f1 - 0.801190) <= 0.005;
  report(6, "bench-std selection direction (deft vs small-loss)", direction && pinned,
         "40%: deft " + fmt(at40.deft_f1) + " vs small-loss " + fmt(at40.small_loss_f1) +
             "; 60%: deft " + fmt(at60.deft_f1) + " vs small-loss " + fmt(at60.small_loss_f1) +
             (pinned ? "" : " [drifted from reference values]"));
}

// 7. Desk-scale Figure-5 direction: fft-on-clean >= probe-on-clean >= noisy CE.
void criterion_adaptation_direction() {
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double fft_sum = 0.0;
  double probe_sum = 0.0;
  double noisy_ce_sum = 0.0;
  for (const std::uint64_t seed : seeds) {
    SyntheticConfig synth = bench_std_synthetic();
    synth.n = 6000;  // 5000 train + 1000 test
    synth.seed = derive_seed(seed, 101);
    const LabeledDataset full = generate_synthetic(synth).dataset;
    LabeledDataset train;
    LabeledDataset test;
    train.n = 5000;
    test.n = 1000;
    train.dim = test.dim = full.dim;
    train.num_classes = test.num_classes = full.num_classes;
    train.class_names = test.class_names = full.class_names;
    train.normalized = test.normalized = true;
    train.features.assign(full.features.begin(), full.features.begin() + 5000 * 64);
    test.features.assign(full.features.begin() + 5000 * 64, full.features.end());
    train.given_labels.assign(full.given_labels.begin(), full.given_labels.begin() + 5000);
    test.given_labels.assign(full.given_labels.begin() + 5000, full.given_labels.end());
    train.true_labels = std::vector<std::uint32_t>(train.given_labels);
    test.true_labels = std::vector<std::uint32_t>(test.given_labels);

    const auto [noisy, spec] = inject_symmetric_noise(train, 0.4, derive_seed(seed, 102));

    DetectorConfig det;
    det.seed = derive_seed(seed, 103);
    const DetectorResult deft = train_detector(
        noisy, det, AdapterParams::make_low_rank(noisy.dim, 8, 0.1, derive_seed(seed, 104)));
    const Mask& clean = deft.selection.clean_mask;

    Phase2Config fft;
    fft.mode = Phase2Mode::fft_surrogate;
    fft.seed = derive_seed(seed, 105);
    const Phase2Result fft_run = train_phase2(noisy, clean, fft, &test);

    Phase2Config probe;
    probe.mode = Phase2Mode::linear_probe;
    probe.seed = derive_seed(seed, 105);
    const Phase2Result probe_run = train_phase2(noisy, clean, probe, &test);

    const Mask all(noisy.n, 1);
    const Phase2Result noisy_run = train_phase2(noisy, all, probe, &test);

    fft_sum += *fft_run.last_test_accuracy();
    probe_sum += *probe_run.last_test_accuracy();
    noisy_ce_sum += *noisy_run.last_test_accuracy();
  }
  const double fft_acc = fft_sum / 5.0;
  const double probe_acc = probe_sum / 5.0;
  const double noisy_acc = noisy_ce_sum / 5.0;
  const bool direction = fft_acc >= probe_acc && probe_acc >= noisy_acc;
  // Reference-run means, same drift window as criterion 6.
  const bool pinned = std::abs(fft_acc - 0.9810) <= 0.005 &&
                      std::abs(probe_acc - 0.9806) <= 0.005 &&
                      std::abs(noisy_acc - 0.9696) <= 0.005;
  report(7, "bench-std adaptation direction (fft >= probe >= noisy CE, last accuracy)",
         direction && pinned,
         "fft " + fmt(fft_acc) + " probe " + fmt(probe_acc) + " noisy-CE " + fmt(noisy_acc) +
             (pinned ? "" : " [drifted from reference values]"));
}

// 8. Determinism: rerun from the emitted manifest, byte-identical outputs.
void criterion_determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "deft_acceptance_determinism";
  fs::remove_all(root);

  ExperimentConfig config;
  SyntheticConfig synth;
  synth.n = 600;
  synth.dim = 16;
  synth.num_classes = 5;
  config.data.synthetic = synth;
  config.data.synthetic_test_n = 200;
  config.noise_ratio = 0.4;
  config.detector.detect_epochs = 4;
  config.phase2.epochs = 4;
  config.seeds = {0};
  config.out_dir = (root / "a").string();
  run_experiment(config);

  const ExperimentConfig again = load_experiment_config((root / "a" / "manifest.json").string());
  ExperimentConfig second = again;
  second.out_dir = (root / "b").string();
  run_experiment(second);

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  bool pass = true;
  std::string detail;
  for (const char* name : {"report.csv", "report.jsonl", "seed_0/mask.txt",
                           "seed_0/detector_trace.csv", "seed_0/phase2_trace.csv",
                           "seed_0/model.bin", "seed_0/noise.json"}) {
    if (slurp(root / "a" / name) != slurp(root / "b" / name)) {
      pass = false;
      detail += std::string(" ") + name;
    }
  }
  fs::remove_all(root);
  report(8, "manifest rerun determinism (byte-identical artifacts)", pass,
         pass ? "all artifacts identical" : "differs:" + detail);
}

// 9. Round-trip identity for both embedding file formats.
void criterion_roundtrip() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "deft_acceptance_roundtrip";
  fs::remove_all(root);
  fs::create_directories(root);
  bool pass = true;
  Rng rng(0x99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + rng.uniform_int(60);
    const std::size_t dim = 2 + rng.uniform_int(16);
    const std::size_t k = 2 + rng.uniform_int(6);
    LabeledDataset ds = test::random_dataset(n, dim, k, 0xABC + trial, trial % 2 == 0);
    if (trial % 3 == 0 && ds.has_true_labels()) {
      ds = inject_symmetric_noise(ds, 0.3, trial).first;
    }
    const std::string bin = (root / ("t" + std::to_string(trial) + ".bin")).string();
    const std::string csv = (root / ("t" + std::to_string(trial) + ".csv")).string();
    write_embeddings(ds, bin, FileFormat::binary);
    write_embeddings(ds, csv, FileFormat::csv);
    if (load_embeddings(bin, FileFormat::binary) != ds) {
      pass = false;
    }
    if (load_embeddings(csv, FileFormat::csv) != ds) {
      pass = false;
    }
  }
  fs::remove_all(root);
  report(9, "write/load round trip for binary and csv formats", pass, "20 random datasets");
}

}  // namespace

int main() {
  criterion_f1_fixtures();
  criterion_equivalence_fuzz();
  criterion_gradient_suite();
  criterion_em();
  criterion_noise();
  criterion_table1_direction();
  criterion_adaptation_direction();
  criterion_determinism();
  criterion_roundtrip();
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
