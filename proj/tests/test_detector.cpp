#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "deft/detector.hpp"
#include "deft/error.hpp"
#include "deft/experiment.hpp"
#include "deft/noise.hpp"
#include "deft/synthetic.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

using namespace deft;

namespace {

LabeledDataset two_dim_sample(float x0, float x1, std::uint32_t label, std::size_t num_classes) {
  LabeledDataset ds;
  ds.n = 1;
  ds.dim = 2;
  ds.num_classes = num_classes;
  ds.class_names = default_class_names(num_classes);
  ds.features = {x0, x1};
  ds.given_labels = {label};
  return ds;
}

PromptPair random_prompts(Rng& rng, std::size_t num_classes, std::size_t dim) {
  PromptPair prompts;
  prompts.positive = Matrix(num_classes, dim);
  prompts.negative = Matrix(num_classes, dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto pos = test::random_unit(rng, dim);
    const auto neg = test::random_unit(rng, dim);
    for (std::size_t j = 0; j < dim; ++j) {
      prompts.positive.at(k, j) = pos[j];
      prompts.negative.at(k, j) = neg[j];
    }
  }
  return prompts;
}

}  // namespace

TEST_CASE("zero-shot prediction with oracle anchors recovers clean labels") {
  SyntheticConfig config;
  config.n = 200;
  config.dim = 16;
  config.num_classes = 5;
  config.intra_class_noise = 0.0;
  config.text_anchor_jitter = 0.0;
  config.seed = 2;
  const SyntheticData data = generate_synthetic(config);
  const ZeroShotResult zs = zero_shot_predict(data.dataset, data.text_anchors, Temperature(0.01));
  CHECK(zs.labels == *data.dataset.true_labels);
}

TEST_CASE("zero-shot probabilities reproduce the two-class hand value") {
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 2);
  Matrix prompts(2, 2);
  prompts.at(0, 0) = 0.5;
  prompts.at(0, 1) = std::sqrt(1.0 - 0.25);
  prompts.at(1, 0) = 0.3;
  prompts.at(1, 1) = std::sqrt(1.0 - 0.09);
  const ZeroShotResult zs = zero_shot_predict(ds, prompts, Temperature(0.1));
  CHECK(zs.probabilities.at(0, 0) == doctest::Approx(0.8808).epsilon(1e-3));
  CHECK(zs.probabilities.at(0, 1) == doctest::Approx(0.1192).epsilon(1e-3));
  CHECK(zs.labels[0] == 0);
}

TEST_CASE("zero-shot ties resolve to the smallest class id") {
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 4);
  Matrix prompts(4, 2);
  for (std::size_t k = 0; k < 4; ++k) {
    prompts.at(k, 0) = 0.0;
    prompts.at(k, 1) = 1.0;
  }
  const ZeroShotResult zs = zero_shot_predict(ds, prompts, Temperature(0.5));
  CHECK(zs.labels[0] == 0);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(zs.probabilities.at(0, k) == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("detector ops reject mismatched shapes") {
  Rng rng(4);
  const LabeledDataset ds = test::random_dataset(10, 8, 3, 11);
  Matrix narrow(3, 6);  // wrong dimension
  for (double& v : narrow.data()) {
    v = rng.normal();
  }
  CHECK_THROWS_AS(zero_shot_predict(ds, narrow, Temperature(0.1)), DimensionError);

  PromptPair prompts = random_prompts(rng, 3, 8);
  prompts.negative = Matrix(3, 6);
  for (double& v : prompts.negative.data()) {
    v = rng.normal();
  }
  CHECK_THROWS_AS(select_clean(ds, prompts, Temperature(0.1), false), DimensionError);
  CHECK_THROWS_AS(threshold(ds, random_prompts(rng, 3, 8), 99), DimensionError);
}

TEST_CASE("threshold is the cosine to the given class negative prompt") {
  Rng rng(5);
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 1, 3);
  PromptPair prompts = random_prompts(rng, 3, 2);

  SUBCASE("collinear negative prompt gives threshold 1") {
    prompts.negative.at(1, 0) = 1.0;
    prompts.negative.at(1, 1) = 0.0;
    CHECK(threshold(ds, prompts, 0) == doctest::Approx(1.0));
  }
  SUBCASE("orthogonal negative prompt gives threshold 0") {
    prompts.negative.at(1, 0) = 0.0;
    prompts.negative.at(1, 1) = 1.0;
    CHECK(threshold(ds, prompts, 0) == doctest::Approx(0.0));
  }
  SUBCASE("matches a direct cosine_sim call") {
    const double direct = cosine_sim(std::span<const float>(ds.embedding(0)),
                                     std::span<const double>(prompts.negative.row(1)));
    CHECK(threshold(ds, prompts, 0) == direct);
  }
}

TEST_CASE("clean probability: symmetric pair gives exactly one half") {
  Rng rng(8);
  LabeledDataset ds = two_dim_sample(0.6f, 0.8f, 0, 2);
  PromptPair prompts = random_prompts(rng, 2, 2);
  prompts.negative = prompts.positive;
  const std::vector<double> p = clean_probability(ds, prompts, Temperature(0.1));
  CHECK(p[0] == 0.5);
}

TEST_CASE("clean probability hand values at tau 0.1") {
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 2);
  PromptPair prompts;
  prompts.positive = Matrix(2, 2);
  prompts.negative = Matrix(2, 2);
  prompts.positive.at(0, 0) = 0.6;
  prompts.positive.at(0, 1) = 0.8;
  prompts.negative.at(0, 0) = 0.4;
  prompts.negative.at(0, 1) = std::sqrt(1.0 - 0.16);
  prompts.positive.at(1, 1) = 1.0;
  prompts.negative.at(1, 1) = 1.0;

  const double sigma2 = 1.0 / (1.0 + std::exp(-2.0));
  const std::vector<double> p = clean_probability(ds, prompts, Temperature(0.1));
  CHECK(p[0] == doctest::Approx(sigma2).epsilon(1e-10));
  CHECK(p[0] == doctest::Approx(0.8808).epsilon(1e-3));

  std::swap(prompts.positive, prompts.negative);
  const std::vector<double> q = clean_probability(ds, prompts, Temperature(0.1));
  CHECK(q[0] == doctest::Approx(1.0 - sigma2).epsilon(1e-10));
}

TEST_CASE("select_clean marks strict winners clean and exact ties noisy") {
  Rng rng(9);

  SUBCASE("positive everywhere stronger: everything clean") {
    SyntheticConfig synth;
    synth.n = 40;
    synth.dim = 8;
    synth.num_classes = 4;
    synth.seed = 12;
    const LabeledDataset ds = generate_synthetic(synth).dataset;
    PromptPair prompts = init_prompts(ds, 1);
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t j = 0; j < 8; ++j) {
        prompts.negative.at(k, j) = -prompts.positive.at(k, j);
      }
    }
    const SelectionResult sel = select_clean(ds, prompts, Temperature(0.01), false);
    CHECK(sel.selected_count() == ds.n);
  }

  SUBCASE("identical prompt pairs tie everywhere: nothing clean") {
    const LabeledDataset ds = test::random_dataset(40, 8, 4, 12);
    PromptPair prompts = random_prompts(rng, 4, 8);
    prompts.negative = prompts.positive;
    const SelectionResult sel = select_clean(ds, prompts, Temperature(0.01), false);
    CHECK(sel.selected_count() == 0);
    for (std::size_t i = 0; i < ds.n; ++i) {
      CHECK(sel.clean_prob[i] == 0.5);
    }
  }
}

TEST_CASE("consistency constraint only removes samples") {
  Rng rng(10);
  SyntheticConfig config;
  config.n = 300;
  config.dim = 16;
  config.num_classes = 6;
  config.seed = 3;
  LabeledDataset ds = generate_synthetic(config).dataset;
  const auto [noisy, spec] = inject_symmetric_noise(ds, 0.3, 5);
  const PromptPair prompts = init_prompts(noisy, 2);
  const SelectionResult unconstrained = select_clean(noisy, prompts, Temperature(0.01), false);
  const SelectionResult constrained = select_clean(noisy, prompts, Temperature(0.01), true);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < noisy.n; ++i) {
    CHECK(constrained.clean_mask[i] <= unconstrained.clean_mask[i]);
    dropped += unconstrained.clean_mask[i] && !constrained.clean_mask[i] ? 1 : 0;
    if (constrained.clean_mask[i]) {
      CHECK(constrained.pseudo_labels[i] == noisy.given_labels[i]);
    }
  }
  INFO("constraint dropped ", dropped, " samples");
}

TEST_CASE("criterion equivalence: prob > 1/2 iff sim+ > threshold iff clean") {
  Rng rng(14);
  int checked = 0;
  for (int state = 0; state < 200; ++state) {
    const std::size_t dim = 2 + rng.uniform_int(14);
    const std::size_t k = 2 + rng.uniform_int(6);
    const LabeledDataset ds = test::random_dataset(10, dim, k, 1000 + state);
    PromptPair prompts = random_prompts(rng, k, dim);
    const Temperature tau(std::exp(rng.uniform(std::log(1e-3), std::log(1.0))));
    const SelectionResult sel = select_clean(ds, prompts, tau, false);
    for (std::size_t i = 0; i < ds.n; ++i) {
      const bool by_prob = sel.clean_prob[i] > 0.5;
      const bool by_threshold = sel.pos_sim[i] > sel.threshold[i];
      const bool by_mask = sel.clean_mask[i] != 0;
      REQUIRE(by_prob == by_threshold);
      REQUIRE(by_threshold == by_mask);
      ++checked;
    }
  }
  CHECK(checked == 2000);
}

TEST_CASE("complementary labels: forced case and exclusion rule") {
  Rng rng(15);
  SUBCASE("K=2 with matching pseudo label forces the opposite class") {
    const LabeledDataset ds = test::random_dataset(20, 4, 2, 16);
    const std::vector<std::uint32_t> pseudo = ds.given_labels;
    const auto comp = sample_complementary_labels(ds, pseudo, rng);
    for (std::size_t i = 0; i < ds.n; ++i) {
      CHECK(comp[i] == 1 - ds.given_labels[i]);
    }
  }
  SUBCASE("never equals the given label") {
    const LabeledDataset ds = test::random_dataset(500, 4, 6, 17);
    std::vector<std::uint32_t> pseudo(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
      pseudo[i] = static_cast<std::uint32_t>(rng.uniform_int(6));
    }
    const auto comp = sample_complementary_labels(ds, pseudo, rng);
    for (std::size_t i = 0; i < ds.n; ++i) {
      CHECK(comp[i] != ds.given_labels[i]);
      if (pseudo[i] != ds.given_labels[i]) {
        CHECK(comp[i] != pseudo[i]);
      }
    }
  }
  SUBCASE("single class is rejected") {
    LabeledDataset ds = test::random_dataset(5, 4, 2, 18);
    ds.num_classes = 1;
    ds.given_labels.assign(ds.n, 0);
    ds.true_labels = ds.given_labels;
    ds.class_names = default_class_names(1);
    const std::vector<std::uint32_t> pseudo(ds.n, 0);
    CHECK_THROWS_AS(sample_complementary_labels(ds, pseudo, rng), ConfigError);
  }
}

TEST_CASE("complementary labels are uniform over the allowed set") {
  // Single sample with y=0, pseudo=1 in K=10: classes 2..9 each get 1/8.
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 10);
  const std::vector<std::uint32_t> pseudo{1};
  Rng rng(42);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) {
    ++counts[sample_complementary_labels(ds, pseudo, rng)[0]];
  }
  CHECK(counts[0] == 0);
  CHECK(counts[1] == 0);
  for (int c = 2; c < 10; ++c) {
    const double share = static_cast<double>(counts[c]) / draws;
    CHECK(share >= 0.125 - 0.00375);
    CHECK(share <= 0.125 + 0.00375);
  }
}

TEST_CASE("loss_dp at the symmetric point equals 2 ln 2") {
  Rng rng(19);
  const LabeledDataset ds = test::random_dataset(6, 8, 3, 20);
  PromptPair prompts = random_prompts(rng, 3, 8);
  prompts.negative = prompts.positive;  // p_clean = 1/2 everywhere
  const std::vector<std::uint32_t> pseudo = ds.given_labels;
  Rng comp_rng(21);
  const auto comp = sample_complementary_labels(ds, pseudo, comp_rng);
  const DualPromptLoss loss = loss_dp(ds, prompts, Temperature(0.1), pseudo, comp, 1.0);
  CHECK(loss.value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_dp vanishes for a perfect detector") {
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 2);
  PromptPair prompts;
  prompts.positive = Matrix(2, 2);
  prompts.negative = Matrix(2, 2);
  // Class 0 (pseudo): positive collinear, negative antipodal -> p_clean ~ 1.
  prompts.positive.at(0, 0) = 1.0;
  prompts.negative.at(0, 0) = -1.0;
  // Class 1 (complementary): reversed -> p_clean ~ 0.
  prompts.positive.at(1, 0) = -1.0;
  prompts.negative.at(1, 0) = 1.0;
  const std::vector<std::uint32_t> pseudo{0};
  const std::vector<std::uint32_t> comp{1};
  const DualPromptLoss loss = loss_dp(ds, prompts, Temperature(0.01), pseudo, comp, 1.0);
  CHECK(loss.value < 1e-8);
}

TEST_CASE("loss_dp analytic gradients match central finite differences") {
  Rng rng(23);
  double worst = 0.0;
  for (int state = 0; state < 100; ++state) {
    const std::size_t dim = 3 + rng.uniform_int(6);
    const std::size_t k = 2 + rng.uniform_int(4);
    const std::size_t n = 2 + rng.uniform_int(4);
    const LabeledDataset ds = test::random_dataset(n, dim, k, 700 + state);
    PromptPair prompts = random_prompts(rng, k, dim);
    const Temperature tau(rng.uniform(0.2, 1.0));
    const double lambda_pos = rng.uniform(0.25, 1.0);
    std::vector<std::uint32_t> pseudo(n);
    for (std::size_t i = 0; i < n; ++i) {
      pseudo[i] = static_cast<std::uint32_t>(rng.uniform_int(k));
    }
    const auto comp = sample_complementary_labels(ds, pseudo, rng);
    const DualPromptLoss loss = loss_dp(ds, prompts, tau, pseudo, comp, lambda_pos);

    const auto value = [&]() {
      return loss_dp(ds, prompts, tau, pseudo, comp, lambda_pos).value;
    };
    worst = std::max(worst, test::max_gradient_error(prompts.positive, loss.grad_positive, value));
    worst = std::max(worst, test::max_gradient_error(prompts.negative, loss.grad_negative, value));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss_sim equal-similarity case equals ln K") {
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 5);
  Matrix positive(5, 2);
  for (std::size_t k = 0; k < 5; ++k) {
    positive.at(k, 1) = 1.0;
  }
  const std::vector<std::size_t> subset{0};
  const std::vector<std::uint32_t> targets{0};
  const AlignmentLoss loss = loss_sim(ds, subset, targets, positive, Temperature(0.1),
                                      AdapterParams::make_identity(2));
  CHECK(loss.value == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("loss_sim collinear sample against antipodal distractors") {
  const std::size_t k = 10;
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 3, k);
  Matrix positive(k, 2);
  for (std::size_t c = 0; c < k; ++c) {
    positive.at(c, 0) = c == 3 ? 1.0 : -1.0;
  }
  const std::vector<std::size_t> subset{0};
  const std::vector<std::uint32_t> targets{3};
  const AlignmentLoss loss = loss_sim(ds, subset, targets, positive, Temperature(0.1),
                                      AdapterParams::make_identity(2));
  const double expected = std::log1p(9.0 * std::exp(-20.0));
  CHECK(loss.value == doctest::Approx(expected).epsilon(1e-10));
  CHECK(loss.value < 1e-7);
}

TEST_CASE("loss_sim rejects an empty subset") {
  const LabeledDataset ds = test::random_dataset(4, 4, 2, 30);
  const std::vector<std::size_t> empty;
  const std::vector<std::uint32_t> targets(4, 0);
  Matrix positive(2, 4);
  positive.at(0, 0) = 1.0;
  positive.at(1, 1) = 1.0;
  CHECK_THROWS_AS(
      loss_sim(ds, empty, targets, positive, Temperature(0.1), AdapterParams::make_identity(4)),
      EmptyInputError);
}

TEST_CASE("loss_sim gradients match finite differences for every adapter mode") {
  Rng rng(31);
  double worst = 0.0;
  for (int state = 0; state < 100; ++state) {
    const std::size_t dim = 4 + rng.uniform_int(5);
    const std::size_t k = 2 + rng.uniform_int(4);
    const std::size_t n = 3 + rng.uniform_int(3);
    const LabeledDataset ds = test::random_dataset(n, dim, k, 900 + state);
    PromptPair prompts = random_prompts(rng, k, dim);
    const Temperature tau(rng.uniform(0.2, 1.0));
    std::vector<std::size_t> subset(n);
    std::iota(subset.begin(), subset.end(), 0);
    std::vector<std::uint32_t> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
      targets[i] = static_cast<std::uint32_t>(rng.uniform_int(k));
    }

    AdapterParams adapter = AdapterParams::make_identity(dim);
    const int mode = state % 3;
    if (mode == 1) {
      adapter = AdapterParams::make_low_rank(dim, 2, 0.1, 77 + state);
      for (double& v : adapter.up.data()) {
        v = 0.3 * rng.normal();  // move off the zero init so both factors matter
      }
    } else if (mode == 2) {
      adapter = AdapterParams::make_full(dim);
      for (double& v : adapter.dense.data()) {
        v += 0.05 * rng.normal();
      }
    }

    const AlignmentLoss loss = loss_sim(ds, subset, targets, prompts.positive, tau, adapter);
    const auto value = [&]() {
      return loss_sim(ds, subset, targets, prompts.positive, tau, adapter).value;
    };
    worst =
        std::max(worst, test::max_gradient_error(prompts.positive, loss.grad_positive, value));
    if (mode == 1) {
      worst = std::max(worst, test::max_gradient_error(adapter.down, loss.grad_adapter.down, value));
      worst = std::max(worst, test::max_gradient_error(adapter.up, loss.grad_adapter.up, value));
    } else if (mode == 2) {
      worst =
          std::max(worst, test::max_gradient_error(adapter.dense, loss.grad_adapter.dense, value));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("losses are invariant under a joint orthogonal rotation") {
  Rng rng(33);
  const std::size_t dim = 8;
  const std::size_t k = 4;
  const std::size_t n = 12;
  const LabeledDataset ds = test::random_dataset(n, dim, k, 44);
  PromptPair prompts = random_prompts(rng, k, dim);
  std::vector<std::uint32_t> pseudo(n);
  for (std::size_t i = 0; i < n; ++i) {
    pseudo[i] = static_cast<std::uint32_t>(rng.uniform_int(k));
  }
  const auto comp = sample_complementary_labels(ds, pseudo, rng);

  // Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
  Matrix q(dim, dim);
  for (std::size_t c = 0; c < dim; ++c) {
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      v[j] = rng.normal();
    }
    for (std::size_t prev = 0; prev < c; ++prev) {
      double proj = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        proj += v[j] * q.at(j, prev);
      }
      for (std::size_t j = 0; j < dim; ++j) {
        v[j] -= proj * q.at(j, prev);
      }
    }
    normalize_in_place(v);
    for (std::size_t j = 0; j < dim; ++j) {
      q.at(j, c) = v[j];
    }
  }
  const auto rotate = [&](std::span<const double> v, std::span<double> out) {
    for (std::size_t c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        acc += v[j] * q.at(j, c);
      }
      out[c] = acc;
    }
  };

  LabeledDataset rotated = ds;
  std::vector<double> buf_in(dim);
  std::vector<double> buf_out(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      buf_in[j] = static_cast<double>(ds.features[i * dim + j]);
    }
    rotate(buf_in, buf_out);
    for (std::size_t j = 0; j < dim; ++j) {
      rotated.features[i * dim + j] = static_cast<float>(buf_out[j]);
    }
  }
  PromptPair rotated_prompts = prompts;
  for (std::size_t c = 0; c < k; ++c) {
    rotate(prompts.positive.row(c), rotated_prompts.positive.row(c));
    rotate(prompts.negative.row(c), rotated_prompts.negative.row(c));
  }

  const Temperature tau(0.25);
  const double dp_before = loss_dp(ds, prompts, tau, pseudo, comp, 1.0).value;
  const double dp_after = loss_dp(rotated, rotated_prompts, tau, pseudo, comp, 1.0).value;
  CHECK(dp_after == doctest::Approx(dp_before).epsilon(1e-4));

  std::vector<std::size_t> subset(n);
  std::iota(subset.begin(), subset.end(), 0);
  const double sim_before =
      loss_sim(ds, subset, pseudo, prompts.positive, tau, AdapterParams::make_identity(dim)).value;
  const double sim_after = loss_sim(rotated, subset, pseudo, rotated_prompts.positive, tau,
                                    AdapterParams::make_identity(dim))
                               .value;
  CHECK(sim_after == doctest::Approx(sim_before).epsilon(1e-4));
}

TEST_CASE("raising the positive similarity never flips a clean verdict to noisy") {
  LabeledDataset ds = two_dim_sample(1.0f, 0.0f, 0, 2);
  PromptPair prompts;
  prompts.positive = Matrix(2, 2);
  prompts.negative = Matrix(2, 2);
  prompts.negative.at(0, 0) = 0.3;
  prompts.negative.at(0, 1) = std::sqrt(1.0 - 0.09);
  prompts.positive.at(1, 1) = 1.0;
  prompts.negative.at(1, 1) = 1.0;

  bool was_clean = false;
  for (double angle = 1.5; angle >= 0.0; angle -= 0.05) {  // pos_sim = cos(angle) increases
    prompts.positive.at(0, 0) = std::cos(angle);
    prompts.positive.at(0, 1) = std::sin(angle);
    const SelectionResult sel = select_clean(ds, prompts, Temperature(0.01), false);
    const bool clean = sel.clean_mask[0] != 0;
    if (was_clean) {
      REQUIRE(clean);  // monotone response
    }
    was_clean = clean;
  }
  CHECK(was_clean);
}

TEST_CASE("train_detector with zero epochs returns the initialization") {
  const LabeledDataset ds = test::random_dataset(60, 8, 4, 50);
  DetectorConfig config;
  config.warmup_epochs = 0;
  config.detect_epochs = 0;
  config.seed = 5;
  const DetectorResult result =
      train_detector(ds, config, AdapterParams::make_identity(ds.dim));
  CHECK(result.prompts == init_prompts(ds, derive_seed(5, 1)));
  CHECK(result.trace.empty());
}

TEST_CASE("train_detector is deterministic per seed") {
  SyntheticConfig synth;
  synth.n = 300;
  synth.dim = 16;
  synth.num_classes = 5;
  synth.seed = 6;
  LabeledDataset ds = generate_synthetic(synth).dataset;
  const auto [noisy, spec] = inject_symmetric_noise(ds, 0.3, 7);
  DetectorConfig config;
  config.detect_epochs = 3;
  config.batch_size = 32;
  config.seed = 11;
  const auto adapter = [&]() { return AdapterParams::make_low_rank(16, 4, 0.1, 99); };
  const DetectorResult a = train_detector(noisy, config, adapter());
  const DetectorResult b = train_detector(noisy, config, adapter());
  CHECK(a.selection.clean_mask == b.selection.clean_mask);
  CHECK(a.prompts == b.prompts);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t e = 0; e < a.trace.size(); ++e) {
    CHECK(a.trace[e].loss_dp == b.trace[e].loss_dp);
    CHECK(a.trace[e].loss_sim == b.trace[e].loss_sim);
    CHECK(a.trace[e].n_selected == b.trace[e].n_selected);
  }
}

TEST_CASE("prompt rows stay unit norm through training") {
  SyntheticConfig synth;
  synth.n = 200;
  synth.dim = 12;
  synth.num_classes = 4;
  synth.seed = 8;
  LabeledDataset ds = generate_synthetic(synth).dataset;
  const auto [noisy, spec] = inject_symmetric_noise(ds, 0.4, 9);
  DetectorConfig config;
  config.detect_epochs = 4;
  config.seed = 3;
  const DetectorResult result =
      train_detector(noisy, config, AdapterParams::make_low_rank(12, 4, 0.1, 1));
  for (std::size_t k = 0; k < result.prompts.num_classes(); ++k) {
    CHECK(detail::norm_f64(result.prompts.positive.row(k)) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(detail::norm_f64(result.prompts.negative.row(k)) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("detector recovers a high-F1 clean subset on the synthetic benchmark") {
  SyntheticConfig synth = bench_std_synthetic();
  synth.seed = 0;
  const SyntheticData data = generate_synthetic(synth);
  const auto [noisy, spec] = inject_symmetric_noise(data.dataset, 0.4, 1);
  DetectorConfig config;
  config.seed = 2;
  const DetectorResult result = train_detector(
      noisy, config, AdapterParams::make_low_rank(noisy.dim, 8, 0.1, 3));
  const SelectionMetrics metrics =
      selection_metrics(result.selection.clean_mask, true_clean_mask(noisy));
  INFO("precision ", metrics.precision, " recall ", metrics.recall, " f1 ", metrics.f1);
  CHECK(metrics.f1 >= 0.95);
}

TEST_CASE("severe-noise preset rescales the positive loss and learning rate") {
  const DetectorConfig preset = severe_noise_preset();
  CHECK(preset.lambda_pos == 0.25);
  CHECK(preset.lr == doctest::Approx(1e-2));
}

TEST_CASE("detector config validation") {
  DetectorConfig config;
  config.warmup_epochs = 5;
  config.detect_epochs = 2;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = DetectorConfig{};
  config.lambda_pos = 0.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = DetectorConfig{};
  config.momentum = 1.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("detector trace csv columns") {
  std::vector<DetectorEpochStats> trace(1);
  trace[0].epoch = 1;
  trace[0].loss_dp = 0.5;
  trace[0].loss_sim = 0.25;
  trace[0].n_selected = 10;
  test::TempDir dir("trace");
  const std::string path = dir.file("trace.csv");
  write_detector_trace(trace, path);
  std::ifstream in(path);
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "epoch,loss_dp,loss_sim,n_selected,precision,recall,f1");
  CHECK(row == "1,0.5,0.25,10,,,");
}
