#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bistf/engine.hpp"
#include "bistf/eval.hpp"

using namespace bistf;

namespace {

// Trunkless model whose branch block is a scaled identity and whose heads
// are identities: prediction is argmax of the input vector.
BilateralParams argmax_model(int dim) {
  ModelDims dims;
  dims.input = dim;
  dims.trunk_hidden = {};
  dims.feature = dim;
  dims.classes = dim;
  BilateralParams p;
  p.dims = dims;
  p.last_block_l = Dense::zeros(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  p.last_block_s = p.last_block_l;
  p.head_l = Dense::zeros(static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    p.last_block_l.W[static_cast<std::size_t>(i * dim + i)] = 4.0;
    p.head_l.W[static_cast<std::size_t>(i * dim + i)] = 1.0;
  }
  p.last_block_s = p.last_block_l;
  p.head_s = p.head_l;
  return p;
}

std::vector<double> onehot(int dim, int c, double v = 1.0) {
  std::vector<double> x(static_cast<std::size_t>(dim), 0.0);
  x[static_cast<std::size_t>(c)] = v;
  return x;
}

}  // namespace

TEST_CASE("hand-built confusion matrix") {
  BilateralParams p = argmax_model(3);
  // 6 samples, 4 predicted correctly: truths {0,0,1,1,2,2},
  // predictions {0,0,1,0,2,1}.
  std::vector<Sample> samples = {
      {0, onehot(3, 0), 0, Domain::In, Split::Test},
      {1, onehot(3, 0), 0, Domain::In, Split::Test},
      {2, onehot(3, 1), 1, Domain::In, Split::Test},
      {3, onehot(3, 0), 1, Domain::In, Split::Test},
      {4, onehot(3, 2), 2, Domain::In, Split::Test},
      {5, onehot(3, 1), 2, Domain::In, Split::Test},
  };
  std::vector<const Sample*> split;
  for (const Sample& s : samples) split.push_back(&s);
  Metrics m = evaluate_serial(p, split);
  CHECK(m.top1 == doctest::Approx(4.0 / 6.0));
  CHECK(m.confusion[0][0] == 2);
  CHECK(m.confusion[1][1] == 1);
  CHECK(m.confusion[1][0] == 1);
  CHECK(m.confusion[2][2] == 1);
  CHECK(m.confusion[2][1] == 1);
  CHECK(m.per_class_recall[0] == doctest::Approx(1.0));
  CHECK(m.per_class_recall[1] == doctest::Approx(0.5));
  CHECK(m.per_class_precision[0] == doctest::Approx(2.0 / 3.0));

  // top1 = trace / total, recall_c = diag / row sum.
  long trace = 0, total = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < 3; ++j) {
      total += m.confusion[c][j];
      if (c == j) trace += m.confusion[c][j];
    }
  CHECK(m.top1 == doctest::Approx(static_cast<double>(trace) / total));

  // Parallel path matches the serial reference exactly.
  Metrics par = evaluate(p, split);
  CHECK(par.top1 == m.top1);
  CHECK(par.confusion == m.confusion);
}

TEST_CASE("perfect and constant predictors") {
  BilateralParams p = argmax_model(4);
  std::vector<Sample> samples;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 3; ++i)
      samples.push_back({c * 3 + i, onehot(4, c), c, Domain::In, Split::Test});
  std::vector<const Sample*> split;
  for (const Sample& s : samples) split.push_back(&s);
  Metrics m = evaluate_serial(p, split);
  CHECK(m.top1 == doctest::Approx(1.0));
  for (double r : m.per_class_recall) CHECK(r == doctest::Approx(1.0));

  // All-zero inputs tie every logit; argmax breaks to class 0 on the
  // balanced split, so top1 = 1/C and unpredicted classes get NaN precision.
  for (Sample& s : samples) s.features.assign(4, 0.0);
  Metrics cm = evaluate_serial(p, split);
  CHECK(cm.top1 == doctest::Approx(0.25));
  CHECK(!std::isnan(cm.per_class_precision[0]));
  CHECK(std::isnan(cm.per_class_precision[1]));

  CHECK_THROWS(evaluate_serial(p, {}));
}

TEST_CASE("confusion top pairs ordering") {
  Metrics m;
  m.confusion = {{5, 0, 0}, {0, 5, 0}, {0, 0, 5}};
  CHECK(confusion_top_pairs(m, 3).empty());

  m.confusion = {{5, 0, 0}, {0, 0, 5}, {0, 0, 0}};
  auto pairs = confusion_top_pairs(m, 3);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].truth == 1);
  CHECK(pairs[0].predicted == 2);
  CHECK(pairs[0].count == 5);

  m.confusion = {{0, 3, 2}, {3, 0, 0}, {0, 0, 0}};
  pairs = confusion_top_pairs(m, 2);
  REQUIRE(pairs.size() == 2);
  // Tie on count 3 resolves by (row, col).
  CHECK(pairs[0].truth == 0);
  CHECK(pairs[0].predicted == 1);
  CHECK(pairs[1].truth == 1);
  CHECK(pairs[1].predicted == 0);

  CHECK_THROWS(confusion_top_pairs(m, 0));
}

TEST_CASE("ablation report aggregation") {
  RunSummary a{"linear", "h1", 0.5, 0.4};
  RunSummary b{"linear", "h1", 0.7, 0.6};
  RunSummary c{"all", "h1", 0.5, 0.5};

  auto single = ablation_report({a});
  REQUIRE(single.size() == 1);
  CHECK(single[0].test_mean == doctest::Approx(0.4));
  CHECK(single[0].test_sd == doctest::Approx(0.0));

  auto same = ablation_report({a, a, a});
  CHECK(same[0].test_sd == doctest::Approx(0.0));

  auto table = ablation_report({a, b, c});
  REQUIRE(table.size() == 2);
  for (const AblationRow& row : table) {
    if (row.strategy == "linear") {
      CHECK(row.runs == 2);
      CHECK(row.test_mean == doctest::Approx(0.5));
      CHECK(row.val_mean == doctest::Approx(0.6));
    }
  }

  RunSummary other{"all", "h2", 0.5, 0.5};
  CHECK_THROWS(ablation_report({a, other}));
}

TEST_CASE("trained models confuse within-genus classes more than untrained ones") {
  int trained_within = 0, untrained_within = 0, trials = 20;
  for (int t = 0; t < trials; ++t) {
    SyntheticSpec spec;
    spec.C_in = 10;
    spec.C_out = 0;
    spec.N_1 = 30;
    spec.gamma = 3.0;
    spec.genus_size = 2;
    spec.cluster_spread = 0.5;
    spec.genus_spread = 1.2;
    spec.unlabeled_multiplier = 0.0;
    spec.test_per_class = 20;
    spec.seed = 500 + static_cast<std::uint64_t>(t);
    Corpus corpus = generate_corpus(spec);
    std::vector<const Sample*> test;
    for (const Sample& s : corpus.samples)
      if (s.split == Split::Test) test.push_back(&s);

    RunConfig cfg;
    cfg.generations = 1;
    cfg.epochs_per_generation = 25;
    cfg.lr = 0.05;
    cfg.update_schedule.kind = UpdateSchedule::Kind::Linear;
    cfg.update_schedule.p_start = 0.0;
    cfg.update_schedule.p_end = 0.0;
    cfg.seed = 900 + static_cast<std::uint64_t>(t);

    Rng rng(cfg.seed);
    ModelDims dims;
    dims.input = corpus.feature_dim;
    dims.classes = corpus.num_classes;
    BilateralParams untrained = BilateralParams::init(dims, rng);
    auto untrained_pairs = confusion_top_pairs(evaluate(untrained, test), 1);

    History h = SelfTrainer(corpus, cfg).run();
    REQUIRE(!h.diverged);
    // Re-evaluate the confusion structure from the stored final metrics.
    auto trained_pairs = confusion_top_pairs(h.final_test_metrics, 1);

    auto same_genus = [&](const std::vector<ConfusionPair>& pairs) {
      return !pairs.empty() &&
             pairs[0].truth / spec.genus_size == pairs[0].predicted / spec.genus_size;
    };
    if (same_genus(trained_pairs)) ++trained_within;
    if (same_genus(untrained_pairs)) ++untrained_within;
  }
  // Chance rate for a random off-diagonal pair sharing a genus is 1/9.
  CHECK(trained_within >= trials / 2);
  CHECK(trained_within >= untrained_within - 2);
}
