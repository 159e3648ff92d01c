#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "bistf/corpus.hpp"
#include "bistf/pseudo.hpp"
#include "test_support.hpp"

using namespace bistf;
using namespace bistf::testing;

namespace {

std::vector<PseudoLabel> make_candidates(const std::vector<long>& per_class,
                                         Rng& rng) {
  std::vector<PseudoLabel> out;
  std::int64_t id = 1000;
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (long i = 0; i < per_class[c]; ++i)
      out.push_back({id++, static_cast<int>(c), 0.95 + 0.05 * rng.uniform()});
  return out;
}

BilateralParams small_params(int d_in, int classes, std::uint64_t seed) {
  Rng rng(seed);
  ModelDims dims;
  dims.input = d_in;
  dims.trunk_hidden = {6};
  dims.feature = 4;
  dims.classes = classes;
  return BilateralParams::init(dims, rng);
}

}  // namespace

TEST_CASE("pseudo labeling thresholds on max probability") {
  BilateralParams params = small_params(4, 3, 5);
  SyntheticSpec spec;
  spec.C_in = 3;
  spec.C_out = 2;
  spec.N_1 = 16;
  spec.gamma = 4.0;
  spec.D_in = 4;
  Corpus corpus = generate_corpus(spec);
  std::vector<const Sample*> pool;
  for (const Sample& s : corpus.samples)
    if (s.split == Split::Unlabeled) pool.push_back(&s);
  REQUIRE(!pool.empty());

  // Every emission agrees with predict() and clears the threshold.
  double tau = 0.5;
  auto labels = pseudo_label_pool_serial(params, pool, tau);
  std::set<std::int64_t> emitted;
  for (const PseudoLabel& pl : labels) {
    emitted.insert(pl.sample_id);
    CHECK(pl.confidence >= tau);
  }
  for (const Sample* s : pool) {
    Prediction p = predict(s->features, params);
    if (p.confidence >= tau) {
      CHECK(emitted.count(s->id) == 1);
    } else {
      CHECK(emitted.count(s->id) == 0);
    }
  }
  // Output sorted by id.
  for (std::size_t i = 1; i < labels.size(); ++i)
    CHECK(labels[i - 1].sample_id < labels[i].sample_id);

  // Boundary is inclusive: tau equal to an emitted confidence keeps it.
  REQUIRE(!labels.empty());
  double boundary = labels.front().confidence;
  auto at_boundary = pseudo_label_pool_serial(params, pool, boundary);
  bool found = false;
  for (const PseudoLabel& pl : at_boundary)
    if (pl.sample_id == labels.front().sample_id) found = true;
  CHECK(found);

  // Parallel path is identical to the serial reference.
  auto par = pseudo_label_pool(params, pool, tau);
  REQUIRE(par.size() == labels.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].sample_id == labels[i].sample_id);
    CHECK(par[i].predicted_class == labels[i].predicted_class);
    CHECK(par[i].confidence == labels[i].confidence);
  }

  CHECK_THROWS(pseudo_label_pool_serial(params, pool, 0.0));
}

TEST_CASE("strict selection worked example") {
  Rng rng(2);
  auto candidates = make_candidates({10, 10, 1}, rng);
  SelectionPlan plan =
      distribution_matched_select(candidates, {{8, 4, 2}}, 1.0, SelectionMode::Strict);
  CHECK(plan.k_star == doctest::Approx(0.5));
  CHECK(plan.per_class_target == std::vector<long>{4, 2, 1});
  CHECK(plan.chosen_ids.size() == 7);

  // Per class the chosen are the top-confidence candidates (full-sort oracle).
  for (int c = 0; c < 3; ++c) {
    std::vector<PseudoLabel> of_class;
    for (const auto& cand : candidates)
      if (cand.predicted_class == c) of_class.push_back(cand);
    std::sort(of_class.begin(), of_class.end(), [](const auto& a, const auto& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.sample_id < b.sample_id;
    });
    std::set<std::int64_t> chosen(plan.chosen_ids.begin(), plan.chosen_ids.end());
    for (long i = 0; i < plan.per_class_target[static_cast<std::size_t>(c)]; ++i)
      CHECK(chosen.count(of_class[static_cast<std::size_t>(i)].sample_id) == 1);
  }
}

TEST_CASE("strict selection edge cases") {
  Rng rng(3);
  auto candidates = make_candidates({5, 0}, rng);
  SelectionPlan plan =
      distribution_matched_select(candidates, {{4, 2}}, 1.0, SelectionMode::Strict);
  CHECK(plan.k_star == doctest::Approx(0.0));
  CHECK(plan.chosen_ids.empty());

  plan = distribution_matched_select({}, {{4, 2}}, 1.0, SelectionMode::Strict);
  CHECK(plan.chosen_ids.empty());

  auto plenty = make_candidates({100, 100}, rng);
  plan = distribution_matched_select(plenty, {{4, 2}}, 0.5, SelectionMode::Strict);
  CHECK(plan.per_class_target == std::vector<long>{2, 1});

  CHECK_THROWS(distribution_matched_select(plenty, {{4, 2}}, 0.0, SelectionMode::Strict));
  CHECK_THROWS(distribution_matched_select(plenty, {{4, 0}}, 1.0, SelectionMode::Strict));
}

TEST_CASE("lenient selection fills classes independently") {
  Rng rng(4);
  auto candidates = make_candidates({10, 1}, rng);
  SelectionPlan plan =
      distribution_matched_select(candidates, {{8, 4}}, 1.0, SelectionMode::Lenient);
  CHECK(plan.per_class_target == std::vector<long>{8, 1});
}

TEST_CASE("strict k_star matches the brute-force oracle on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    int C = 2 + static_cast<int>(rng.uniform_index(5));
    std::vector<long> n, a;
    for (int c = 0; c < C; ++c) {
      n.push_back(1 + static_cast<long>(rng.uniform_index(30)));
      a.push_back(static_cast<long>(rng.uniform_index(40)));
    }
    double k_max = 0.1 + 2.0 * rng.uniform();
    auto candidates = make_candidates(a, rng);
    SelectionPlan plan =
        distribution_matched_select(candidates, {n}, k_max, SelectionMode::Strict);
    CHECK(plan.k_star == doctest::Approx(k_star_oracle(n, a, k_max)).epsilon(1e-12));

    // Proportionality within floor slack.
    long s_total = 0;
    for (long s : plan.per_class_target) s_total += s;
    if (s_total > 0) {
      long n_total = 0;
      for (long v : n) n_total += v;
      for (std::size_t c = 0; c < n.size(); ++c) {
        double lhs = std::fabs(static_cast<double>(plan.per_class_target[c]) / s_total -
                               static_cast<double>(n[c]) / n_total);
        CHECK(lhs <= static_cast<double>(C) / static_cast<double>(s_total) + 1e-12);
      }
    }

    // Maximality: nudging k by 1/max(N_c) breaks availability or the cap.
    if (plan.k_star < k_max - 1e-12) {
      long n_max = *std::max_element(n.begin(), n.end());
      double k2 = plan.k_star + 1.0 / static_cast<double>(n_max);
      bool violates = k2 > k_max;
      for (std::size_t c = 0; c < n.size(); ++c)
        if (k2 * static_cast<double>(n[c]) > static_cast<double>(a[c]) + 1e-9)
          violates = true;
      CHECK(violates);
    }
  }
}

TEST_CASE("update probability semantics") {
  UpdateSchedule all;
  all.kind = UpdateSchedule::Kind::All;
  all.total_epochs = 10;
  CHECK(update_probability(0, all) == 1.0);
  CHECK(update_probability(10, all) == 1.0);

  UpdateSchedule lin;
  lin.kind = UpdateSchedule::Kind::Linear;
  lin.p_start = 0.1;
  lin.p_end = 1.0;
  lin.total_epochs = 10;
  CHECK(update_probability(0, lin) == doctest::Approx(0.1));
  CHECK(update_probability(10, lin) == doctest::Approx(1.0));
  CHECK(update_probability(5, lin) == doctest::Approx(0.55));
  for (int e = 1; e <= 10; ++e)
    CHECK(update_probability(e, lin) >= update_probability(e - 1, lin));
  CHECK_THROWS(update_probability(11, lin));
  CHECK_THROWS(update_probability(-1, lin));

  UpdateSchedule sep;
  sep.kind = UpdateSchedule::Kind::Separated;
  sep.stages = {{0, 0.1}, {4, 0.5}, {8, 1.0}};
  sep.total_epochs = 10;
  CHECK(update_probability(0, sep) == doctest::Approx(0.1));
  CHECK(update_probability(3, sep) == doctest::Approx(0.1));
  CHECK(update_probability(4, sep) == doctest::Approx(0.5));
  CHECK(update_probability(9, sep) == doctest::Approx(1.0));
  for (int e = 1; e <= 10; ++e)
    CHECK(update_probability(e, sep) >= update_probability(e - 1, sep));
}

TEST_CASE("should_update empirical rate") {
  UpdateSchedule sched;
  sched.kind = UpdateSchedule::Kind::Linear;
  sched.p_start = 0.3;
  sched.p_end = 0.3;
  sched.total_epochs = 10;
  Rng rng(9);
  long hits = 0, draws = 100000;
  for (long i = 0; i < draws; ++i)
    if (should_update(5, sched, rng)) ++hits;
  double rate = static_cast<double>(hits) / static_cast<double>(draws);
  double se = std::sqrt(0.3 * 0.7 / static_cast<double>(draws));
  CHECK(std::fabs(rate - 0.3) <= 3 * se);

  UpdateSchedule always;
  always.kind = UpdateSchedule::Kind::All;
  always.total_epochs = 1;
  for (int i = 0; i < 100; ++i) CHECK(should_update(0, always, rng));
  UpdateSchedule never;
  never.kind = UpdateSchedule::Kind::Linear;
  never.p_start = 0.0;
  never.p_end = 0.0;
  never.total_epochs = 1;
  for (int i = 0; i < 100; ++i) CHECK(!should_update(0, never, rng));
}
