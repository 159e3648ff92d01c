#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bistf/samplers.hpp"
#include "test_support.hpp"

using namespace bistf;

namespace {

std::vector<LabeledId> make_set(const std::vector<long>& counts) {
  std::vector<LabeledId> set;
  std::int64_t id = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (long i = 0; i < counts[c]; ++i) set.push_back({id++, static_cast<int>(c)});
  return set;
}

std::map<int, long> class_frequencies(const EpochPlan& plan,
                                      const std::vector<LabeledId>& set) {
  std::map<std::int64_t, int> label_of;
  for (const auto& s : set) label_of[s.id] = *s.label;
  std::map<int, long> freq;
  for (const auto& batch : plan.batches)
    for (std::int64_t id : batch) freq[label_of[id]]++;
  return freq;
}

}  // namespace

TEST_CASE("reversed class probabilities") {
  auto p = reversed_class_probabilities({{8, 2}});
  CHECK(p[0] == doctest::Approx(0.2));
  CHECK(p[1] == doctest::Approx(0.8));

  p = reversed_class_probabilities({{7, 7, 7}});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));

  p = reversed_class_probabilities({{4, 2, 1}});
  CHECK(p[0] == doctest::Approx(1.0 / 7));
  CHECK(p[1] == doctest::Approx(2.0 / 7));
  CHECK(p[2] == doctest::Approx(4.0 / 7));

  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(sum == doctest::Approx(1.0));

  CHECK_THROWS(reversed_class_probabilities({{4, 0}}));
}

TEST_CASE("uniform epoch is an exact permutation") {
  auto set = make_set({6, 4});
  Rng rng(3);
  EpochPlan plan = sample_epoch(SamplerKind::Uniform, set, 5, rng);
  CHECK(plan.batches.size() == 2);
  std::multiset<std::int64_t> seen;
  for (const auto& batch : plan.batches)
    for (std::int64_t id : batch) seen.insert(id);
  CHECK(seen.size() == 10);
  for (const auto& s : set) CHECK(seen.count(s.id) == 1);
}

TEST_CASE("reversed sampler frequencies match reversed probabilities") {
  auto set = make_set({8, 2});
  Rng rng(11);
  long draws = 100000;
  std::map<int, long> freq;
  // 10 draws per epoch over this set; accumulate epochs to reach the target.
  for (long d = 0; d < draws / 10; ++d) {
    EpochPlan plan = sample_epoch(SamplerKind::Reversed, set, 10, rng);
    for (const auto& [c, n] : class_frequencies(plan, set)) freq[c] += n;
  }
  double minority = static_cast<double>(freq[1]) / static_cast<double>(draws);
  double se = std::sqrt(0.8 * 0.2 / static_cast<double>(draws));
  CHECK(std::fabs(minority - 0.8) <= 3 * se);
}

TEST_CASE("reversed sampler chi-square over random count vectors") {
  Rng seed_rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<long> counts;
    int C = 2 + static_cast<int>(seed_rng.uniform_index(4));
    for (int c = 0; c < C; ++c)
      counts.push_back(1 + static_cast<long>(seed_rng.uniform_index(20)));
    auto set = make_set(counts);
    auto probs = reversed_class_probabilities({counts});

    Rng rng(100 + static_cast<std::uint64_t>(trial));
    long total = 0;
    std::map<int, long> freq;
    while (total < 20000) {
      EpochPlan plan = sample_epoch(SamplerKind::Reversed, set, 64, rng);
      for (const auto& [c, n] : class_frequencies(plan, set)) freq[c] += n;
      total += static_cast<long>(plan.total_draws());
    }
    double chi2 = 0.0;
    for (int c = 0; c < C; ++c) {
      double expected = probs[static_cast<std::size_t>(c)] * static_cast<double>(total);
      double diff = static_cast<double>(freq[c]) - expected;
      chi2 += diff * diff / expected;
    }
    CHECK(chi2 <= bistf::testing::chi2_critical(C - 1, 2.326));
  }
}

TEST_CASE("error paths") {
  Rng rng(1);
  CHECK_THROWS(sample_epoch(SamplerKind::Uniform, {}, 4, rng));
  std::vector<LabeledId> unlabeled{{0, std::nullopt}, {1, std::nullopt}};
  CHECK_THROWS(sample_epoch(SamplerKind::Reversed, unlabeled, 2, rng));
}

TEST_CASE("identical rng seed gives identical plans") {
  auto set = make_set({5, 3, 2});
  Rng a(42), b(42);
  EpochPlan pa = sample_epoch(SamplerKind::Reversed, set, 4, a);
  EpochPlan pb = sample_epoch(SamplerKind::Reversed, set, 4, b);
  CHECK(pa.batches == pb.batches);
}
