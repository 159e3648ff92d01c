#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bistf/corpus.hpp"
#include "bistf/rng.hpp"

namespace bistf {

enum class SamplerKind { Uniform, Reversed };

// A sampler input: sample id plus (possibly pseudo) label.
struct LabeledId {
  std::int64_t id = 0;
  std::optional<int> label;
};

struct EpochPlan {
  SamplerKind kind = SamplerKind::Uniform;
  std::size_t batch_size = 1;
  std::vector<std::vector<std::int64_t>> batches;

  std::size_t total_draws() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size();
    return n;
  }
};

// p_c = (N_max / N_c) / sum_j (N_max / N_j); minority classes get the
// largest probability.
std::vector<double> reversed_class_probabilities(const ClassDistribution& counts);

// Uniform: one shuffled without-replacement pass over the set.
// Reversed: draw a class from the reversed probabilities, then a uniform
// member of that class, with replacement; total draws = set size.
EpochPlan sample_epoch(SamplerKind kind, const std::vector<LabeledId>& set,
                       std::size_t batch_size, Rng& rng);

}  // namespace bistf
