#include "bistf/samplers.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace bistf {

std::vector<double> reversed_class_probabilities(const ClassDistribution& counts) {
  if (counts.counts.empty())
    throw std::runtime_error("reversed probabilities of empty distribution");
  long n_max = *std::max_element(counts.counts.begin(), counts.counts.end());
  std::vector<double> w(counts.counts.size());
  double total = 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (counts.counts[c] == 0)
      throw std::runtime_error("reversed probabilities undefined for zero-count class");
    w[c] = static_cast<double>(n_max) / static_cast<double>(counts.counts[c]);
    total += w[c];
  }
  for (double& p : w) p /= total;
  return w;
}

static EpochPlan chop(SamplerKind kind, std::vector<std::int64_t> ids,
                      std::size_t batch_size) {
  EpochPlan plan;
  plan.kind = kind;
  plan.batch_size = batch_size;
  for (std::size_t i = 0; i < ids.size(); i += batch_size) {
    std::size_t end = std::min(i + batch_size, ids.size());
    plan.batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                              ids.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

EpochPlan sample_epoch(SamplerKind kind, const std::vector<LabeledId>& set,
                       std::size_t batch_size, Rng& rng) {
  if (set.empty()) throw std::runtime_error("sample_epoch: empty sample set");
  if (batch_size < 1) throw std::runtime_error("sample_epoch: batch_size must be >= 1");

  if (kind == SamplerKind::Uniform) {
    std::vector<std::int64_t> ids;
    ids.reserve(set.size());
    for (const auto& s : set) ids.push_back(s.id);
    rng.shuffle(ids);
    return chop(kind, std::move(ids), batch_size);
  }

  // Reversed: group members by class, draw class then member.
  std::map<int, std::vector<std::int64_t>> by_class;
  for (const auto& s : set) {
    if (!s.label)
      throw std::runtime_error("reversed sampler requires labels on every sample");
    by_class[*s.label].push_back(s.id);
  }
  std::vector<int> classes;
  ClassDistribution dist;
  for (const auto& [c, members] : by_class) {
    classes.push_back(c);
    dist.counts.push_back(static_cast<long>(members.size()));
  }
  std::vector<double> probs = reversed_class_probabilities(dist);

  std::vector<std::int64_t> ids;
  ids.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t c = rng.discrete(probs);
    const auto& members = by_class[classes[c]];
    ids.push_back(members[rng.uniform_index(members.size())]);
  }
  return chop(kind, std::move(ids), batch_size);
}

}  // namespace bistf
