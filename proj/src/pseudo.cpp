#include "bistf/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bistf {

namespace {

std::vector<PseudoLabel> score_pool(const BilateralParams& params,
                                    const std::vector<const Sample*>& pool,
                                    double tau, double alpha_inf, bool parallel) {
  if (tau <= 0.0 || tau > 1.0)
    throw std::runtime_error("pseudo_label_pool: tau must be in (0, 1]");
  std::vector<PseudoLabel> slots(pool.size());
  std::vector<char> accepted(pool.size(), 0);

  auto score_one = [&](std::size_t i) {
    Prediction p = predict(pool[i]->features, params, alpha_inf);
    if (p.confidence >= tau) {
      slots[i] = {pool[i]->id, p.label, p.confidence};
      accepted[i] = 1;
    }
  };

#ifdef BISTF_HAVE_OPENMP
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pool.size()); ++i)
      score_one(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) score_one(i);
  }
#else
  (void)parallel;
  for (std::size_t i = 0; i < pool.size(); ++i) score_one(i);
#endif

  std::vector<PseudoLabel> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (accepted[i]) out.push_back(slots[i]);
  std::sort(out.begin(), out.end(), [](const PseudoLabel& a, const PseudoLabel& b) {
    return a.sample_id < b.sample_id;
  });
  return out;
}

}  // namespace

std::vector<PseudoLabel> pseudo_label_pool(const BilateralParams& params,
                                           const std::vector<const Sample*>& pool,
                                           double tau, double alpha_inf) {
  return score_pool(params, pool, tau, alpha_inf, true);
}

std::vector<PseudoLabel> pseudo_label_pool_serial(
    const BilateralParams& params, const std::vector<const Sample*>& pool,
    double tau, double alpha_inf) {
  return score_pool(params, pool, tau, alpha_inf, false);
}

SelectionPlan distribution_matched_select(const std::vector<PseudoLabel>& candidates,
                                          const ClassDistribution& labeled_counts,
                                          double k_max, SelectionMode mode) {
  if (k_max <= 0.0) throw std::runtime_error("select: k_max must be > 0");
  std::size_t C = labeled_counts.counts.size();
  for (long n : labeled_counts.counts)
    if (n < 1) throw std::runtime_error("select: labeled counts must all be >= 1");

  std::vector<std::vector<PseudoLabel>> by_class(C);
  for (const PseudoLabel& pl : candidates) {
    if (pl.predicted_class < 0 || static_cast<std::size_t>(pl.predicted_class) >= C)
      throw std::runtime_error("select: candidate class out of range");
    by_class[static_cast<std::size_t>(pl.predicted_class)].push_back(pl);
  }
  // Highest confidence first, ties by ascending sample id.
  for (auto& v : by_class)
    std::sort(v.begin(), v.end(), [](const PseudoLabel& a, const PseudoLabel& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.sample_id < b.sample_id;
    });

  SelectionPlan plan;
  plan.per_class_target.assign(C, 0);

  if (mode == SelectionMode::Strict) {
    double k = k_max;
    for (std::size_t c = 0; c < C; ++c)
      k = std::min(k, static_cast<double>(by_class[c].size()) /
                          static_cast<double>(labeled_counts.counts[c]));
    plan.k_star = k;
    for (std::size_t c = 0; c < C; ++c)
      plan.per_class_target[c] = static_cast<long>(
          std::floor(k * static_cast<double>(labeled_counts.counts[c])));
  } else {
    plan.k_star = k_max;
    for (std::size_t c = 0; c < C; ++c) {
      long cap = static_cast<long>(
          std::floor(k_max * static_cast<double>(labeled_counts.counts[c])));
      plan.per_class_target[c] =
          std::min(cap, static_cast<long>(by_class[c].size()));
    }
  }

  for (std::size_t c = 0; c < C; ++c)
    for (long i = 0; i < plan.per_class_target[c]; ++i)
      plan.chosen_ids.push_back(by_class[c][static_cast<std::size_t>(i)].sample_id);
  std::sort(plan.chosen_ids.begin(), plan.chosen_ids.end());
  return plan;
}

double update_probability(int epoch, const UpdateSchedule& schedule) {
  if (epoch < 0 || epoch > schedule.total_epochs)
    throw std::runtime_error("update_probability: epoch out of range");
  switch (schedule.kind) {
    case UpdateSchedule::Kind::All:
      return 1.0;
    case UpdateSchedule::Kind::Linear:
      return schedule.p_start + (schedule.p_end - schedule.p_start) *
                                    static_cast<double>(epoch) /
                                    static_cast<double>(schedule.total_epochs);
    case UpdateSchedule::Kind::Separated: {
      double p = 0.0;
      for (const auto& stage : schedule.stages)
        if (stage.epoch_threshold <= epoch) p = stage.probability;
      return p;
    }
  }
  return 1.0;
}

bool should_update(int epoch, const UpdateSchedule& schedule, Rng& rng) {
  return rng.uniform() < update_probability(epoch, schedule);
}

}  // namespace bistf
