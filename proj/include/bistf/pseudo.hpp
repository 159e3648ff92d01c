#pragma once

#include <cstdint>
#include <vector>

#include "bistf/corpus.hpp"
#include "bistf/model.hpp"
#include "bistf/rng.hpp"

namespace bistf {

struct PseudoLabel {
  std::int64_t sample_id = 0;
  int predicted_class = 0;
  double confidence = 0.0;
};

struct UpdateSchedule {
  enum class Kind { All, Linear, Separated };
  struct Stage {
    int epoch_threshold = 0;
    double probability = 0.0;
  };
  Kind kind = Kind::All;
  double p_start = 0.1, p_end = 1.0;  // linear
  std::vector<Stage> stages;          // separated, sorted by threshold
  int total_epochs = 100;
};

struct SelectionPlan {
  std::vector<long> per_class_target;  // s_c = floor(k_star * N_c)
  std::vector<std::int64_t> chosen_ids;
  double k_star = 0.0;
};

enum class SelectionMode { Strict, Lenient };

// Scores every unlabeled sample on a frozen parameter snapshot and keeps
// those whose top probability clears tau (boundary inclusive). Output is
// ordered by sample id. The default path fans out over OpenMP threads;
// the serial variant is the reference used by the tests.
std::vector<PseudoLabel> pseudo_label_pool(const BilateralParams& params,
                                           const std::vector<const Sample*>& pool,
                                           double tau, double alpha_inf = 0.5);
std::vector<PseudoLabel> pseudo_label_pool_serial(
    const BilateralParams& params, const std::vector<const Sample*>& pool,
    double tau, double alpha_inf = 0.5);

// Strict: one global scale k_star = min(k_max, min_c A_c/N_c), s_c =
// floor(k_star*N_c). Lenient: s_c = min(A_c, floor(k_max*N_c)) per class.
// Within a class the s_c highest-confidence candidates win, ties broken by
// ascending sample id.
SelectionPlan distribution_matched_select(const std::vector<PseudoLabel>& candidates,
                                          const ClassDistribution& labeled_counts,
                                          double k_max, SelectionMode mode);

double update_probability(int epoch, const UpdateSchedule& schedule);

// F_update: draw u ~ U[0,1) and compare against the schedule probability.
bool should_update(int epoch, const UpdateSchedule& schedule, Rng& rng);

}  // namespace bistf
