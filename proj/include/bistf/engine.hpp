#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bistf/corpus.hpp"
#include "bistf/eval.hpp"
#include "bistf/model.hpp"
#include "bistf/pseudo.hpp"
#include "bistf/samplers.hpp"

namespace bistf {

struct RunConfig {
  std::string corpus_path;
  std::vector<int> trunk_hidden = {32, 16};
  int feature_dim = 16;
  int epochs_per_generation = 20;
  int generations = 5;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 32;
  double tau = 0.95;
  double k_max = 0.5;
  SelectionMode selection_mode = SelectionMode::Strict;
  AlphaSchedule alpha_schedule;    // t_max filled from generations*epochs
  UpdateSchedule update_schedule;  // total_epochs filled likewise
  double alpha_inf = 0.5;
  bool warm_start = true;
  std::uint64_t seed = 1;
  std::string strategy_label;  // manifest tag; defaults from the schedule kind
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

struct UnionEntry {
  std::int64_t id = 0;
  int label = 0;
  enum class Prov { Labeled, Pseudo } prov = Prov::Labeled;
};

struct GenerationState {
  int generation = 0;
  BilateralParams params;
  SelectionPlan plan;                 // current S_hat
  std::vector<UnionEntry> union_set;  // U' = L_in with pseudo entries appended
};

// U' = L_in plus the selected pseudo-labeled ids with their pseudo class.
// Throws if a chosen id collides with a labeled id.
std::vector<UnionEntry> build_union(const std::vector<LabeledId>& labeled,
                                    const SelectionPlan& plan,
                                    const std::vector<PseudoLabel>& candidates);

struct EpochRecord {
  int generation = 0;
  int epoch = 0;  // global epoch index
  double alpha = 1.0;
  double p_update = 0.0;
  bool f_update = false;
  double mean_loss = 0.0;
  long selected_count = 0;
  double val_top1 = -1.0;  // only set on generation-final epochs
};

struct UpdateEvent {
  int generation = 0;
  int epoch = 0;
  double k_star = 0.0;
  std::vector<long> per_class_selected;
};

struct PseudoDumpRow {
  int generation = 0;
  std::int64_t sample_id = 0;
  int predicted_class = 0;
  double confidence = 0.0;
  bool selected = false;
};

struct History {
  std::string strategy;
  std::string corpus_hash;
  std::vector<EpochRecord> records;
  std::vector<UpdateEvent> updates;
  std::vector<PseudoDumpRow> pseudo_dump;
  std::vector<double> val_top1_per_generation;
  double final_test_top1 = 0.0;
  Metrics final_test_metrics;
  bool diverged = false;
  std::string diagnostic;
  std::string final_hash;
};

class SelfTrainer {
public:
  SelfTrainer(const Corpus& corpus, RunConfig config);

  History run();           // bilateral self-training
  History run_baseline();  // single branch, update every epoch, takes all of U-hat

private:
  History execute(bool baseline);
  const Corpus& corpus_;
  RunConfig config_;
};

History run(const RunConfig& config);           // loads config.corpus_path
History run_baseline(const RunConfig& config);

void write_history_csv(const History& history, const std::string& path);
void write_pseudo_dump_csv(const History& history, const std::string& path);
void write_manifest(const History& history, const RunConfig& config,
                    double wall_time_sec, const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace bistf
