#pragma once

#include <string>
#include <vector>

#include "bistf/corpus.hpp"
#include "bistf/model.hpp"

namespace bistf {

struct Metrics {
  double top1 = 0.0;
  std::vector<double> per_class_precision;  // NaN when the class was never predicted
  std::vector<double> per_class_recall;
  std::vector<std::vector<long>> confusion;  // confusion[truth][predicted]
};

// Evaluates on a fully labeled split. The default path parallelizes the
// per-sample predictions; the serial variant is the test reference.
Metrics evaluate(const BilateralParams& params,
                 const std::vector<const Sample*>& split, double alpha_inf = 0.5);
Metrics evaluate_serial(const BilateralParams& params,
                        const std::vector<const Sample*>& split,
                        double alpha_inf = 0.5);

struct ConfusionPair {
  int truth = 0;
  int predicted = 0;
  long count = 0;
};

// Off-diagonal cells sorted descending by count, ties by (row, col).
std::vector<ConfusionPair> confusion_top_pairs(const Metrics& metrics, int k);

struct AblationRow {
  std::string strategy;
  int runs = 0;
  double val_mean = 0.0, val_sd = 0.0;
  double test_mean = 0.0, test_sd = 0.0;
};

struct RunSummary {
  std::string strategy;
  std::string corpus_hash;
  double final_val_top1 = 0.0;
  double final_test_top1 = 0.0;
};

// Mean and standard deviation of final metrics per strategy, sorted by
// descending test mean. All summaries must share one corpus hash.
std::vector<AblationRow> ablation_report(const std::vector<RunSummary>& runs);

void write_metrics_csv(const Metrics& m, const std::string& path);

}  // namespace bistf
