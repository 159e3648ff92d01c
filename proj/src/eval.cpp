#include "bistf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace bistf {

namespace {

Metrics eval_impl(const BilateralParams& params,
                  const std::vector<const Sample*>& split, double alpha_inf,
                  bool parallel) {
  if (split.empty()) throw std::runtime_error("evaluate: empty split");
  std::size_t C = static_cast<std::size_t>(params.dims.classes);
  std::vector<int> predicted(split.size());

#ifdef BISTF_HAVE_OPENMP
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(split.size()); ++i)
      predicted[static_cast<std::size_t>(i)] =
          predict(split[static_cast<std::size_t>(i)]->features, params, alpha_inf)
              .label;
  } else
#else
  (void)parallel;
#endif
  {
    for (std::size_t i = 0; i < split.size(); ++i)
      predicted[i] = predict(split[i]->features, params, alpha_inf).label;
  }

  Metrics m;
  m.confusion.assign(C, std::vector<long>(C, 0));
  long correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (!split[i]->label) throw std::runtime_error("evaluate: unlabeled sample in split");
    int y = *split[i]->label;
    m.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(predicted[i])]++;
    if (y == predicted[i]) ++correct;
  }
  m.top1 = static_cast<double>(correct) / static_cast<double>(split.size());

  m.per_class_precision.assign(C, std::numeric_limits<double>::quiet_NaN());
  m.per_class_recall.assign(C, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < C; ++c) {
    long row = 0, col = 0;
    for (std::size_t j = 0; j < C; ++j) {
      row += m.confusion[c][j];
      col += m.confusion[j][c];
    }
    if (row > 0)
      m.per_class_recall[c] =
          static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
    if (col > 0)
      m.per_class_precision[c] =
          static_cast<double>(m.confusion[c][c]) / static_cast<double>(col);
  }
  return m;
}

}  // namespace

Metrics evaluate(const BilateralParams& params,
                 const std::vector<const Sample*>& split, double alpha_inf) {
  return eval_impl(params, split, alpha_inf, true);
}

Metrics evaluate_serial(const BilateralParams& params,
                        const std::vector<const Sample*>& split, double alpha_inf) {
  return eval_impl(params, split, alpha_inf, false);
}

std::vector<ConfusionPair> confusion_top_pairs(const Metrics& m, int k) {
  if (k < 1) throw std::runtime_error("confusion_top_pairs: k must be >= 1");
  std::vector<ConfusionPair> pairs;
  for (std::size_t r = 0; r < m.confusion.size(); ++r)
    for (std::size_t c = 0; c < m.confusion[r].size(); ++c)
      if (r != c && m.confusion[r][c] > 0)
        pairs.push_back({static_cast<int>(r), static_cast<int>(c), m.confusion[r][c]});
  std::sort(pairs.begin(), pairs.end(), [](const ConfusionPair& a, const ConfusionPair& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.truth != b.truth) return a.truth < b.truth;
    return a.predicted < b.predicted;
  });
  if (pairs.size() > static_cast<std::size_t>(k)) pairs.resize(static_cast<std::size_t>(k));
  return pairs;
}

std::vector<AblationRow> ablation_report(const std::vector<RunSummary>& runs) {
  if (runs.empty()) return {};
  for (const RunSummary& r : runs)
    if (r.corpus_hash != runs.front().corpus_hash)
      throw std::runtime_error("ablation_report: runs come from different corpora");

  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const RunSummary& r : runs) groups[r.strategy].push_back(&r);

  auto mean_sd = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return std::pair<double, double>{mean, sd};
  };

  std::vector<AblationRow> table;
  for (const auto& [name, members] : groups) {
    std::vector<double> vals, tests;
    for (const RunSummary* r : members) {
      vals.push_back(r->final_val_top1);
      tests.push_back(r->final_test_top1);
    }
    AblationRow row;
    row.strategy = name;
    row.runs = static_cast<int>(members.size());
    std::tie(row.val_mean, row.val_sd) = mean_sd(vals);
    std::tie(row.test_mean, row.test_sd) = mean_sd(tests);
    table.push_back(row);
  }
  std::sort(table.begin(), table.end(), [](const AblationRow& a, const AblationRow& b) {
    if (a.test_mean != b.test_mean) return a.test_mean > b.test_mean;
    return a.strategy < b.strategy;
  });
  return table;
}

void write_metrics_csv(const Metrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "class,precision,recall,support\n";
  for (std::size_t c = 0; c < m.per_class_recall.size(); ++c) {
    long support = 0;
    for (long v : m.confusion[c]) support += v;
    out << c << ",";
    if (std::isnan(m.per_class_precision[c]))
      out << "NA";
    else
      out << m.per_class_precision[c];
    out << ",";
    if (std::isnan(m.per_class_recall[c]))
      out << "NA";
    else
      out << m.per_class_recall[c];
    out << "," << support << "\n";
  }
}

}  // namespace bistf
