#include "bistf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace bistf {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

AlphaSchedule::Kind alpha_kind_from_string(const std::string& s) {
  if (s == "parabolic") return AlphaSchedule::Kind::Parabolic;
  if (s == "constant") return AlphaSchedule::Kind::Constant;
  throw std::runtime_error("unknown alpha schedule kind '" + s + "'");
}

std::string to_string(AlphaSchedule::Kind k) {
  return k == AlphaSchedule::Kind::Parabolic ? "parabolic" : "constant";
}

UpdateSchedule::Kind update_kind_from_string(const std::string& s) {
  if (s == "all") return UpdateSchedule::Kind::All;
  if (s == "linear") return UpdateSchedule::Kind::Linear;
  if (s == "separated") return UpdateSchedule::Kind::Separated;
  throw std::runtime_error("unknown update schedule kind '" + s + "'");
}

std::string to_string(UpdateSchedule::Kind k) {
  switch (k) {
    case UpdateSchedule::Kind::All: return "all";
    case UpdateSchedule::Kind::Linear: return "linear";
    case UpdateSchedule::Kind::Separated: return "separated";
  }
  return "all";
}

json config_to_json(const RunConfig& c) {
  json j;
  j["corpus"] = c.corpus_path;
  j["trunk_hidden"] = c.trunk_hidden;
  j["feature_dim"] = c.feature_dim;
  j["epochs_per_generation"] = c.epochs_per_generation;
  j["generations"] = c.generations;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["tau"] = c.tau;
  j["k_max"] = c.k_max;
  j["selection_mode"] = c.selection_mode == SelectionMode::Strict ? "strict" : "lenient";
  j["alpha_schedule"] = {{"kind", to_string(c.alpha_schedule.kind)},
                         {"constant_value", c.alpha_schedule.constant_value}};
  json stages = json::array();
  for (const auto& s : c.update_schedule.stages)
    stages.push_back({s.epoch_threshold, s.probability});
  j["update_schedule"] = {{"kind", to_string(c.update_schedule.kind)},
                          {"p_start", c.update_schedule.p_start},
                          {"p_end", c.update_schedule.p_end},
                          {"stages", stages}};
  j["alpha_inf"] = c.alpha_inf;
  j["warm_start"] = c.warm_start;
  j["seed"] = c.seed;
  j["strategy_label"] = c.strategy_label;
  return j;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j = json::parse(in);
  RunConfig c;
  c.corpus_path = j.value("corpus", c.corpus_path);
  c.trunk_hidden = j.value("trunk_hidden", c.trunk_hidden);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.epochs_per_generation = j.value("epochs_per_generation", c.epochs_per_generation);
  c.generations = j.value("generations", c.generations);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.tau = j.value("tau", c.tau);
  c.k_max = j.value("k_max", c.k_max);
  if (j.contains("selection_mode"))
    c.selection_mode = j["selection_mode"].get<std::string>() == "lenient"
                           ? SelectionMode::Lenient
                           : SelectionMode::Strict;
  if (j.contains("alpha_schedule")) {
    const json& a = j["alpha_schedule"];
    c.alpha_schedule.kind = alpha_kind_from_string(a.value("kind", "parabolic"));
    c.alpha_schedule.constant_value =
        a.value("constant_value", c.alpha_schedule.constant_value);
  }
  if (j.contains("update_schedule")) {
    const json& u = j["update_schedule"];
    c.update_schedule.kind = update_kind_from_string(u.value("kind", "all"));
    c.update_schedule.p_start = u.value("p_start", c.update_schedule.p_start);
    c.update_schedule.p_end = u.value("p_end", c.update_schedule.p_end);
    if (u.contains("stages")) {
      c.update_schedule.stages.clear();
      for (const json& s : u["stages"])
        c.update_schedule.stages.push_back(
            {s.at(0).get<int>(), s.at(1).get<double>()});
    }
  }
  c.alpha_inf = j.value("alpha_inf", c.alpha_inf);
  c.warm_start = j.value("warm_start", c.warm_start);
  c.seed = j.value("seed", c.seed);
  c.strategy_label = j.value("strategy_label", c.strategy_label);
  return c;
}

void save_run_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << config_to_json(config).dump(2) << "\n";
}

std::vector<UnionEntry> build_union(const std::vector<LabeledId>& labeled,
                                    const SelectionPlan& plan,
                                    const std::vector<PseudoLabel>& candidates) {
  std::vector<UnionEntry> out;
  out.reserve(labeled.size() + plan.chosen_ids.size());
  std::unordered_set<std::int64_t> seen;
  for (const LabeledId& l : labeled) {
    if (!l.label) throw std::runtime_error("build_union: labeled entry without label");
    out.push_back({l.id, *l.label, UnionEntry::Prov::Labeled});
    seen.insert(l.id);
  }
  std::unordered_map<std::int64_t, const PseudoLabel*> by_id;
  for (const PseudoLabel& c : candidates) by_id[c.sample_id] = &c;
  for (std::int64_t id : plan.chosen_ids) {
    if (seen.count(id))
      throw std::runtime_error("build_union: id collision with labeled set");
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw std::runtime_error("build_union: chosen id missing from candidates");
    out.push_back({id, it->second->predicted_class, UnionEntry::Prov::Pseudo});
    seen.insert(id);
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

class Divergence : public std::runtime_error {
public:
  explicit Divergence(const std::string& msg) : std::runtime_error(msg) {}
};

std::string default_strategy_label(const RunConfig& c, bool baseline) {
  if (!c.strategy_label.empty()) return c.strategy_label;
  if (baseline) return "baseline";
  return to_string(c.update_schedule.kind);
}

}  // namespace

SelfTrainer::SelfTrainer(const Corpus& corpus, RunConfig config)
    : corpus_(corpus), config_(std::move(config)) {}

History SelfTrainer::run() { return execute(false); }
History SelfTrainer::run_baseline() { return execute(true); }

History SelfTrainer::execute(bool baseline) {
  const RunConfig& cfg = config_;
  if (cfg.generations < 1 || cfg.epochs_per_generation < 1 || cfg.batch_size < 1)
    throw std::runtime_error("run: counts must be >= 1");
  if (cfg.lr <= 0) throw std::runtime_error("run: lr must be positive");

  std::vector<LabeledId> labeled;
  std::vector<const Sample*> unlabeled, val, test;
  std::unordered_map<std::int64_t, const Sample*> by_id;
  std::unordered_set<std::int64_t> labeled_ids;
  for (const Sample& s : corpus_.samples) {
    by_id[s.id] = &s;
    switch (s.split) {
      case Split::Labeled:
        labeled.push_back({s.id, s.label});
        labeled_ids.insert(s.id);
        break;
      case Split::Unlabeled: unlabeled.push_back(&s); break;
      case Split::Val: val.push_back(&s); break;
      case Split::Test: test.push_back(&s); break;
    }
  }
  if (labeled.empty()) throw std::runtime_error("run: corpus has no labeled samples");

  ClassDistribution labeled_counts = class_counts(corpus_, Split::Labeled);

  int total_epochs = cfg.generations * cfg.epochs_per_generation;
  AlphaSchedule alpha_sched = cfg.alpha_schedule;
  alpha_sched.t_max = total_epochs;
  UpdateSchedule update_sched = cfg.update_schedule;
  update_sched.total_epochs = total_epochs;

  ModelDims dims;
  dims.input = corpus_.feature_dim;
  dims.trunk_hidden = cfg.trunk_hidden;
  dims.feature = cfg.feature_dim;
  dims.classes = corpus_.num_classes;

  Rng rng(cfg.seed);
  GenerationState state;
  state.params = BilateralParams::init(dims, rng);
  for (const LabeledId& l : labeled)
    state.union_set.push_back({l.id, *l.label, UnionEntry::Prov::Labeled});

  SgdOptimizer opt(cfg.lr, cfg.momentum, cfg.weight_decay);

  History hist;
  hist.strategy = default_strategy_label(cfg, baseline);
  if (!cfg.corpus_path.empty()) hist.corpus_hash = corpus_file_hash(cfg.corpus_path);

  std::vector<PseudoLabel> current_candidates;

  auto features_of = [&](std::int64_t id) -> const std::vector<double>& {
    return by_id.at(id)->features;
  };

  auto union_as_labeled_ids = [&]() {
    std::vector<LabeledId> v;
    v.reserve(state.union_set.size());
    for (const UnionEntry& e : state.union_set) v.push_back({e.id, e.label});
    return v;
  };

  try {
    for (int g = 0; g < cfg.generations; ++g) {
      if (!cfg.warm_start && g > 0) {
        state.params = BilateralParams::init(dims, rng);
        opt = SgdOptimizer(cfg.lr, cfg.momentum, cfg.weight_decay);
      }
      for (int e = 0; e < cfg.epochs_per_generation; ++e) {
        int global_epoch = g * cfg.epochs_per_generation + e;
        double alpha = baseline ? 1.0 : alpha_at(global_epoch, alpha_sched);

        std::unordered_map<std::int64_t, int> union_label;
        for (const UnionEntry& u : state.union_set) union_label[u.id] = u.label;

        EpochPlan plan_l, plan_s;
        if (baseline) {
          // FixMatch-like comparator: one branch, uniform pass over U'.
          plan_l = sample_epoch(SamplerKind::Uniform, union_as_labeled_ids(),
                                static_cast<std::size_t>(cfg.batch_size), rng);
          plan_s = plan_l;
        } else {
          plan_l = sample_epoch(SamplerKind::Uniform, labeled,
                                static_cast<std::size_t>(cfg.batch_size), rng);
          plan_s = sample_epoch(SamplerKind::Reversed, union_as_labeled_ids(),
                                static_cast<std::size_t>(cfg.batch_size), rng);
        }

        double loss_sum = 0.0;
        long loss_count = 0;
        std::size_t steps = std::max(plan_l.batches.size(), plan_s.batches.size());
        for (std::size_t step = 0; step < steps; ++step) {
          // The shorter plan cycles so both branches are fed every step.
          const auto& batch_l = plan_l.batches[step % plan_l.batches.size()];
          const auto& batch_s = plan_s.batches[step % plan_s.batches.size()];
          std::size_t pairs = std::max(batch_l.size(), batch_s.size());
          Gradients acc = Gradients::zeros_like(state.params);
          double batch_loss = 0.0;
          for (std::size_t i = 0; i < pairs; ++i) {
            std::int64_t id_l = batch_l[i % batch_l.size()];
            std::int64_t id_s = batch_s[i % batch_s.size()];
            if (!baseline && !labeled_ids.count(id_l))
              throw std::runtime_error(
                  "run: non-labeled sample reached the in-class branch");
            int y_l = baseline ? union_label.at(id_l) : *by_id.at(id_l)->label;
            int y_s = baseline ? y_l : union_label.at(id_s);
            ForwardCache cache =
                forward(features_of(id_l), features_of(id_s), alpha, state.params);
            batch_loss += loss(cache.probs, y_l, y_s, alpha);
            acc.accumulate(backward(cache, y_l, y_s, alpha, state.params));
          }
          acc.scale(1.0 / static_cast<double>(pairs));
          batch_loss /= static_cast<double>(pairs);
          if (!std::isfinite(batch_loss))
            throw Divergence("non-finite loss at generation " + std::to_string(g) +
                             " epoch " + std::to_string(e));
          try {
            opt.step(state.params, acc);
          } catch (const std::exception& err) {
            throw Divergence(std::string(err.what()) + " at generation " +
                             std::to_string(g) + " epoch " + std::to_string(e));
          }
          loss_sum += batch_loss;
          ++loss_count;
        }

        double p = baseline ? 1.0 : update_probability(global_epoch, update_sched);
        bool f_update = baseline ? true : should_update(global_epoch, update_sched, rng);
        if (f_update) {
          // tau above 1 is unreachable: the update fires but accepts nothing.
          current_candidates =
              cfg.tau > 1.0
                  ? std::vector<PseudoLabel>{}
                  : pseudo_label_pool(state.params, unlabeled, cfg.tau, cfg.alpha_inf);
          if (baseline) {
            // No distribution matching: take all of U-hat.
            state.plan = SelectionPlan{};
            state.plan.per_class_target.assign(
                static_cast<std::size_t>(corpus_.num_classes), 0);
            for (const PseudoLabel& c : current_candidates) {
              state.plan.chosen_ids.push_back(c.sample_id);
              state.plan.per_class_target[static_cast<std::size_t>(c.predicted_class)]++;
            }
            state.plan.k_star = -1.0;
          } else {
            state.plan = distribution_matched_select(current_candidates, labeled_counts,
                                                     cfg.k_max, cfg.selection_mode);
          }
          state.union_set = build_union(labeled, state.plan, current_candidates);

          UpdateEvent ev;
          ev.generation = g;
          ev.epoch = global_epoch;
          ev.k_star = state.plan.k_star;
          ev.per_class_selected.assign(static_cast<std::size_t>(corpus_.num_classes), 0);
          std::unordered_set<std::int64_t> chosen(state.plan.chosen_ids.begin(),
                                                  state.plan.chosen_ids.end());
          for (const PseudoLabel& c : current_candidates) {
            bool sel = chosen.count(c.sample_id) > 0;
            if (sel)
              ev.per_class_selected[static_cast<std::size_t>(c.predicted_class)]++;
            hist.pseudo_dump.push_back({g, c.sample_id, c.predicted_class,
                                        c.confidence, sel});
          }
          hist.updates.push_back(std::move(ev));
        }

        EpochRecord rec;
        rec.generation = g;
        rec.epoch = global_epoch;
        rec.alpha = alpha;
        rec.p_update = p;
        rec.f_update = f_update;
        rec.mean_loss = loss_count ? loss_sum / loss_count : 0.0;
        rec.selected_count = static_cast<long>(state.plan.chosen_ids.size());
        if (e == cfg.epochs_per_generation - 1 && !val.empty()) {
          Metrics m = evaluate(state.params, val, cfg.alpha_inf);
          rec.val_top1 = m.top1;
          hist.val_top1_per_generation.push_back(m.top1);
        }
        hist.records.push_back(rec);
      }
      state.generation = g + 1;
    }
    if (!test.empty()) {
      hist.final_test_metrics = evaluate(state.params, test, cfg.alpha_inf);
      hist.final_test_top1 = hist.final_test_metrics.top1;
    }
  } catch (const Divergence& d) {
    hist.diverged = true;
    hist.diagnostic = d.what();
  }

  // Deterministic run fingerprint over config + history (wall time excluded).
  std::string canon = config_to_json(cfg).dump();
  canon += "|" + hist.corpus_hash + "|" + hist.strategy;
  for (const EpochRecord& r : hist.records) {
    canon += "|" + std::to_string(r.generation) + "," + std::to_string(r.epoch) + "," +
             fmt_double(r.alpha) + "," + fmt_double(r.p_update) + "," +
             (r.f_update ? "1" : "0") + "," + fmt_double(r.mean_loss) + "," +
             std::to_string(r.selected_count) + "," + fmt_double(r.val_top1);
  }
  canon += "|" + fmt_double(hist.final_test_top1);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  hist.final_hash = hex;
  return hist;
}

History run(const RunConfig& config) {
  Corpus corpus = load_corpus(config.corpus_path);
  return SelfTrainer(corpus, config).run();
}

History run_baseline(const RunConfig& config) {
  Corpus corpus = load_corpus(config.corpus_path);
  return SelfTrainer(corpus, config).run_baseline();
}

void write_history_csv(const History& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "generation,epoch,alpha,p_update,f_update,loss,selected_count,val_top1\n";
  for (const EpochRecord& r : h.records) {
    out << r.generation << "," << r.epoch << "," << fmt_double(r.alpha) << ","
        << fmt_double(r.p_update) << "," << (r.f_update ? 1 : 0) << ","
        << fmt_double(r.mean_loss) << "," << r.selected_count << ",";
    if (r.val_top1 >= 0.0)
      out << fmt_double(r.val_top1);
    else
      out << "NA";
    out << "\n";
  }
}

void write_pseudo_dump_csv(const History& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "generation,sample_id,class,confidence,selected\n";
  for (const PseudoDumpRow& r : h.pseudo_dump)
    out << r.generation << "," << r.sample_id << "," << r.predicted_class << ","
        << fmt_double(r.confidence) << "," << (r.selected ? 1 : 0) << "\n";
}

void write_manifest(const History& h, const RunConfig& config, double wall_time_sec,
                    const std::string& path) {
  json j;
  j["config"] = config_to_json(config);
  j["strategy"] = h.strategy;
  j["corpus_hash"] = h.corpus_hash;
  json gens = json::array();
  for (std::size_t g = 0; g < h.val_top1_per_generation.size(); ++g)
    gens.push_back({{"generation", g}, {"val_top1", h.val_top1_per_generation[g]}});
  j["per_generation"] = gens;
  j["final_test_top1"] = h.final_test_top1;
  j["diverged"] = h.diverged;
  if (h.diverged) j["diagnostic"] = h.diagnostic;
  j["wall_time_sec"] = wall_time_sec;
  j["final_hash"] = h.final_hash;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

}  // namespace bistf
