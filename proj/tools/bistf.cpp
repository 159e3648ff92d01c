#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bistf/corpus.hpp"
#include "bistf/engine.hpp"
#include "bistf/eval.hpp"

namespace fs = std::filesystem;
using namespace bistf;

namespace {

int worker_cap() {
  if (const char* env = std::getenv("BISTF_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 4;
}

struct RunRequest {
  RunConfig config;
  bool baseline = false;
  fs::path out_dir;
};

void execute_run(const RunRequest& req) {
  fs::create_directories(req.out_dir);
  Corpus corpus = load_corpus(req.config.corpus_path);
  auto t0 = std::chrono::steady_clock::now();
  SelfTrainer trainer(corpus, req.config);
  History hist = req.baseline ? trainer.run_baseline() : trainer.run();
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_history_csv(hist, (req.out_dir / "history.csv").string());
  write_pseudo_dump_csv(hist, (req.out_dir / "pseudo_labels.csv").string());
  write_metrics_csv(hist.final_test_metrics, (req.out_dir / "test_metrics.csv").string());
  write_manifest(hist, req.config, wall, (req.out_dir / "manifest.json").string());
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path,
                 const std::string& sidecar) {
  SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : load_spec(spec_path);
  Corpus corpus = generate_corpus(spec);
  save_corpus(corpus, out_path, sidecar);
  ClassDistribution d = class_counts(corpus);
  std::cout << "wrote " << corpus.samples.size() << " samples to " << out_path
            << " (gamma=" << imbalance_ratio(d) << ")\n";
  return 0;
}

std::vector<RunSummary> collect_summaries(const fs::path& dir,
                                          std::vector<fs::path>* manifests = nullptr) {
  std::vector<RunSummary> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.path().filename() != "manifest.json") continue;
    std::ifstream in(entry.path());
    nlohmann::json j = nlohmann::json::parse(in);
    RunSummary s;
    s.strategy = j.at("strategy").get<std::string>();
    s.corpus_hash = j.at("corpus_hash").get<std::string>();
    s.final_test_top1 = j.at("final_test_top1").get<double>();
    const auto& gens = j.at("per_generation");
    s.final_val_top1 = gens.empty() ? 0.0 : gens.back().at("val_top1").get<double>();
    out.push_back(s);
    if (manifests) manifests->push_back(entry.path());
  }
  return out;
}

int cmd_report(const std::string& in_dir, const std::string& out_path) {
  std::vector<fs::path> manifests;
  std::vector<RunSummary> runs = collect_summaries(in_dir, &manifests);
  if (runs.empty()) {
    std::cerr << "no manifests found under " << in_dir << "\n";
    return 1;
  }
  std::vector<AblationRow> table = ablation_report(runs);
  {
    std::ofstream out(out_path);
    out << "strategy,runs,val_mean,val_sd,test_mean,test_sd\n";
    for (const AblationRow& r : table)
      out << r.strategy << "," << r.runs << "," << r.val_mean << "," << r.val_sd << ","
          << r.test_mean << "," << r.test_sd << "\n";
  }

  // Plot data: update-probability curve per distinct schedule and the
  // labeled/pseudo per-class histograms of the first run of each strategy.
  fs::path stem = fs::path(out_path).parent_path() /
                  fs::path(out_path).stem();
  {
    std::ofstream out(stem.string() + "_update_curve.csv");
    out << "strategy,epoch,p_update\n";
    std::vector<std::string> seen;
    for (const fs::path& mp : manifests) {
      std::ifstream in(mp);
      nlohmann::json j = nlohmann::json::parse(in);
      std::string strategy = j.at("strategy").get<std::string>();
      if (std::find(seen.begin(), seen.end(), strategy) != seen.end()) continue;
      seen.push_back(strategy);
      std::ifstream hist(mp.parent_path() / "history.csv");
      std::string line;
      std::getline(hist, line);  // header
      while (std::getline(hist, line)) {
        std::stringstream ss(line);
        std::string gen, epoch, alpha, p;
        std::getline(ss, gen, ',');
        std::getline(ss, epoch, ',');
        std::getline(ss, alpha, ',');
        std::getline(ss, p, ',');
        out << strategy << "," << epoch << "," << p << "\n";
      }
    }
  }
  {
    std::ofstream out(stem.string() + "_class_histogram.csv");
    out << "strategy,class,labeled,pseudo_selected\n";
    std::vector<std::string> seen;
    for (const fs::path& mp : manifests) {
      std::ifstream in(mp);
      nlohmann::json j = nlohmann::json::parse(in);
      std::string strategy = j.at("strategy").get<std::string>();
      if (std::find(seen.begin(), seen.end(), strategy) != seen.end()) continue;
      seen.push_back(strategy);
      Corpus corpus = load_corpus(j.at("config").at("corpus").get<std::string>());
      ClassDistribution labeled = class_counts(corpus);
      std::vector<long> pseudo(labeled.counts.size(), 0);
      std::ifstream dump(mp.parent_path() / "pseudo_labels.csv");
      std::string line;
      std::getline(dump, line);
      int last_gen = -1;
      std::vector<std::tuple<int, int, int>> rows;  // gen, class, selected
      while (std::getline(dump, line)) {
        std::stringstream ss(line);
        std::string gen, id, cls, conf, sel;
        std::getline(ss, gen, ',');
        std::getline(ss, id, ',');
        std::getline(ss, cls, ',');
        std::getline(ss, conf, ',');
        std::getline(ss, sel, ',');
        rows.emplace_back(std::stoi(gen), std::stoi(cls), std::stoi(sel));
        last_gen = std::max(last_gen, std::stoi(gen));
      }
      for (const auto& [gen, cls, sel] : rows)
        if (gen == last_gen && sel) pseudo[static_cast<std::size_t>(cls)]++;
      for (std::size_t c = 0; c < labeled.counts.size(); ++c)
        out << strategy << "," << c << "," << labeled.counts[c] << "," << pseudo[c]
            << "\n";
    }
  }
  for (const AblationRow& r : table)
    std::cout << r.strategy << ": test " << r.test_mean << " +- " << r.test_sd << " ("
              << r.runs << " runs)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BiSTF: bilateral-branch self-training on synthetic imbalanced corpora"};
  app.require_subcommand(1);

  std::string spec_path, out_path, sidecar_path;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--spec", spec_path, "spec JSON (defaults when omitted)");
  gen->add_option("--out", out_path, "corpus output path")->required();
  gen->add_option("--sidecar", sidecar_path, "sidecar path (default <out>.sidecar)");

  std::string config_path, run_out;
  bool baseline = false;
  std::int64_t seed_override = -1;
  std::string corpus_override;
  auto* runc = app.add_subcommand("run", "execute one self-training run");
  runc->add_option("--config", config_path, "run config JSON")->required();
  runc->add_option("--out", run_out, "output directory")->required();
  runc->add_flag("--baseline", baseline, "run the always-update single-branch baseline");
  runc->add_option("--seed", seed_override, "override config seed");
  runc->add_option("--corpus", corpus_override, "override corpus path");

  std::string ablate_config, ablate_out, schedules = "all,linear,separated";
  int seeds = 2;
  auto* abl = app.add_subcommand("ablate", "fan out runs over schedules x seeds");
  abl->add_option("--config", ablate_config, "base run config JSON")->required();
  abl->add_option("--schedules", schedules, "comma list: all,linear,separated,baseline");
  abl->add_option("--seeds", seeds, "seeds per schedule")->check(CLI::PositiveNumber);
  abl->add_option("--out", ablate_out, "output directory")->required();

  std::string report_in, report_out;
  auto* rep = app.add_subcommand("report", "aggregate manifests into the ablation table");
  rep->add_option("--in", report_in, "directory of run outputs")->required();
  rep->add_option("--out", report_out, "table CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, out_path, sidecar_path);

    if (runc->parsed()) {
      RunRequest req;
      req.config = load_run_config(config_path);
      if (seed_override >= 0) req.config.seed = static_cast<std::uint64_t>(seed_override);
      if (!corpus_override.empty()) req.config.corpus_path = corpus_override;
      req.baseline = baseline;
      req.out_dir = run_out;
      execute_run(req);
      std::cout << "run complete: " << (fs::path(run_out) / "manifest.json").string()
                << "\n";
      return 0;
    }

    if (abl->parsed()) {
      RunConfig base = load_run_config(ablate_config);
      std::vector<RunRequest> requests;
      std::stringstream ss(schedules);
      std::string name;
      while (std::getline(ss, name, ',')) {
        for (int s = 0; s < seeds; ++s) {
          RunRequest req;
          req.config = base;
          req.config.seed = base.seed + static_cast<std::uint64_t>(s);
          req.config.strategy_label = name;
          if (name == "baseline") {
            req.baseline = true;
          } else if (name == "all") {
            req.config.update_schedule.kind = UpdateSchedule::Kind::All;
          } else if (name == "linear") {
            req.config.update_schedule.kind = UpdateSchedule::Kind::Linear;
          } else if (name == "separated") {
            req.config.update_schedule.kind = UpdateSchedule::Kind::Separated;
          } else {
            std::cerr << "unknown schedule '" << name << "'\n";
            return 1;
          }
          req.out_dir = fs::path(ablate_out) / (name + "_seed" + std::to_string(s));
          requests.push_back(std::move(req));
        }
      }
      std::atomic<std::size_t> next{0};
      std::atomic<bool> failed{false};
      std::mutex err_mutex;
      int workers = std::min<int>(worker_cap(), static_cast<int>(requests.size()));
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < requests.size(); i = next++) {
            try {
              execute_run(requests[i]);
            } catch (const std::exception& e) {
              std::lock_guard<std::mutex> lock(err_mutex);
              std::cerr << "run " << requests[i].out_dir << " failed: " << e.what()
                        << "\n";
              failed = true;
            }
          }
        });
      for (auto& t : pool) t.join();
      if (failed) return 1;
      std::cout << requests.size() << " runs written under " << ablate_out << "\n";
      return 0;
    }

    if (rep->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
