#include "bistf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "bistf/rng.hpp"
#include "json.hpp"

namespace bistf {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unlabeled";
}

Split split_from_string(const std::string& s) {
  if (s == "labeled") return Split::Labeled;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::runtime_error("unknown split '" + s + "'");
}

std::vector<long> labeled_count_profile(int c_in, int n1, double gamma) {
  std::vector<long> counts(static_cast<std::size_t>(c_in));
  if (c_in == 1) {
    counts[0] = n1;
    return counts;
  }
  for (int c = 1; c <= c_in; ++c) {
    double exponent = -static_cast<double>(c - 1) / (c_in - 1);
    counts[c - 1] = std::lround(n1 * std::pow(gamma, exponent));
  }
  return counts;
}

static void validate_spec(const SyntheticSpec& s) {
  if (s.C_in < 1) throw SpecValidationError("C_in", "must be >= 1");
  if (s.C_out < 0) throw SpecValidationError("C_out", "must be >= 0");
  if (s.gamma < 1.0) throw SpecValidationError("gamma", "must be >= 1");
  if (s.N_1 < s.gamma)
    throw SpecValidationError("N_1", "must be >= gamma so the minority class keeps >= 1 sample");
  if (s.D_in < 1) throw SpecValidationError("D_in", "must be >= 1");
  if (s.genus_size < 1) throw SpecValidationError("genus_size", "must be >= 1");
  if (s.cluster_spread <= 0) throw SpecValidationError("cluster_spread", "must be > 0");
  if (s.genus_spread <= 0) throw SpecValidationError("genus_spread", "must be > 0");
  if (s.unlabeled_multiplier < 0)
    throw SpecValidationError("unlabeled_multiplier", "must be >= 0");
  if (s.val_per_class < 0) throw SpecValidationError("val_per_class", "must be >= 0");
  if (s.test_per_class < 0) throw SpecValidationError("test_per_class", "must be >= 0");
}

namespace {

std::vector<double> draw_point(Rng& rng, const std::vector<double>& mean,
                               double spread) {
  std::vector<double> p(mean.size());
  for (std::size_t d = 0; d < mean.size(); ++d)
    p[d] = mean[d] + spread * rng.normal();
  return p;
}

// Class means: genus centroid plus a small per-class offset, so classes in
// the same genus stay close.
std::vector<std::vector<double>> make_class_means(Rng& rng, int num_classes,
                                                  const SyntheticSpec& spec) {
  int genera = (num_classes + spec.genus_size - 1) / spec.genus_size;
  std::vector<std::vector<double>> centroids;
  centroids.reserve(static_cast<std::size_t>(genera));
  std::vector<double> origin(static_cast<std::size_t>(spec.D_in), 0.0);
  for (int g = 0; g < genera; ++g)
    centroids.push_back(draw_point(rng, origin, spec.genus_spread));
  std::vector<std::vector<double>> means;
  means.reserve(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c)
    means.push_back(draw_point(rng, centroids[c / spec.genus_size],
                               spec.cluster_spread));
  return means;
}

// Largest-remainder apportionment of `total` across weights.
std::vector<long> apportion(long total, const std::vector<long>& weights) {
  long wsum = std::accumulate(weights.begin(), weights.end(), 0L);
  std::vector<long> out(weights.size(), 0);
  if (wsum == 0 || total == 0) return out;
  std::vector<double> frac(weights.size());
  long assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<long>(exact);
    frac[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (long r = 0; r < total - assigned; ++r) out[order[static_cast<std::size_t>(r) % order.size()]]++;
  return out;
}

}  // namespace

Corpus generate_corpus(const SyntheticSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);

  auto in_means = make_class_means(rng, spec.C_in, spec);
  auto out_means = make_class_means(rng, spec.C_out, spec);

  std::vector<long> labeled = labeled_count_profile(spec.C_in, spec.N_1, spec.gamma);
  long n_total = std::accumulate(labeled.begin(), labeled.end(), 0L);

  long m_total = std::lround(spec.unlabeled_multiplier * static_cast<double>(n_total));
  long m_in = m_total / 2;
  long m_out = spec.C_out > 0 ? m_total - m_in : 0;
  if (spec.C_out == 0) m_in = m_total;

  // In-class unlabeled pool follows the labeled long-tail profile;
  // out-of-class classes are evenly populated.
  std::vector<long> unl_in = apportion(m_in, labeled);
  std::vector<long> unl_out =
      apportion(m_out, std::vector<long>(static_cast<std::size_t>(spec.C_out), 1));

  Corpus corpus;
  corpus.num_classes = spec.C_in;
  corpus.feature_dim = spec.D_in;
  std::int64_t next_id = 0;

  auto emit = [&](const std::vector<double>& mean, std::optional<int> label,
                  Domain domain, Split split) {
    Sample s;
    s.id = next_id++;
    s.features = draw_point(rng, mean, spec.cluster_spread);
    s.label = label;
    s.domain = domain;
    s.split = split;
    corpus.samples.push_back(std::move(s));
  };

  for (int c = 0; c < spec.C_in; ++c)
    for (long i = 0; i < labeled[static_cast<std::size_t>(c)]; ++i)
      emit(in_means[static_cast<std::size_t>(c)], c, Domain::In, Split::Labeled);
  for (int c = 0; c < spec.C_in; ++c)
    for (long i = 0; i < unl_in[static_cast<std::size_t>(c)]; ++i)
      emit(in_means[static_cast<std::size_t>(c)], std::nullopt, Domain::In, Split::Unlabeled);
  for (int c = 0; c < spec.C_out; ++c)
    for (long i = 0; i < unl_out[static_cast<std::size_t>(c)]; ++i)
      emit(out_means[static_cast<std::size_t>(c)], std::nullopt, Domain::Out, Split::Unlabeled);
  for (int c = 0; c < spec.C_in; ++c)
    for (int i = 0; i < spec.val_per_class; ++i)
      emit(in_means[static_cast<std::size_t>(c)], c, Domain::In, Split::Val);
  for (int c = 0; c < spec.C_in; ++c)
    for (int i = 0; i < spec.test_per_class; ++i)
      emit(in_means[static_cast<std::size_t>(c)], c, Domain::In, Split::Test);

  return corpus;
}

ClassDistribution class_counts(const Corpus& corpus, Split split) {
  ClassDistribution dist;
  dist.counts.assign(static_cast<std::size_t>(corpus.num_classes), 0);
  for (const Sample& s : corpus.samples) {
    if (s.split != split || !s.label) continue;
    int c = *s.label;
    if (c >= 0 && c < corpus.num_classes) dist.counts[static_cast<std::size_t>(c)]++;
  }
  return dist;
}

double imbalance_ratio(const ClassDistribution& dist) {
  if (dist.counts.empty()) throw std::runtime_error("imbalance ratio of empty distribution");
  long lo = dist.counts[0], hi = dist.counts[0];
  for (long c : dist.counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (lo == 0)
    throw std::runtime_error("imbalance ratio undefined: a class has zero samples");
  return static_cast<double>(hi) / static_cast<double>(lo);
}

static std::string default_sidecar(const std::string& path) { return path + ".sidecar"; }

void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& sidecar_path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  std::ofstream side(sidecar_path.empty() ? default_sidecar(path) : sidecar_path);
  if (!side) throw std::runtime_error("cannot open sidecar for writing");
  for (const Sample& s : corpus.samples) {
    json j;
    j["id"] = s.id;
    j["features"] = s.features;
    if (s.label)
      j["label"] = *s.label;
    else
      j["label"] = nullptr;
    j["split"] = to_string(s.split);
    out << j.dump() << "\n";
    json d;
    d["id"] = s.id;
    d["domain"] = s.domain == Domain::In ? "in" : "out";
    side << d.dump() << "\n";
  }
}

Corpus load_corpus(const std::string& path, bool with_sidecar,
                   const std::string& sidecar_path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Corpus corpus;
  std::string line;
  int lineno = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorpusParseError(lineno, "malformed JSON record");
    Sample s;
    try {
      s.id = j.at("id").get<std::int64_t>();
      s.features = j.at("features").get<std::vector<double>>();
      s.split = split_from_string(j.at("split").get<std::string>());
      if (!j.at("label").is_null()) s.label = j.at("label").get<int>();
    } catch (const std::exception& e) {
      throw CorpusParseError(lineno, e.what());
    }
    bool needs_label = s.split != Split::Unlabeled;
    if (needs_label && !s.label)
      throw CorpusParseError(lineno, "missing label for split " + to_string(s.split));
    if (!needs_label && s.label)
      throw CorpusParseError(lineno, "label present for unlabeled split");
    if (corpus.feature_dim == 0)
      corpus.feature_dim = static_cast<int>(s.features.size());
    else if (static_cast<int>(s.features.size()) != corpus.feature_dim)
      throw CorpusParseError(lineno, "inconsistent feature length");
    if (s.label) max_label = std::max(max_label, *s.label);
    corpus.samples.push_back(std::move(s));
  }
  corpus.num_classes = max_label + 1;

  if (with_sidecar) {
    std::string sp = sidecar_path.empty() ? default_sidecar(path) : sidecar_path;
    std::ifstream side(sp);
    if (!side) throw std::runtime_error("cannot open sidecar '" + sp + "'");
    std::unordered_map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i)
      index[corpus.samples[i].id] = i;
    int sline = 0;
    while (std::getline(side, line)) {
      ++sline;
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw CorpusParseError(sline, "malformed sidecar record");
      auto it = index.find(j.at("id").get<std::int64_t>());
      if (it == index.end()) throw CorpusParseError(sline, "sidecar id not in corpus");
      Sample& s = corpus.samples[it->second];
      s.domain = j.at("domain").get<std::string>() == "in" ? Domain::In : Domain::Out;
      if (s.domain == Domain::Out && s.split != Split::Unlabeled)
        throw CorpusParseError(sline, "out-of-domain sample outside the unlabeled split");
    }
  }
  return corpus;
}

SyntheticSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec '" + path + "'");
  json j = json::parse(in);
  SyntheticSpec s;
  s.C_in = j.value("C_in", s.C_in);
  s.C_out = j.value("C_out", s.C_out);
  s.N_1 = j.value("N_1", s.N_1);
  s.gamma = j.value("gamma", s.gamma);
  s.D_in = j.value("D_in", s.D_in);
  s.genus_size = j.value("genus_size", s.genus_size);
  s.cluster_spread = j.value("cluster_spread", s.cluster_spread);
  s.genus_spread = j.value("genus_spread", s.genus_spread);
  s.unlabeled_multiplier = j.value("unlabeled_multiplier", s.unlabeled_multiplier);
  s.val_per_class = j.value("val_per_class", s.val_per_class);
  s.test_per_class = j.value("test_per_class", s.test_per_class);
  s.seed = j.value("seed", s.seed);
  return s;
}

void save_spec(const SyntheticSpec& s, const std::string& path) {
  json j;
  j["C_in"] = s.C_in;
  j["C_out"] = s.C_out;
  j["N_1"] = s.N_1;
  j["gamma"] = s.gamma;
  j["D_in"] = s.D_in;
  j["genus_size"] = s.genus_size;
  j["cluster_spread"] = s.cluster_spread;
  j["genus_spread"] = s.genus_spread;
  j["unlabeled_multiplier"] = s.unlabeled_multiplier;
  j["val_per_class"] = s.val_per_class;
  j["test_per_class"] = s.test_per_class;
  j["seed"] = s.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

std::string corpus_file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::uint64_t h = 14695981039346656037ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string(hex);
}

}  // namespace bistf
