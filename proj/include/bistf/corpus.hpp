#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bistf {

enum class Split { Labeled, Unlabeled, Val, Test };
enum class Domain { In, Out, Unknown };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Sample {
  std::int64_t id = 0;
  std::vector<double> features;
  std::optional<int> label;  // present iff split in {labeled, val, test}
  Domain domain = Domain::Unknown;  // sidecar only; never read by the learner
  Split split = Split::Unlabeled;

  bool operator==(const Sample& o) const {
    return id == o.id && features == o.features && label == o.label &&
           domain == o.domain && split == o.split;
  }
};

struct SyntheticSpec {
  int C_in = 10;
  int C_out = 20;
  int N_1 = 80;
  double gamma = 16.0;
  int D_in = 16;
  int genus_size = 2;
  double cluster_spread = 0.35;
  double genus_spread = 1.0;
  double unlabeled_multiplier = 10.0;
  int val_per_class = 5;
  int test_per_class = 10;
  std::uint64_t seed = 1;
};

struct ClassDistribution {
  std::vector<long> counts;
};

struct Corpus {
  int num_classes = 0;   // C_in: label space of the recognition task
  int feature_dim = 0;
  std::vector<Sample> samples;

  bool operator==(const Corpus& o) const {
    return num_classes == o.num_classes && feature_dim == o.feature_dim &&
           samples == o.samples;
  }
};

class SpecValidationError : public std::runtime_error {
public:
  SpecValidationError(const std::string& field, const std::string& msg)
      : std::runtime_error("invalid spec field '" + field + "': " + msg),
        field_(field) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

class CorpusParseError : public std::runtime_error {
public:
  CorpusParseError(int line, const std::string& msg)
      : std::runtime_error("parse error at line " + std::to_string(line) +
                           ": " + msg),
        line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

// Labeled per-class counts N_c = round(N_1 * gamma^(-(c-1)/(C_in-1))),
// c = 1..C_in; for C_in = 1 the single count is N_1.
std::vector<long> labeled_count_profile(int c_in, int n1, double gamma);

Corpus generate_corpus(const SyntheticSpec& spec);

ClassDistribution class_counts(const Corpus& corpus, Split split = Split::Labeled);

double imbalance_ratio(const ClassDistribution& dist);

// Writes the corpus as JSON-lines plus a sidecar holding the domain tags.
// Default sidecar path is `path` + ".sidecar".
void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& sidecar_path = "");

// Loads the corpus. The sidecar (domain tags) is only read when
// `with_sidecar` is set; the training path never sets it.
Corpus load_corpus(const std::string& path, bool with_sidecar = false,
                   const std::string& sidecar_path = "");

SyntheticSpec load_spec(const std::string& path);
void save_spec(const SyntheticSpec& spec, const std::string& path);

std::string corpus_file_hash(const std::string& path);

}  // namespace bistf
