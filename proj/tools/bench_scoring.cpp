// Compares the serial reference against the OpenMP pool-scoring and
// evaluation paths on a generated corpus.

#include <chrono>
#include <iostream>

#include "bistf/corpus.hpp"
#include "bistf/eval.hpp"
#include "bistf/pseudo.hpp"

using namespace bistf;

namespace {

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, dt);
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  SyntheticSpec spec;
  spec.unlabeled_multiplier = argc > 1 ? std::atof(argv[1]) : 200.0;
  Corpus corpus = generate_corpus(spec);

  std::vector<const Sample*> pool, test;
  for (const Sample& s : corpus.samples) {
    if (s.split == Split::Unlabeled) pool.push_back(&s);
    if (s.split == Split::Test) test.push_back(&s);
  }

  Rng rng(7);
  ModelDims dims;
  dims.input = corpus.feature_dim;
  dims.classes = corpus.num_classes;
  BilateralParams params = BilateralParams::init(dims, rng);

  std::cout << "pool size: " << pool.size() << "\n";

  double t_serial = time_best_of(3, [&] { pseudo_label_pool_serial(params, pool, 0.5); });
  double t_par = time_best_of(3, [&] { pseudo_label_pool(params, pool, 0.5); });
  std::cout << "pseudo_label_pool  serial " << t_serial << " s, parallel " << t_par
            << " s, speedup " << t_serial / t_par << "x\n";

  auto a = pseudo_label_pool_serial(params, pool, 0.5);
  auto b = pseudo_label_pool(params, pool, 0.5);
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i)
    same = a[i].sample_id == b[i].sample_id && a[i].confidence == b[i].confidence;
  std::cout << "results identical: " << (same ? "yes" : "NO") << "\n";

  double e_serial = time_best_of(3, [&] { evaluate_serial(params, test); });
  double e_par = time_best_of(3, [&] { evaluate(params, test); });
  std::cout << "evaluate           serial " << e_serial << " s, parallel " << e_par
            << " s, speedup " << e_serial / e_par << "x\n";
  return same ? 0 : 1;
}
