#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bistf/rng.hpp"

namespace bistf {

// Dense layer, W stored row-major as out x in.
struct Dense {
  std::size_t in = 0, out = 0;
  std::vector<double> W;
  std::vector<double> b;

  static Dense zeros(std::size_t in, std::size_t out);
  static Dense init(std::size_t in, std::size_t out, Rng& rng);
};

struct ModelDims {
  int input = 16;
  std::vector<int> trunk_hidden = {32, 16};
  int feature = 16;  // D, output of the per-branch last block
  int classes = 10;
};

// Shared trunk, one per-branch last block, one head per branch.
struct BilateralParams {
  ModelDims dims;
  std::vector<Dense> trunk;   // tanh after each layer
  Dense last_block_l, last_block_s;  // tanh
  Dense head_l, head_s;       // linear, classes x feature

  static BilateralParams init(const ModelDims& dims, Rng& rng);
};

struct AlphaSchedule {
  enum class Kind { Parabolic, Constant };
  Kind kind = Kind::Parabolic;
  int t_max = 100;
  double constant_value = 0.5;
};

// alpha(T): parabolic 1 - (T/T_max)^2, or the configured constant.
double alpha_at(int epoch, const AlphaSchedule& schedule);

struct BranchTrace {
  std::vector<std::vector<double>> trunk_act;  // post-tanh, per trunk layer
  std::vector<double> feature;                 // f, post-tanh block output
};

struct ForwardCache {
  BranchTrace l, s;
  std::vector<double> input_l, input_s;
  double alpha = 1.0;
  std::vector<double> logits;  // z
  std::vector<double> probs;   // p_hat
};

// z = alpha*(W_l f_l + b_l) + (1-alpha)*(W_s f_s + b_s); p_hat = softmax(z)
// with max subtraction.
ForwardCache forward(const std::vector<double>& x_l,
                     const std::vector<double>& x_s, double alpha,
                     const BilateralParams& params);

// L = alpha * CE(p_hat, y_l) + (1-alpha) * CE(p_hat, y_s), log clamped at 1e-12.
double loss(const std::vector<double>& p_hat, int y_l, int y_s, double alpha);

struct Gradients {
  std::vector<Dense> trunk;
  Dense last_block_l, last_block_s;
  Dense head_l, head_s;

  static Gradients zeros_like(const BilateralParams& params);
  void accumulate(const Gradients& other);
  void scale(double f);
};

Gradients backward(const ForwardCache& cache, int y_l, int y_s, double alpha,
                   const BilateralParams& params);

// SGD with momentum and decoupled-from-bias weight decay:
// v <- momentum*v + (g + wd*w); w <- w - lr*v.
class SgdOptimizer {
public:
  SgdOptimizer(double lr, double momentum = 0.9, double weight_decay = 1e-4)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  // Throws on non-finite gradients; params are left untouched in that case.
  void step(BilateralParams& params, const Gradients& grads);

  double lr() const { return lr_; }

private:
  double lr_, momentum_, weight_decay_;
  Gradients velocity_;
  bool has_velocity_ = false;
};

struct Prediction {
  int label = 0;
  double confidence = 0.0;
  std::vector<double> probs;
};

// Single input routed through both branch blocks; ties in argmax go to the
// lowest class index.
Prediction predict(const std::vector<double>& x, const BilateralParams& params,
                   double alpha_inf = 0.5);

void save_checkpoint(const BilateralParams& params, int epoch,
                     std::uint64_t rng_seed, const std::string& path);
BilateralParams load_checkpoint(const std::string& path, int* epoch = nullptr,
                                std::uint64_t* rng_seed = nullptr);

}  // namespace bistf
