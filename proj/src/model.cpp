#include "bistf/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace bistf {

using nlohmann::json;

Dense Dense::zeros(std::size_t in, std::size_t out) {
  Dense d;
  d.in = in;
  d.out = out;
  d.W.assign(in * out, 0.0);
  d.b.assign(out, 0.0);
  return d;
}

Dense Dense::init(std::size_t in, std::size_t out, Rng& rng) {
  Dense d = zeros(in, out);
  double scale = std::sqrt(2.0 / static_cast<double>(in + out));
  for (double& w : d.W) w = scale * rng.normal();
  return d;
}

BilateralParams BilateralParams::init(const ModelDims& dims, Rng& rng) {
  BilateralParams p;
  p.dims = dims;
  std::size_t prev = static_cast<std::size_t>(dims.input);
  for (int h : dims.trunk_hidden) {
    p.trunk.push_back(Dense::init(prev, static_cast<std::size_t>(h), rng));
    prev = static_cast<std::size_t>(h);
  }
  p.last_block_l = Dense::init(prev, static_cast<std::size_t>(dims.feature), rng);
  p.last_block_s = Dense::init(prev, static_cast<std::size_t>(dims.feature), rng);
  p.head_l = Dense::init(static_cast<std::size_t>(dims.feature),
                         static_cast<std::size_t>(dims.classes), rng);
  p.head_s = Dense::init(static_cast<std::size_t>(dims.feature),
                         static_cast<std::size_t>(dims.classes), rng);
  return p;
}

double alpha_at(int epoch, const AlphaSchedule& schedule) {
  if (epoch < 0 || epoch > schedule.t_max)
    throw std::runtime_error("alpha_at: epoch out of [0, T_max]");
  if (schedule.kind == AlphaSchedule::Kind::Constant) return schedule.constant_value;
  double t = static_cast<double>(epoch) / schedule.t_max;
  return 1.0 - t * t;
}

namespace {

std::vector<double> affine(const Dense& d, const std::vector<double>& x) {
  if (x.size() != d.in) throw std::runtime_error("dimension mismatch in dense layer");
  std::vector<double> y(d.out);
  for (std::size_t o = 0; o < d.out; ++o) {
    double acc = d.b[o];
    const double* row = d.W.data() + o * d.in;
    for (std::size_t i = 0; i < d.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
  return y;
}

void tanh_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::tanh(x);
}

BranchTrace run_branch(const std::vector<double>& x, const BilateralParams& p,
                       const Dense& block) {
  BranchTrace t;
  std::vector<double> cur = x;
  for (const Dense& layer : p.trunk) {
    cur = affine(layer, cur);
    tanh_inplace(cur);
    t.trunk_act.push_back(cur);
  }
  t.feature = affine(block, cur);
  tanh_inplace(t.feature);
  return t;
}

std::vector<double> softmax(const std::vector<double>& z) {
  double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

ForwardCache forward(const std::vector<double>& x_l,
                     const std::vector<double>& x_s, double alpha,
                     const BilateralParams& params) {
  if (alpha < 0.0 || alpha > 1.0) throw std::runtime_error("forward: alpha outside [0,1]");
  ForwardCache c;
  c.alpha = alpha;
  c.input_l = x_l;
  c.input_s = x_s;
  c.l = run_branch(x_l, params, params.last_block_l);
  c.s = run_branch(x_s, params, params.last_block_s);
  std::vector<double> z_l = affine(params.head_l, c.l.feature);
  std::vector<double> z_s = affine(params.head_s, c.s.feature);
  c.logits.resize(z_l.size());
  for (std::size_t i = 0; i < z_l.size(); ++i)
    c.logits[i] = alpha * z_l[i] + (1.0 - alpha) * z_s[i];
  c.probs = softmax(c.logits);
  return c;
}

double loss(const std::vector<double>& p_hat, int y_l, int y_s, double alpha) {
  auto ce = [&](int y) {
    double p = std::max(p_hat[static_cast<std::size_t>(y)], 1e-12);
    return -std::log(p);
  };
  return alpha * ce(y_l) + (1.0 - alpha) * ce(y_s);
}

Gradients Gradients::zeros_like(const BilateralParams& p) {
  Gradients g;
  for (const Dense& t : p.trunk) g.trunk.push_back(Dense::zeros(t.in, t.out));
  g.last_block_l = Dense::zeros(p.last_block_l.in, p.last_block_l.out);
  g.last_block_s = Dense::zeros(p.last_block_s.in, p.last_block_s.out);
  g.head_l = Dense::zeros(p.head_l.in, p.head_l.out);
  g.head_s = Dense::zeros(p.head_s.in, p.head_s.out);
  return g;
}

namespace {

void axpy(Dense& dst, const Dense& src, double f) {
  for (std::size_t i = 0; i < dst.W.size(); ++i) dst.W[i] += f * src.W[i];
  for (std::size_t i = 0; i < dst.b.size(); ++i) dst.b[i] += f * src.b[i];
}

// Accumulates dL/dW and dL/db for a dense layer given upstream dL/dy
// (post-affine), and returns dL/dx.
std::vector<double> dense_backward(const Dense& layer, const std::vector<double>& x,
                                   const std::vector<double>& dy, Dense& grad) {
  for (std::size_t o = 0; o < layer.out; ++o) {
    grad.b[o] += dy[o];
    double* grow = grad.W.data() + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) grow[i] += dy[o] * x[i];
  }
  std::vector<double> dx(layer.in, 0.0);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = layer.W.data() + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) dx[i] += dy[o] * row[i];
  }
  return dx;
}

// d tanh(u)/du = 1 - tanh(u)^2, with act = tanh(u) cached.
void tanh_backward(std::vector<double>& d, const std::vector<double>& act) {
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - act[i] * act[i];
}

void branch_backward(const BranchTrace& trace, const std::vector<double>& input,
                     std::vector<double> d_feature, const BilateralParams& p,
                     const Dense& block, Dense& block_grad, Gradients& g) {
  tanh_backward(d_feature, trace.feature);
  const std::vector<double>& block_in =
      p.trunk.empty() ? input : trace.trunk_act.back();
  std::vector<double> d = dense_backward(block, block_in, d_feature, block_grad);
  for (std::size_t li = p.trunk.size(); li-- > 0;) {
    tanh_backward(d, trace.trunk_act[li]);
    const std::vector<double>& in = li == 0 ? input : trace.trunk_act[li - 1];
    d = dense_backward(p.trunk[li], in, d, g.trunk[li]);
  }
}

}  // namespace

Gradients backward(const ForwardCache& cache, int y_l, int y_s, double alpha,
                   const BilateralParams& params) {
  Gradients g = Gradients::zeros_like(params);
  std::size_t C = cache.probs.size();

  // dL/dz = p_hat - (alpha*onehot(y_l) + (1-alpha)*onehot(y_s))
  std::vector<double> dz = cache.probs;
  dz[static_cast<std::size_t>(y_l)] -= alpha;
  dz[static_cast<std::size_t>(y_s)] -= 1.0 - alpha;

  // Head contributions carry the Eq.-1 branch weights.
  std::vector<double> dz_l(C), dz_s(C);
  for (std::size_t i = 0; i < C; ++i) {
    dz_l[i] = alpha * dz[i];
    dz_s[i] = (1.0 - alpha) * dz[i];
  }
  std::vector<double> df_l =
      dense_backward(params.head_l, cache.l.feature, dz_l, g.head_l);
  std::vector<double> df_s =
      dense_backward(params.head_s, cache.s.feature, dz_s, g.head_s);

  branch_backward(cache.l, cache.input_l, std::move(df_l), params,
                  params.last_block_l, g.last_block_l, g);
  branch_backward(cache.s, cache.input_s, std::move(df_s), params,
                  params.last_block_s, g.last_block_s, g);
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  for (std::size_t i = 0; i < trunk.size(); ++i) axpy(trunk[i], other.trunk[i], 1.0);
  axpy(last_block_l, other.last_block_l, 1.0);
  axpy(last_block_s, other.last_block_s, 1.0);
  axpy(head_l, other.head_l, 1.0);
  axpy(head_s, other.head_s, 1.0);
}

void Gradients::scale(double f) {
  auto sc = [f](Dense& d) {
    for (double& w : d.W) w *= f;
    for (double& b : d.b) b *= f;
  };
  for (Dense& t : trunk) sc(t);
  sc(last_block_l);
  sc(last_block_s);
  sc(head_l);
  sc(head_s);
}

namespace {

bool finite(const Dense& d) {
  for (double w : d.W)
    if (!std::isfinite(w)) return false;
  for (double b : d.b)
    if (!std::isfinite(b)) return false;
  return true;
}

void sgd_dense(Dense& w, Dense& v, const Dense& g, double lr, double momentum,
               double wd) {
  for (std::size_t i = 0; i < w.W.size(); ++i) {
    v.W[i] = momentum * v.W[i] + (g.W[i] + wd * w.W[i]);
    w.W[i] -= lr * v.W[i];
  }
  // Biases are exempt from weight decay.
  for (std::size_t i = 0; i < w.b.size(); ++i) {
    v.b[i] = momentum * v.b[i] + g.b[i];
    w.b[i] -= lr * v.b[i];
  }
}

}  // namespace

void SgdOptimizer::step(BilateralParams& params, const Gradients& grads) {
  bool ok = finite(grads.last_block_l) && finite(grads.last_block_s) &&
            finite(grads.head_l) && finite(grads.head_s);
  for (const Dense& t : grads.trunk) ok = ok && finite(t);
  if (!ok) throw std::runtime_error("sgd_step: non-finite gradient, step aborted");

  if (!has_velocity_) {
    velocity_ = Gradients::zeros_like(params);
    has_velocity_ = true;
  }
  for (std::size_t i = 0; i < params.trunk.size(); ++i)
    sgd_dense(params.trunk[i], velocity_.trunk[i], grads.trunk[i], lr_, momentum_,
              weight_decay_);
  sgd_dense(params.last_block_l, velocity_.last_block_l, grads.last_block_l, lr_,
            momentum_, weight_decay_);
  sgd_dense(params.last_block_s, velocity_.last_block_s, grads.last_block_s, lr_,
            momentum_, weight_decay_);
  sgd_dense(params.head_l, velocity_.head_l, grads.head_l, lr_, momentum_,
            weight_decay_);
  sgd_dense(params.head_s, velocity_.head_s, grads.head_s, lr_, momentum_,
            weight_decay_);
}

Prediction predict(const std::vector<double>& x, const BilateralParams& params,
                   double alpha_inf) {
  ForwardCache c = forward(x, x, alpha_inf, params);
  Prediction p;
  p.probs = c.probs;
  p.label = 0;
  p.confidence = c.probs[0];
  for (std::size_t i = 1; i < c.probs.size(); ++i) {
    if (c.probs[i] > p.confidence) {
      p.confidence = c.probs[i];
      p.label = static_cast<int>(i);
    }
  }
  return p;
}

namespace {

json dense_to_json(const Dense& d) {
  return json{{"in", d.in}, {"out", d.out}, {"W", d.W}, {"b", d.b}};
}

Dense dense_from_json(const json& j) {
  Dense d;
  d.in = j.at("in").get<std::size_t>();
  d.out = j.at("out").get<std::size_t>();
  d.W = j.at("W").get<std::vector<double>>();
  d.b = j.at("b").get<std::vector<double>>();
  if (d.W.size() != d.in * d.out || d.b.size() != d.out)
    throw std::runtime_error("checkpoint: layer shape mismatch");
  return d;
}

}  // namespace

void save_checkpoint(const BilateralParams& p, int epoch, std::uint64_t rng_seed,
                     const std::string& path) {
  json j;
  j["meta"] = {{"input", p.dims.input},
               {"trunk_hidden", p.dims.trunk_hidden},
               {"feature", p.dims.feature},
               {"classes", p.dims.classes},
               {"epoch", epoch},
               {"rng_seed", rng_seed}};
  json trunk = json::array();
  for (const Dense& t : p.trunk) trunk.push_back(dense_to_json(t));
  j["trunk"] = trunk;
  j["last_block_l"] = dense_to_json(p.last_block_l);
  j["last_block_s"] = dense_to_json(p.last_block_s);
  j["head_l"] = dense_to_json(p.head_l);
  j["head_s"] = dense_to_json(p.head_s);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
  out << j.dump() << "\n";
}

BilateralParams load_checkpoint(const std::string& path, int* epoch,
                                std::uint64_t* rng_seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  json j = json::parse(in);
  BilateralParams p;
  p.dims.input = j.at("meta").at("input").get<int>();
  p.dims.trunk_hidden = j.at("meta").at("trunk_hidden").get<std::vector<int>>();
  p.dims.feature = j.at("meta").at("feature").get<int>();
  p.dims.classes = j.at("meta").at("classes").get<int>();
  if (epoch) *epoch = j.at("meta").at("epoch").get<int>();
  if (rng_seed) *rng_seed = j.at("meta").at("rng_seed").get<std::uint64_t>();
  for (const json& t : j.at("trunk")) p.trunk.push_back(dense_from_json(t));
  p.last_block_l = dense_from_json(j.at("last_block_l"));
  p.last_block_s = dense_from_json(j.at("last_block_s"));
  p.head_l = dense_from_json(j.at("head_l"));
  p.head_s = dense_from_json(j.at("head_s"));
  return p;
}

}  // namespace bistf
