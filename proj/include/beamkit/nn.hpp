// Minimal reverse-mode automatic differentiation on dense float64 tensors,
// with fused dense layers, Adam, and a central-difference gradient checker.
// Graphs are built per forward pass on a Tape and discarded after backward.
//
// Complex quantities are represented as interleaved (re, im) column pairs of
// real tensors; domain-specific complex ops plug in through CustomOp.
#ifndef BEAMKIT_NN_HPP
#define BEAMKIT_NN_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "beamkit/common.hpp"

namespace beamkit::nn {

struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, double fill = 0.0)
      : shape(std::move(s)), data(static_cast<size_t>(count(shape)), fill) {}

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  // 2-D accessors; rank-1 tensors behave as a single row.
  int64_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  int64_t cols() const { return shape.size() >= 2 ? shape[1] : (shape.empty() ? 1 : shape[0]); }

  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m, adam_v;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

using ParamPtr = std::shared_ptr<Param>;

// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
Tensor uniform_init(const std::vector<int64_t>& shape, int64_t fan_in,
                    int64_t fan_out, Rng& rng);

enum class Act { Linear, Tanh, Sigmoid };

class Tape;

// Extension point for domain ops (complex beam algebra lives outside nn).
struct CustomOp {
  virtual ~CustomOp() = default;
  virtual std::string name() const = 0;
  virtual Tensor forward(const std::vector<const Tensor*>& in) = 0;
  // gin[i] is null when input i does not need a gradient.
  virtual void backward(const std::vector<const Tensor*>& in, const Tensor& out,
                        const Tensor& gout, const std::vector<Tensor*>& gin) = 0;
};

class Tape {
 public:
  using Id = int32_t;

  // Scans every produced value/gradient and throws PoisonedGraph on NaN/Inf.
  bool check_finite = true;

  Id constant(Tensor t);
  Id param(const ParamPtr& p);

  // x:(N,D) w:(D,E) b:(1,E) -> act(x w + b)
  Id dense(Id x, Id w, Id b, Act act);
  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id add_scaled(Id a, Id b, double s);  // a + s * b
  Id scale(Id a, double s);
  Id tanh_(Id x);
  Id sigmoid_(Id x);
  Id square(Id x);
  Id concat_cols(Id a, Id b);
  Id sum_all(Id x);   // -> (1,1)
  Id mean_all(Id x);  // -> (1,1)

  // Complex pairs (N, 2C): magnitude |z| -> (|z|^2 + eps)^(power/2), phase kept.
  Id compress_pairs(Id x, double power, double eps);
  // (N, 2C) -> (N, C) of (|z|^2 + eps)^(power/2).
  Id magnitude_pow(Id x, double power, double eps);

  Id custom(std::shared_ptr<CustomOp> op, const std::vector<Id>& inputs);

  const Tensor& val(Id id) const { return nodes_[id].value; }
  const Tensor& grad_of(Id id) const;
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
  size_t num_nodes() const { return nodes_.size(); }

  // Reverse pass from a scalar node; parameter gradients are accumulated
  // into their Param::grad (scaled by loss_scale).
  void backward(Id loss, double loss_scale = 1.0);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    std::vector<Id> parents;
    std::function<void(Tape&, Node&)> back;
    ParamPtr param;
    bool needs_grad = false;
  };

  Id push(Tensor value, std::vector<Id> parents,
          std::function<void(Tape&, Node&)> back);
  Tensor& grad_buf(Id id);
  void assert_finite(const Tensor& t, const char* what);

  std::vector<Node> nodes_;
  friend struct TapeTestPeek;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Bias-corrected update from each param's accumulated grad.
  void step(const std::vector<ParamPtr>& params);

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  int64_t steps() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }
  void set_step_count(int64_t t) { step_count_ = t; }

 private:
  AdamConfig cfg_;
  int64_t step_count_ = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// eval(want_grad): build a fresh graph from current parameter values, return
// the scalar loss; when want_grad, also run backward so grads land in params.
// Central differences with the given step; relative error uses
// |a - n| / max(|a|, |n|, 1e-12).
GradCheckReport grad_check(const std::function<double(bool want_grad)>& eval,
                           const std::vector<ParamPtr>& params, double step);

}  // namespace beamkit::nn

#endif  // BEAMKIT_NN_HPP
