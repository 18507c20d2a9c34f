#include "beamkit/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace beamkit::nn {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

namespace {

using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXd>;

ConstMatMap as_mat(const Tensor& t) { return ConstMatMap(t.data.data(), t.rows(), t.cols()); }
MatMap as_mat_mut(Tensor& t) { return MatMap(t.data.data(), t.rows(), t.cols()); }
ArrMap as_arr(Tensor& t) { return ArrMap(t.data.data(), t.size()); }
ConstArrMap as_arr(const Tensor& t) { return ConstArrMap(t.data.data(), t.size()); }

// Vectorized activations through exp; |z| is clamped where the exact
// function is saturated to within one ulp anyway.
void act_apply_inplace(Act a, Tensor& t) {
  ArrMap o = as_arr(t);
  switch (a) {
    case Act::Tanh: {
      Eigen::ArrayXd e = (2.0 * o.min(20.0).max(-20.0)).exp();
      o = (e - 1.0) / (e + 1.0);
      break;
    }
    case Act::Sigmoid: {
      Eigen::ArrayXd e = (-o.min(40.0).max(-40.0)).exp();
      o = 1.0 / (1.0 + e);
      break;
    }
    default:
      break;
  }
}

// delta = gout * act'(out), with the derivative expressed via the output.
void act_backward(Act a, const Tensor& out, const Tensor& gout, Tensor& delta) {
  ConstArrMap y = as_arr(out);
  ConstArrMap g = as_arr(gout);
  ArrMap d = as_arr(delta);
  switch (a) {
    case Act::Tanh:
      d = g * (1.0 - y * y);
      break;
    case Act::Sigmoid:
      d = g * y * (1.0 - y);
      break;
    default:
      d = g;
      break;
  }
}

}  // namespace

Tensor uniform_init(const std::vector<int64_t>& shape, int64_t fan_in,
                    int64_t fan_out, Rng& rng) {
  Tensor t(shape);
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

void Tape::assert_finite(const Tensor& t, const char* what) {
  if (!as_arr(t).allFinite())
    throw PoisonedGraph(std::string("non-finite value in ") + what);
}

Tape::Id Tape::push(Tensor value, std::vector<Id> parents,
                    std::function<void(Tape&, Node&)> back) {
  if (check_finite) assert_finite(value, "forward value");
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.back = std::move(back);
  for (Id p : n.parents)
    if (nodes_[p].needs_grad) n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(Id id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

const Tensor& Tape::grad_of(Id id) const {
  if (nodes_[id].grad.data.empty())
    throw InvalidArgument("grad_of: no gradient recorded (run backward first)");
  return nodes_[id].grad;
}

Tape::Id Tape::constant(Tensor t) { return push(std::move(t), {}, nullptr); }

Tape::Id Tape::param(const ParamPtr& p) {
  Id id = push(p->value, {}, nullptr);
  nodes_[id].param = p;
  nodes_[id].needs_grad = p->trainable;
  return id;
}

Tape::Id Tape::dense(Id x, Id w, Id b, Act act) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  if (xv.cols() != wv.rows() || bv.size() != wv.cols())
    throw ShapeError("dense: shape mismatch");
  Tensor out({xv.rows(), wv.cols()});
  as_mat_mut(out).noalias() = as_mat(xv) * as_mat(wv);
  for (int64_t r = 0; r < out.rows(); ++r)
    for (int64_t c = 0; c < out.cols(); ++c)
      out.at(r, c) = act_apply(act, out.at(r, c) + bv.data[static_cast<size_t>(c)]);

  return push(std::move(out), {x, w, b}, [x, w, b, act](Tape& t, Node& n) {
    const Tensor& y = n.value;
    Tensor delta({y.rows(), y.cols()});
    for (size_t i = 0; i < y.data.size(); ++i)
      delta.data[i] = n.grad.data[i] * act_deriv_from_out(act, y.data[i]);
    if (t.nodes_[x].needs_grad)
      as_mat_mut(t.grad_buf(x)).noalias() += as_mat(delta) * as_mat(t.nodes_[w].value).transpose();
    if (t.nodes_[w].needs_grad)
      as_mat_mut(t.grad_buf(w)).noalias() += as_mat(t.nodes_[x].value).transpose() * as_mat(delta);
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_buf(b);
      for (int64_t r = 0; r < delta.rows(); ++r)
        for (int64_t c = 0; c < delta.cols(); ++c)
          gb.data[static_cast<size_t>(c)] += delta.at(r, c);
    }
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimension mismatch");
  Tensor out({av.rows(), bv.cols()});
  as_mat_mut(out).noalias() = as_mat(av) * as_mat(bv);
  return push(std::move(out), {a, b}, [a, b](Tape& t, Node& n) {
    if (t.nodes_[a].needs_grad)
      as_mat_mut(t.grad_buf(a)).noalias() += as_mat(n.grad) * as_mat(t.nodes_[b].value).transpose();
    if (t.nodes_[b].needs_grad)
      as_mat_mut(t.grad_buf(b)).noalias() += as_mat(t.nodes_[a].value).transpose() * as_mat(n.grad);
  });
}

Tape::Id Tape::add(Id a, Id b) { return add_scaled(a, b, 1.0); }
Tape::Id Tape::sub(Id a, Id b) { return add_scaled(a, b, -1.0); }

Tape::Id Tape::add_scaled(Id a, Id b, double s) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
  Tensor out(av.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = av.data[i] + s * bv.data[i];
  return push(std::move(out), {a, b}, [a, b, s](Tape& t, Node& n) {
    if (t.nodes_[a].needs_grad) {
      Tensor& ga = t.grad_buf(a);
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += n.grad.data[i];
    }
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_buf(b);
      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += s * n.grad.data[i];
    }
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
  Tensor out(av.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, Node& n) {
    const Tensor& av = t.nodes_[a].value;
    const Tensor& bv = t.nodes_[b].value;
    if (t.nodes_[a].needs_grad) {
      Tensor& ga = t.grad_buf(a);
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += n.grad.data[i] * bv.data[i];
    }
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_buf(b);
      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += n.grad.data[i] * av.data[i];
    }
  });
}

Tape::Id Tape::scale(Id a, double s) {
  Tensor out(nodes_[a].value.shape);
  const Tensor& av = nodes_[a].value;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * av.data[i];
  return push(std::move(out), {a}, [a, s](Tape& t, Node& n) {
    if (!t.nodes_[a].needs_grad) return;
    Tensor& ga = t.grad_buf(a);
    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * n.grad.data[i];
  });
}

Tape::Id Tape::tanh_(Id x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::tanh(xv.data[i]);
  return push(std::move(out), {x}, [x](Tape& t, Node& n) {
    if (!t.nodes_[x].needs_grad) return;
    Tensor& gx = t.grad_buf(x);
    for (size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += n.grad.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
  });
}

Tape::Id Tape::sigmoid_(Id x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = 1.0 / (1.0 + std::exp(-xv.data[i]));
  return push(std::move(out), {x}, [x](Tape& t, Node& n) {
    if (!t.nodes_[x].needs_grad) return;
    Tensor& gx = t.grad_buf(x);
    for (size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += n.grad.data[i] * n.value.data[i] * (1.0 - n.value.data[i]);
  });
}

Tape::Id Tape::square(Id x) {
  const Tensor& xv = nodes_[x].value;
  Tensor out(xv.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] * xv.data[i];
  return push(std::move(out), {x}, [x](Tape& t, Node& n) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& xv = t.nodes_[x].value;
    Tensor& gx = t.grad_buf(x);
    for (size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += 2.0 * xv.data[i] * n.grad.data[i];
  });
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row mismatch");
  int64_t ca = av.cols(), cb = bv.cols();
  Tensor out({av.rows(), ca + cb});
  for (int64_t r = 0; r < av.rows(); ++r) {
    for (int64_t c = 0; c < ca; ++c) out.at(r, c) = av.at(r, c);
    for (int64_t c = 0; c < cb; ++c) out.at(r, ca + c) = bv.at(r, c);
  }
  return push(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, Node& n) {
    if (t.nodes_[a].needs_grad) {
      Tensor& ga = t.grad_buf(a);
      for (int64_t r = 0; r < ga.rows(); ++r)
        for (int64_t c = 0; c < ca; ++c) ga.at(r, c) += n.grad.at(r, c);
    }
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_buf(b);
      for (int64_t r = 0; r < gb.rows(); ++r)
        for (int64_t c = 0; c < cb; ++c) gb.at(r, c) += n.grad.at(r, ca + c);
    }
  });
}

Tape::Id Tape::sum_all(Id x) {
  const Tensor& xv = nodes_[x].value;
  double s = 0.0;
  for (double v : xv.data) s += v;
  Tensor out({1, 1});
  out.data[0] = s;
  return push(std::move(out), {x}, [x](Tape& t, Node& n) {
    if (!t.nodes_[x].needs_grad) return;
    Tensor& gx = t.grad_buf(x);
    for (double& g : gx.data) g += n.grad.data[0];
  });
}

Tape::Id Tape::mean_all(Id x) {
  Id s = sum_all(x);
  return scale(s, 1.0 / static_cast<double>(nodes_[x].value.size()));
}

Tape::Id Tape::compress_pairs(Id x, double power, double eps) {
  const Tensor& xv = nodes_[x].value;
  if (xv.cols() % 2 != 0) throw ShapeError("compress_pairs: odd column count");
  Tensor out(xv.shape);
  for (int64_t r = 0; r < xv.rows(); ++r) {
    for (int64_t c = 0; c < xv.cols(); c += 2) {
      double a = xv.at(r, c), b = xv.at(r, c + 1);
      double f = std::pow(a * a + b * b + eps, 0.5 * (power - 1.0));
      out.at(r, c) = f * a;
      out.at(r, c + 1) = f * b;
    }
  }
  return push(std::move(out), {x}, [x, power, eps](Tape& t, Node& n) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& xv = t.nodes_[x].value;
    Tensor& gx = t.grad_buf(x);
    for (int64_t r = 0; r < xv.rows(); ++r) {
      for (int64_t c = 0; c < xv.cols(); c += 2) {
        double a = xv.at(r, c), b = xv.at(r, c + 1);
        double m2 = a * a + b * b + eps;
        double f = std::pow(m2, 0.5 * (power - 1.0));
        double fp = (power - 1.0) * std::pow(m2, 0.5 * (power - 3.0));
        double ga = n.grad.at(r, c), gb = n.grad.at(r, c + 1);
        double dot = a * ga + b * gb;
        gx.at(r, c) += f * ga + fp * a * dot;
        gx.at(r, c + 1) += f * gb + fp * b * dot;
      }
    }
  });
}

Tape::Id Tape::magnitude_pow(Id x, double power, double eps) {
  const Tensor& xv = nodes_[x].value;
  if (xv.cols() % 2 != 0) throw ShapeError("magnitude_pow: odd column count");
  Tensor out({xv.rows(), xv.cols() / 2});
  for (int64_t r = 0; r < xv.rows(); ++r) {
    for (int64_t c = 0; c < xv.cols(); c += 2) {
      double a = xv.at(r, c), b = xv.at(r, c + 1);
      out.at(r, c / 2) = std::pow(a * a + b * b + eps, 0.5 * power);
    }
  }
  return push(std::move(out), {x}, [x, power, eps](Tape& t, Node& n) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& xv = t.nodes_[x].value;
    Tensor& gx = t.grad_buf(x);
    for (int64_t r = 0; r < xv.rows(); ++r) {
      for (int64_t c = 0; c < xv.cols(); c += 2) {
        double a = xv.at(r, c), b = xv.at(r, c + 1);
        double g = n.grad.at(r, c / 2);
        double coef = power * std::pow(a * a + b * b + eps, 0.5 * power - 1.0);
        gx.at(r, c) += g * coef * a;
        gx.at(r, c + 1) += g * coef * b;
      }
    }
  });
}

Tape::Id Tape::custom(std::shared_ptr<CustomOp> op, const std::vector<Id>& inputs) {
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  for (Id i : inputs) in.push_back(&nodes_[i].value);
  Tensor out = op->forward(in);
  std::vector<Id> parents(inputs.begin(), inputs.end());
  return push(std::move(out), parents, [op, inputs](Tape& t, Node& n) {
    std::vector<const Tensor*> in;
    std::vector<Tensor*> gin;
    in.reserve(inputs.size());
    gin.reserve(inputs.size());
    for (Id i : inputs) {
      in.push_back(&t.nodes_[i].value);
      gin.push_back(t.nodes_[i].needs_grad ? &t.grad_buf(i) : nullptr);
    }
    op->backward(in, n.value, n.grad, gin);
  });
}

void Tape::backward(Id loss, double loss_scale) {
  if (loss < 0 || loss >= static_cast<Id>(nodes_.size()))
    throw InvalidArgument("backward: bad node id");
  if (nodes_[loss].value.size() != 1)
    throw InvalidArgument("backward: loss must be scalar");
  grad_buf(loss).data[0] += loss_scale;
  for (Id id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.data.empty()) continue;
    if (check_finite) assert_finite(n.grad, "gradient");
    if (n.back) n.back(*this, n);
    if (n.param && n.param->trainable) {
      Tensor& pg = n.param->grad;
      for (size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += n.grad.data[i];
    }
  }
}

void Adam::step(const std::vector<ParamPtr>& params) {
  ++step_count_;
  double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (const ParamPtr& p : params) {
    if (!p->trainable) continue;
    if (p->adam_m.data.empty()) {
      p->adam_m = Tensor(p->value.shape);
      p->adam_v = Tensor(p->value.shape);
    }
    if (!p->grad.same_shape(p->value))
      throw ShapeError("adam: grad/value shape mismatch for " + p->name);
    for (size_t i = 0; i < p->value.data.size(); ++i) {
      double g = p->grad.data[i];
      double& m = p->adam_m.data[i];
      double& v = p->adam_v.data[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      double mhat = m / c1;
      double vhat = v / c2;
      p->value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

GradCheckReport grad_check(const std::function<double(bool want_grad)>& eval,
                           const std::vector<ParamPtr>& params, double step) {
  if (!(step > 0.0)) throw InvalidArgument("grad_check: step must be > 0");
  for (const ParamPtr& p : params) p->zero_grad();
  eval(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const ParamPtr& p : params) analytic.push_back(p->grad);

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      double saved = p.value.data[i];
      p.value.data[i] = saved + step;
      double fp = eval(false);
      p.value.data[i] = saved - step;
      double fm = eval(false);
      p.value.data[i] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[pi].data[i];
      double rel = std::fabs(a - numeric) /
                   std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = static_cast<int64_t>(i);
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace beamkit::nn
