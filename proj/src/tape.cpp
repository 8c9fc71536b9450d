#include "modnet/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace modnet::ad {

namespace {

void check_finite(const char* op, const Tensor& t) {
  if (!t.data.allFinite())
    throw std::runtime_error(std::string("non-finite values produced by op '") + op + "'");
}

void require_same_tape(const char* op, Value a, Value b) {
  if (a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands belong to different tapes");
}

[[noreturn]] void shape_error(const char* op, const std::vector<int>& a,
                              const std::vector<int>& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                              shape_str(b));
}

}  // namespace

int Tape::append(Node node) {
  check_finite(node.op, node.value);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::input(Tensor t) {
  Node n;
  n.op = "input";
  n.value = std::move(t);
  return {this, append(std::move(n))};
}

Value Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.bound = &p;
  return {this, append(std::move(n))};
}

const Tensor& Tape::value(Value v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("value handle does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Tape::backward(Value loss, bool release_buffers) {
  backward_impl(loss, nullptr, release_buffers);
}

void Tape::backward(Value loss, std::vector<Tensor>& sink, bool release_buffers) {
  backward_impl(loss, &sink, release_buffers);
}

void Tape::backward_impl(Value loss, std::vector<Tensor>* sink, bool release_buffers) {
  if (loss.tape != this) throw std::invalid_argument("loss does not belong to this tape");
  const Node& ln = node(loss.id);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(ln.value.shape));
  grad_buffer(loss.id).data.setConstant(1.0);

  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.grad.empty() && n.requires_grad) {
      if (n.bound != nullptr) {
        if (sink != nullptr) {
          if (n.bound->index < 0)
            throw std::logic_error("sharded backward requires registered parameters");
          auto idx = static_cast<std::size_t>(n.bound->index);
          if (sink->size() <= idx) sink->resize(idx + 1);
          Tensor& slot = (*sink)[idx];
          if (slot.empty()) slot = Tensor::zeros(n.value.shape);
          slot.data += n.grad.data;
        } else {
          n.bound->grad.data += n.grad.data;
        }
      } else if (n.backprop) {
        n.backprop(*this, n);
      }
    }
    if (release_buffers) {
      n.value.release();
      n.grad.release();
      n.backprop = nullptr;
    }
  }
}

void Tape::apply_bn_updates() {
  for (const PendingBnUpdate& u : pending_bn_updates) {
    const double m = u.layer->momentum;
    u.layer->running_mean.data = (1.0 - m) * u.layer->running_mean.data + m * u.mean;
    u.layer->running_var.data = (1.0 - m) * u.layer->running_var.data + m * u.var;
  }
  pending_bn_updates.clear();
}

namespace {

Value make_unary(const char* op, Value x, Tensor value,
                 std::function<void(Tape&, Tape::Node&)> backprop) {
  Tape::Node n;
  n.op = op;
  n.value = std::move(value);
  n.requires_grad = x.tape->node(x.id).requires_grad;
  if (n.requires_grad) n.backprop = std::move(backprop);
  return {x.tape, x.tape->append(std::move(n))};
}

}  // namespace

Value linear(Value x, Parameter& weight, Parameter& bias) {
  Tape& tape = *x.tape;
  {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 2 || weight.value.rank() != 2 || bias.value.rank() != 1 ||
        xv.dim(1) != weight.value.dim(0) || bias.value.dim(0) != weight.value.dim(1))
      throw std::invalid_argument("linear: incompatible shapes x" + shape_str(xv.shape) + " W" +
                                  shape_str(weight.value.shape) + " b" +
                                  shape_str(bias.value.shape));
  }
  // Append the parameter leaves before taking any reference into the tape:
  // appending can reallocate the node storage.
  const Value w = tape.param(weight);
  const Value b = tape.param(bias);
  const Tensor& xv = tape.value(x);
  const int rows = xv.dim(0), in = xv.dim(1), out = weight.value.dim(1);

  Tensor y = Tensor::zeros({rows, out});
  y.matrix(rows, out).noalias() = xv.matrix(rows, in) * tape.value(w).matrix(in, out);
  y.matrix(rows, out).rowwise() += tape.value(b).data.matrix().transpose();

  Tape::Node n;
  n.op = "linear";
  n.value = std::move(y);
  n.requires_grad = tape.node(x.id).requires_grad || tape.node(w.id).requires_grad ||
                    tape.node(b.id).requires_grad;
  const int xid = x.id, wid = w.id, bid = b.id;
  n.backprop = [xid, wid, bid, rows, in, out](Tape& t, Tape::Node& self) {
    const auto gy = self.grad.matrix(rows, out);
    if (t.node(xid).requires_grad)
      t.grad_buffer(xid).matrix(rows, in).noalias() +=
          gy * t.node(wid).value.matrix(in, out).transpose();
    if (t.node(wid).requires_grad)
      t.grad_buffer(wid).matrix(in, out).noalias() +=
          t.node(xid).value.matrix(rows, in).transpose() * gy;
    if (t.node(bid).requires_grad)
      t.grad_buffer(bid).data.matrix() += gy.colwise().sum().transpose();
  };
  return {&tape, tape.append(std::move(n))};
}

Value batchnorm(Value x, BatchNorm& bn) {
  Tape& tape = *x.tape;
  {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 2)
      throw std::invalid_argument("batchnorm: expected a rank-2 input, got " +
                                  shape_str(xv.shape));
    if (bn.gamma.value.dim(0) != xv.dim(1)) shape_error("batchnorm", xv.shape, bn.gamma.value.shape);
  }
  // Parameter leaves first; appending may reallocate node storage.
  const Value g = tape.param(bn.gamma);
  const Value b = tape.param(bn.beta);
  const Tensor& xv = tape.value(x);
  const int rows = xv.dim(0), feat = xv.dim(1);
  const auto xm = xv.matrix(rows, feat);

  Eigen::ArrayXd mean(feat), ivar(feat);
  Tensor xhat = Tensor::zeros({rows, feat});
  if (tape.mode() == Mode::kTrain) {
    if (rows < 2)
      throw std::invalid_argument("batchnorm: train mode requires batch size >= 2, got 1");
    mean = xm.colwise().mean().transpose().array();
    Eigen::ArrayXd var =
        (xm.rowwise() - mean.matrix().transpose()).array().square().colwise().sum().transpose() /
        static_cast<double>(rows);
    ivar = (var + bn.eps).rsqrt();
    tape.pending_bn_updates.push_back({&bn, mean, var});
  } else {
    mean = bn.running_mean.data;
    ivar = (bn.running_var.data + bn.eps).rsqrt();
  }
  xhat.matrix(rows, feat) =
      (xm.rowwise() - mean.matrix().transpose()).array().rowwise() *
      ivar.matrix().transpose().array();

  Tensor y = Tensor::zeros({rows, feat});
  y.matrix(rows, feat) = (xhat.matrix(rows, feat).array().rowwise() *
                          tape.value(g).data.matrix().transpose().array())
                             .rowwise() +
                         tape.value(b).data.matrix().transpose().array();

  Tape::Node n;
  n.op = "batchnorm";
  n.value = std::move(y);
  n.requires_grad = tape.node(x.id).requires_grad || tape.node(g.id).requires_grad ||
                    tape.node(b.id).requires_grad;
  const int xid = x.id, gid = g.id, bid = b.id;
  const bool train = tape.mode() == Mode::kTrain;
  n.backprop = [xid, gid, bid, rows, feat, train, xhat = std::move(xhat),
                ivar = std::move(ivar)](Tape& t, Tape::Node& self) {
    const auto gy = self.grad.matrix(rows, feat);
    const auto xh = xhat.matrix(rows, feat);
    if (t.node(gid).requires_grad)
      t.grad_buffer(gid).data.matrix() += (gy.array() * xh.array()).colwise().sum().matrix().transpose();
    if (t.node(bid).requires_grad)
      t.grad_buffer(bid).data.matrix() += gy.colwise().sum().transpose();
    if (!t.node(xid).requires_grad) return;
    const auto gamma = t.node(gid).value.data;
    auto gx = t.grad_buffer(xid).matrix(rows, feat);
    if (train) {
      // Standard batch-norm gradient: couples every row through the batch
      // mean and variance.
      const RowMatX dxhat = gy.array().rowwise() * gamma.matrix().transpose().array();
      const Eigen::ArrayXd s1 = dxhat.colwise().sum().transpose().array();
      const Eigen::ArrayXd s2 =
          (dxhat.array() * xh.array()).colwise().sum().transpose();
      const double inv_rows = 1.0 / static_cast<double>(rows);
      gx.array() += ((dxhat.array().rowwise() -
                      (s1 * inv_rows).matrix().transpose().array()) -
                     xh.array().rowwise() * (s2 * inv_rows).matrix().transpose().array())
                        .rowwise() *
                    ivar.matrix().transpose().array();
    } else {
      gx.array() += gy.array().rowwise() * (gamma * ivar).matrix().transpose().array();
    }
  };
  return {&tape, tape.append(std::move(n))};
}

Value relu(Value x) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape, xv.data.max(0.0));
  const int xid = x.id;
  return make_unary("relu", x, std::move(y), [xid](Tape& t, Tape::Node& self) {
    // Subgradient at exactly 0 is 0.
    t.grad_buffer(xid).data +=
        self.grad.data * (t.node(xid).value.data > 0.0).cast<double>();
  });
}

Value sigmoid(Value x) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape, 1.0 / (1.0 + (-xv.data).exp()));
  const int xid = x.id;
  return make_unary("sigmoid", x, std::move(y), [xid](Tape& t, Tape::Node& self) {
    t.grad_buffer(xid).data += self.grad.data * self.value.data * (1.0 - self.value.data);
  });
}

Value tanh_(Value x) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape, xv.data.tanh());
  const int xid = x.id;
  return make_unary("tanh", x, std::move(y), [xid](Tape& t, Tape::Node& self) {
    t.grad_buffer(xid).data += self.grad.data * (1.0 - self.value.data.square());
  });
}

Value softmax_axis(Value x, int axis) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  if (axis < 0 || axis >= xv.rank())
    throw std::invalid_argument("softmax_axis: axis " + std::to_string(axis) +
                                " invalid for shape " + shape_str(xv.shape));
  Eigen::Index outer = 1, inner = 1;
  const Eigen::Index len = xv.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (int i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);

  Tensor y = Tensor::zeros(xv.shape);
  for (Eigen::Index o = 0; o < outer; ++o)
    for (Eigen::Index in = 0; in < inner; ++in) {
      const Eigen::Index base = o * len * inner + in;
      double m = xv.data[base];
      for (Eigen::Index l = 1; l < len; ++l) m = std::max(m, xv.data[base + l * inner]);
      double s = 0.0;
      for (Eigen::Index l = 0; l < len; ++l) {
        const double e = std::exp(xv.data[base + l * inner] - m);
        y.data[base + l * inner] = e;
        s += e;
      }
      for (Eigen::Index l = 0; l < len; ++l) y.data[base + l * inner] /= s;
    }

  const int xid = x.id;
  return make_unary("softmax_axis", x, std::move(y),
                    [xid, outer, inner, len](Tape& t, Tape::Node& self) {
                      Tensor& gx = t.grad_buffer(xid);
                      for (Eigen::Index o = 0; o < outer; ++o)
                        for (Eigen::Index in = 0; in < inner; ++in) {
                          const Eigen::Index base = o * len * inner + in;
                          double dot = 0.0;
                          for (Eigen::Index l = 0; l < len; ++l)
                            dot += self.grad.data[base + l * inner] * self.value.data[base + l * inner];
                          for (Eigen::Index l = 0; l < len; ++l)
                            gx.data[base + l * inner] += self.value.data[base + l * inner] *
                                                         (self.grad.data[base + l * inner] - dot);
                        }
                    });
}

Value maxpool_points(Value x) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 3)
    throw std::invalid_argument("maxpool_points: expected [batch,points,feat], got " +
                                shape_str(xv.shape));
  const Eigen::Index batch = xv.dim(0), pts = xv.dim(1), feat = xv.dim(2);
  Tensor y = Tensor::zeros({static_cast<int>(batch), static_cast<int>(feat)});
  std::vector<int> argmax(static_cast<std::size_t>(batch * feat), 0);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index f = 0; f < feat; ++f) {
      double best = xv.data[(b * pts) * feat + f];
      int arg = 0;
      for (Eigen::Index p = 1; p < pts; ++p) {
        const double v = xv.data[(b * pts + p) * feat + f];
        if (v > best) {  // ties keep the lowest point index
          best = v;
          arg = static_cast<int>(p);
        }
      }
      y.data[b * feat + f] = best;
      argmax[static_cast<std::size_t>(b * feat + f)] = arg;
    }

  const int xid = x.id;
  return make_unary("maxpool_points", x, std::move(y),
                    [xid, batch, pts, feat, argmax = std::move(argmax)](Tape& t, Tape::Node& self) {
                      Tensor& gx = t.grad_buffer(xid);
                      for (Eigen::Index b = 0; b < batch; ++b)
                        for (Eigen::Index f = 0; f < feat; ++f) {
                          const int p = argmax[static_cast<std::size_t>(b * feat + f)];
                          gx.data[(b * pts + p) * feat + f] += self.grad.data[b * feat + f];
                        }
                    });
}

Value concat_lastaxis(const std::vector<Value>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_lastaxis: no inputs");
  Tape& tape = *xs.front().tape;
  const Tensor& first = tape.value(xs.front());
  if (first.rank() < 1) throw std::invalid_argument("concat_lastaxis: scalar inputs");
  Eigen::Index total_last = 0;
  for (const Value& v : xs) {
    require_same_tape("concat_lastaxis", xs.front(), v);
    const Tensor& t = tape.value(v);
    if (t.rank() != first.rank()) shape_error("concat_lastaxis", first.shape, t.shape);
    for (int i = 0; i + 1 < first.rank(); ++i)
      if (t.dim(i) != first.dim(i)) shape_error("concat_lastaxis", first.shape, t.shape);
    total_last += t.dim(t.rank() - 1);
  }
  const Eigen::Index rows = first.numel() / first.dim(first.rank() - 1);

  std::vector<int> out_shape = first.shape;
  out_shape.back() = static_cast<int>(total_last);
  Tensor y = Tensor::zeros(out_shape);
  std::vector<int> ids;
  std::vector<Eigen::Index> lens;
  Eigen::Index offset = 0;
  bool needs_grad = false;
  for (const Value& v : xs) {
    const Tensor& t = tape.value(v);
    const Eigen::Index len = t.dim(t.rank() - 1);
    for (Eigen::Index r = 0; r < rows; ++r)
      y.data.segment(r * total_last + offset, len) = t.data.segment(r * len, len);
    ids.push_back(v.id);
    lens.push_back(len);
    offset += len;
    needs_grad = needs_grad || tape.node(v.id).requires_grad;
  }

  Tape::Node n;
  n.op = "concat_lastaxis";
  n.value = std::move(y);
  n.requires_grad = needs_grad;
  n.backprop = [ids, lens, rows, total_last](Tape& t, Tape::Node& self) {
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.node(ids[i]).requires_grad) {
        Tensor& gx = t.grad_buffer(ids[i]);
        for (Eigen::Index r = 0; r < rows; ++r)
          gx.data.segment(r * lens[i], lens[i]) +=
              self.grad.data.segment(r * total_last + offset, lens[i]);
      }
      offset += lens[i];
    }
  };
  return {&tape, tape.append(std::move(n))};
}

namespace {

Value make_binary(const char* op, Value a, Value b, Tensor value,
                  std::function<void(Tape&, Tape::Node&)> backprop) {
  require_same_tape(op, a, b);
  Tape& tape = *a.tape;
  Tape::Node n;
  n.op = op;
  n.value = std::move(value);
  n.requires_grad = tape.node(a.id).requires_grad || tape.node(b.id).requires_grad;
  if (n.requires_grad) n.backprop = std::move(backprop);
  return {&tape, tape.append(std::move(n))};
}

}  // namespace

Value mul(Value a, Value b) {
  require_same_tape("mul", a, b);
  Tape& tape = *a.tape;
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  const int aid = a.id, bid = b.id;

  if (av.shape == bv.shape) {
    Tensor y(av.shape, av.data * bv.data);
    return make_binary("mul", a, b, std::move(y), [aid, bid](Tape& t, Tape::Node& self) {
      if (t.node(aid).requires_grad)
        t.grad_buffer(aid).data += self.grad.data * t.node(bid).value.data;
      if (t.node(bid).requires_grad)
        t.grad_buffer(bid).data += self.grad.data * t.node(aid).value.data;
    });
  }
  // Per-feature broadcast: [B,F] * [F].
  if (av.rank() == 2 && bv.rank() == 1 && av.dim(1) == bv.dim(0)) {
    const Eigen::Index rows = av.dim(0), feat = av.dim(1);
    Tensor y = Tensor::zeros(av.shape);
    y.matrix(rows, feat) =
        av.matrix(rows, feat).array().rowwise() * bv.data.matrix().transpose().array();
    return make_binary("mul", a, b, std::move(y), [aid, bid, rows, feat](Tape& t,
                                                                         Tape::Node& self) {
      const auto gy = self.grad.matrix(rows, feat);
      if (t.node(aid).requires_grad)
        t.grad_buffer(aid).matrix(rows, feat).array() +=
            gy.array().rowwise() * t.node(bid).value.data.matrix().transpose().array();
      if (t.node(bid).requires_grad)
        t.grad_buffer(bid).data.matrix() +=
            (gy.array() * t.node(aid).value.matrix(rows, feat).array())
                .colwise()
                .sum()
                .matrix()
                .transpose();
    });
  }
  shape_error("mul", av.shape, bv.shape);
}

Value add(Value a, Value b) {
  require_same_tape("add", a, b);
  Tape& tape = *a.tape;
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape != bv.shape) shape_error("add", av.shape, bv.shape);
  const int aid = a.id, bid = b.id;
  Tensor y(av.shape, av.data + bv.data);
  return make_binary("add", a, b, std::move(y), [aid, bid](Tape& t, Tape::Node& self) {
    if (t.node(aid).requires_grad) t.grad_buffer(aid).data += self.grad.data;
    if (t.node(bid).requires_grad) t.grad_buffer(bid).data += self.grad.data;
  });
}

Value sub(Value a, Value b) {
  require_same_tape("sub", a, b);
  Tape& tape = *a.tape;
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape != bv.shape) shape_error("sub", av.shape, bv.shape);
  const int aid = a.id, bid = b.id;
  Tensor y(av.shape, av.data - bv.data);
  return make_binary("sub", a, b, std::move(y), [aid, bid](Tape& t, Tape::Node& self) {
    if (t.node(aid).requires_grad) t.grad_buffer(aid).data += self.grad.data;
    if (t.node(bid).requires_grad) t.grad_buffer(bid).data -= self.grad.data;
  });
}

Value div(Value a, Value b) {
  require_same_tape("div", a, b);
  Tape& tape = *a.tape;
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape != bv.shape) shape_error("div", av.shape, bv.shape);
  const int aid = a.id, bid = b.id;
  Tensor y(av.shape, av.data / bv.data);
  return make_binary("div", a, b, std::move(y), [aid, bid](Tape& t, Tape::Node& self) {
    const auto& bd = t.node(bid).value.data;
    if (t.node(aid).requires_grad) t.grad_buffer(aid).data += self.grad.data / bd;
    if (t.node(bid).requires_grad)
      t.grad_buffer(bid).data -= self.grad.data * self.value.data / bd;
  });
}

Value scale(Value a, double c) {
  const Tensor& av = a.tape->value(a);
  Tensor y(av.shape, av.data * c);
  const int aid = a.id;
  return make_unary("scale", a, std::move(y), [aid, c](Tape& t, Tape::Node& self) {
    t.grad_buffer(aid).data += self.grad.data * c;
  });
}

Value exp_(Value a) {
  const Tensor& av = a.tape->value(a);
  Tensor y(av.shape, av.data.exp());
  const int aid = a.id;
  return make_unary("exp", a, std::move(y), [aid](Tape& t, Tape::Node& self) {
    t.grad_buffer(aid).data += self.grad.data * self.value.data;
  });
}

Value abs_(Value a) {
  const Tensor& av = a.tape->value(a);
  Tensor y(av.shape, av.data.abs());
  const int aid = a.id;
  return make_unary("abs", a, std::move(y), [aid](Tape& t, Tape::Node& self) {
    // Subgradient 0 at the kink.
    t.grad_buffer(aid).data += self.grad.data * t.node(aid).value.data.sign();
  });
}

Value sqrt_(Value a) {
  const Tensor& av = a.tape->value(a);
  if ((av.data < 0.0).any()) throw std::invalid_argument("sqrt: negative input");
  Tensor y(av.shape, av.data.sqrt());
  const int aid = a.id;
  return make_unary("sqrt", a, std::move(y), [aid](Tape& t, Tape::Node& self) {
    // Subgradient 0 at x = 0 keeps repulsion terms finite when the displaced
    // point coincides with a ground-truth sample.
    t.grad_buffer(aid).data +=
        (self.value.data > 0.0).select(self.grad.data * 0.5 / self.value.data, 0.0);
  });
}

Value sum(Value a) {
  const Tensor& av = a.tape->value(a);
  Tensor y = Tensor::scalar(av.data.sum());
  const int aid = a.id;
  return make_unary("sum", a, std::move(y), [aid](Tape& t, Tape::Node& self) {
    t.grad_buffer(aid).data += self.grad.data[0];
  });
}

Value sum_lastaxis(Value a) {
  const Tensor& av = a.tape->value(a);
  if (av.rank() < 1) throw std::invalid_argument("sum_lastaxis: scalar input");
  const Eigen::Index len = av.dim(av.rank() - 1);
  const Eigen::Index rows = av.numel() / len;
  std::vector<int> out_shape(av.shape.begin(), av.shape.end() - 1);
  Tensor y = Tensor::zeros(out_shape);
  for (Eigen::Index r = 0; r < rows; ++r) y.data[r] = av.data.segment(r * len, len).sum();
  const int aid = a.id;
  return make_unary("sum_lastaxis", a, std::move(y), [aid, rows, len](Tape& t, Tape::Node& self) {
    Tensor& gx = t.grad_buffer(aid);
    for (Eigen::Index r = 0; r < rows; ++r) gx.data.segment(r * len, len) += self.grad.data[r];
  });
}

Value reduce_max(Value a) {
  const Tensor& av = a.tape->value(a);
  Eigen::Index arg = 0;
  double best = av.data[0];
  for (Eigen::Index i = 1; i < av.numel(); ++i)
    if (av.data[i] > best) {  // ties keep the lowest index
      best = av.data[i];
      arg = i;
    }
  Tensor y = Tensor::scalar(best);
  const int aid = a.id;
  return make_unary("reduce_max", a, std::move(y), [aid, arg](Tape& t, Tape::Node& self) {
    t.grad_buffer(aid).data[arg] += self.grad.data[0];
  });
}

Value reshape(Value a, std::vector<int> shape) {
  const Tensor& av = a.tape->value(a);
  if (shape_numel(shape) != av.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(av.shape) + " as " +
                                shape_str(shape));
  Tensor y(std::move(shape), av.data);
  const int aid = a.id;
  return make_unary("reshape", a, std::move(y), [aid](Tape& t, Tape::Node& self) {
    t.grad_buffer(aid).data += self.grad.data;
  });
}

Value row(Value a, int i) {
  const Tensor& av = a.tape->value(a);
  if (av.rank() != 2) throw std::invalid_argument("row: expected a rank-2 input");
  if (i < 0 || i >= av.dim(0)) throw std::out_of_range("row: index out of range");
  const Eigen::Index cols = av.dim(1);
  Tensor y({av.shape[1]}, av.data.segment(static_cast<Eigen::Index>(i) * cols, cols));
  const int aid = a.id;
  return make_unary("row", a, std::move(y), [aid, i, cols](Tape& t, Tape::Node& self) {
    t.grad_buffer(aid).data.segment(static_cast<Eigen::Index>(i) * cols, cols) += self.grad.data;
  });
}

Value broadcast_rows(Value v, int rows) {
  const Tensor& vv = v.tape->value(v);
  if (vv.rank() != 1) throw std::invalid_argument("broadcast_rows: expected a rank-1 input");
  if (rows < 1) throw std::invalid_argument("broadcast_rows: row count must be positive");
  const Eigen::Index cols = vv.dim(0);
  Tensor y = Tensor::zeros({rows, static_cast<int>(cols)});
  for (Eigen::Index r = 0; r < rows; ++r) y.data.segment(r * cols, cols) = vv.data;
  const int vid = v.id;
  return make_unary("broadcast_rows", v, std::move(y), [vid, rows, cols](Tape& t,
                                                                         Tape::Node& self) {
    Tensor& gv = t.grad_buffer(vid);
    for (Eigen::Index r = 0; r < rows; ++r) gv.data += self.grad.data.segment(r * cols, cols);
  });
}

Value select_lastaxis(Value a, int k) {
  const Tensor& av = a.tape->value(a);
  if (av.rank() < 1) throw std::invalid_argument("select_lastaxis: scalar input");
  const Eigen::Index len = av.dim(av.rank() - 1);
  if (k < 0 || k >= len) throw std::out_of_range("select_lastaxis: index out of range");
  const Eigen::Index rows = av.numel() / len;
  std::vector<int> out_shape(av.shape.begin(), av.shape.end() - 1);
  Tensor y = Tensor::zeros(out_shape);
  for (Eigen::Index r = 0; r < rows; ++r) y.data[r] = av.data[r * len + k];
  const int aid = a.id;
  return make_unary("select_lastaxis", a, std::move(y),
                    [aid, rows, len, k](Tape& t, Tape::Node& self) {
                      Tensor& gx = t.grad_buffer(aid);
                      for (Eigen::Index r = 0; r < rows; ++r)
                        gx.data[r * len + k] += self.grad.data[r];
                    });
}

void sgd_step(const std::vector<Parameter*>& params, double lr) {
  if (lr < 0.0) throw std::invalid_argument("learning rate must be nonnegative");
  for (Parameter* p : params) {
    if (p->trainable && lr != 0.0) p->value.data -= lr * p->grad.data;
    p->grad.data.setZero();
  }
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->grad.data.setZero();
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.data.square().sum();
  return std::sqrt(sq);
}

void clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params) p->grad.data *= s;
  }
}

}  // namespace modnet::ad
