#include "modnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "modnet/loss.hpp"
#include "modnet/model.hpp"
#include "modnet/rng.hpp"

namespace modnet {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Value;

double finite_diff_max_rel_err(const std::vector<Parameter*>& params,
                               const std::function<double(bool)>& run, int coords_per_tensor,
                               double h, Rng& rng) {
  ad::zero_grads(params);
  run(true);
  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad.data);
  ad::zero_grads(params);

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const Eigen::Index n = p.value.numel();
    std::vector<Eigen::Index> coords;
    if (n <= coords_per_tensor) {
      for (Eigen::Index i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < coords_per_tensor; ++i)
        coords.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    }
    for (Eigen::Index c : coords) {
      const double saved = p.value.data[c];
      p.value.data[c] = saved + h;
      const double fp = run(false);
      p.value.data[c] = saved - h;
      const double fm = run(false);
      p.value.data[c] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[pi][c] - numeric) / std::max(1.0, std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

namespace {

constexpr double kH = 1e-5;

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.data[i] = rng.uniform(lo, hi);
  return t;
}

// Keeps sampled values away from non-differentiable points (relu/abs kinks).
Tensor random_tensor_off_kink(std::vector<int> shape, Rng& rng, double margin = 2e-3) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (Eigen::Index i = 0; i < t.numel(); ++i)
    while (std::abs(t.data[i]) < margin) t.data[i] = rng.uniform(-2.0, 2.0);
  return t;
}

// Scalar projection of an op output so every coefficient contributes.
double project(Tape& tape, Value y, const Tensor& weights, bool with_grad) {
  Value loss = ad::sum(ad::mul(y, tape.input(weights)));
  const double v = tape.value(loss).scalar_value();
  if (with_grad) tape.backward(loss);
  return v;
}

struct OpCheck {
  const char* name;
  double tolerance;
  // Returns max rel err for one random trial.
  std::function<double(Rng&)> trial;
};

double unary_trial(Rng& rng, const std::function<Value(Value)>& op, Tensor x_init,
                   int coords = 12) {
  auto x = std::make_shared<Parameter>("x", std::move(x_init));
  auto w = std::make_shared<Tensor>(random_tensor(x->value.shape, rng));
  std::vector<Parameter*> params{x.get()};
  auto run = [x, w, op, params](bool grad) {
    Tape tape(ad::Mode::kTrain);
    return project(tape, op(tape.param(*x)), *w, grad);
  };
  // The projection weight tensor must match the op output shape; recompute
  // for shape-changing ops.
  {
    Tape tape(ad::Mode::kTrain);
    Value y = op(tape.param(*x));
    *w = random_tensor(tape.value(y).shape, rng);
  }
  return finite_diff_max_rel_err(params, run, coords, kH, rng);
}

std::vector<int> random_shape(Rng& rng, int max_rank = 3, int max_dim = 5) {
  const int rank = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rank)));
  std::vector<int> shape;
  for (int i = 0; i < rank; ++i)
    shape.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_dim))));
  return shape;
}

double linear_trial(Rng& rng) {
  const int b = 1 + static_cast<int>(rng.below(5));
  const int in = 1 + static_cast<int>(rng.below(6));
  const int out = 1 + static_cast<int>(rng.below(6));
  auto x = std::make_shared<Parameter>("x", random_tensor({b, in}, rng));
  auto wp = std::make_shared<Parameter>("W", random_tensor({in, out}, rng));
  auto bp = std::make_shared<Parameter>("b", random_tensor({out}, rng));
  auto c = std::make_shared<Tensor>(random_tensor({b, out}, rng));
  std::vector<Parameter*> params{x.get(), wp.get(), bp.get()};
  auto run = [=](bool grad) {
    Tape tape(ad::Mode::kTrain);
    return project(tape, ad::linear(tape.param(*x), *wp, *bp), *c, grad);
  };
  return finite_diff_max_rel_err(params, run, 12, kH, rng);
}

double batchnorm_trial(Rng& rng) {
  const int b = 2 + static_cast<int>(rng.below(5));
  const int f = 1 + static_cast<int>(rng.below(5));
  auto x = std::make_shared<Parameter>("x", random_tensor({b, f}, rng));
  auto bn = std::make_shared<ad::BatchNorm>("bn", f);
  bn->gamma.value = random_tensor({f}, rng, 0.2, 1.5);
  bn->beta.value = random_tensor({f}, rng);
  auto c = std::make_shared<Tensor>(random_tensor({b, f}, rng));
  std::vector<Parameter*> params{x.get(), &bn->gamma, &bn->beta};
  auto run = [=](bool grad) {
    Tape tape(ad::Mode::kTrain);
    return project(tape, ad::batchnorm(tape.param(*x), *bn), *c, grad);
  };
  return finite_diff_max_rel_err(params, run, 12, kH, rng);
}

double maxpool_trial(Rng& rng) {
  const int b = 1 + static_cast<int>(rng.below(3));
  const int p = 2 + static_cast<int>(rng.below(5));
  const int f = 1 + static_cast<int>(rng.below(4));
  // Separate the per-feature top two values so the argmax is stable under
  // the finite-difference step.
  Tensor x = random_tensor({b, p, f}, rng);
  for (int bb = 0; bb < b; ++bb)
    for (int ff = 0; ff < f; ++ff) {
      int arg = 0;
      double best = x.data[(bb * p) * f + ff];
      for (int pp = 1; pp < p; ++pp)
        if (x.data[(bb * p + pp) * f + ff] > best) {
          best = x.data[(bb * p + pp) * f + ff];
          arg = pp;
        }
      x.data[(bb * p + arg) * f + ff] = best + 0.1;
    }
  return unary_trial(rng, [](Value v) { return ad::maxpool_points(v); }, std::move(x));
}

double concat_trial(Rng& rng) {
  const int b = 1 + static_cast<int>(rng.below(4));
  auto x0 = std::make_shared<Parameter>("x0", random_tensor({b, 1 + (int)rng.below(4)}, rng));
  auto x1 = std::make_shared<Parameter>("x1", random_tensor({b, 1 + (int)rng.below(4)}, rng));
  auto x2 = std::make_shared<Parameter>("x2", random_tensor({b, 1 + (int)rng.below(4)}, rng));
  const int total = x0->value.dim(1) + x1->value.dim(1) + x2->value.dim(1);
  auto c = std::make_shared<Tensor>(random_tensor({b, total}, rng));
  std::vector<Parameter*> params{x0.get(), x1.get(), x2.get()};
  auto run = [=](bool grad) {
    Tape tape(ad::Mode::kTrain);
    Value y = ad::concat_lastaxis({tape.param(*x0), tape.param(*x1), tape.param(*x2)});
    return project(tape, y, *c, grad);
  };
  return finite_diff_max_rel_err(params, run, 12, kH, rng);
}

double mul_trial(Rng& rng, bool broadcast) {
  const int b = 1 + static_cast<int>(rng.below(4));
  const int f = 1 + static_cast<int>(rng.below(5));
  auto a = std::make_shared<Parameter>("a", random_tensor({b, f}, rng));
  auto v = std::make_shared<Parameter>(
      "v", broadcast ? random_tensor({f}, rng) : random_tensor({b, f}, rng));
  auto c = std::make_shared<Tensor>(random_tensor({b, f}, rng));
  std::vector<Parameter*> params{a.get(), v.get()};
  auto run = [=](bool grad) {
    Tape tape(ad::Mode::kTrain);
    return project(tape, ad::mul(tape.param(*a), tape.param(*v)), *c, grad);
  };
  return finite_diff_max_rel_err(params, run, 12, kH, rng);
}

double binary_trial(Rng& rng, const std::function<Value(Value, Value)>& op, bool safe_denom) {
  auto shape = random_shape(rng);
  auto a = std::make_shared<Parameter>("a", random_tensor(shape, rng));
  Tensor bt = random_tensor(shape, rng);
  if (safe_denom)
    for (Eigen::Index i = 0; i < bt.numel(); ++i)
      while (std::abs(bt.data[i]) < 0.4) bt.data[i] = rng.uniform(-2.0, 2.0);
  auto b = std::make_shared<Parameter>("b", std::move(bt));
  auto c = std::make_shared<Tensor>(random_tensor(shape, rng));
  std::vector<Parameter*> params{a.get(), b.get()};
  auto run = [=](bool grad) {
    Tape tape(ad::Mode::kTrain);
    return project(tape, op(tape.param(*a), tape.param(*b)), *c, grad);
  };
  return finite_diff_max_rel_err(params, run, 12, kH, rng);
}

// End-to-end: full architecture at reduced widths, full loss, train mode.
double end_to_end_trial(Rng& rng) {
  ModelConfig config;
  config.encoder_widths = {8, 12, 16, 24};
  config.mspm_hidden = 24;
  config.weight_hidden = 16;
  config.decoder_widths = {16, 12};

  const int batch = 2 + static_cast<int>(rng.below(3));  // <= 4
  const int n_patch = 24;
  ModNetParams params(config, rng.next_u64());

  std::array<Tensor, 3> patches;
  for (auto& p : patches) p = random_tensor({batch, n_patch, 3}, rng, -1.0, 1.0);

  auto make_gt = [&](int m) {
    GroundTruthPatch gt;
    gt.m = m;
    for (int j = 0; j < m; ++j) {
      gt.gt_points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      Vec3 n(rng.normal(), rng.normal(), rng.normal());
      gt.gt_normals.push_back(n.normalized());
    }
    Vec3 lo = gt.gt_points.front(), hi = lo;
    for (const Vec3& p : gt.gt_points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    gt.dobb = std::max((hi - lo).norm(), 0.3);
    return gt;
  };
  std::vector<std::array<GroundTruthPatch, 3>> gt_scales;
  std::vector<GroundTruthPatch> gt_final;
  for (int b = 0; b < batch; ++b) {
    gt_scales.push_back({make_gt(4 + (int)rng.below(6)), make_gt(4 + (int)rng.below(6)),
                         make_gt(4 + (int)rng.below(6))});
    gt_final.push_back(make_gt(6 + (int)rng.below(6)));
  }

  LossConfig loss_cfg;
  auto run = [&](bool grad) {
    Tape tape(ad::Mode::kTrain);
    std::array<Value, 3> pv;
    for (int k = 0; k < 3; ++k) pv[k] = tape.input(patches[k]);
    const ForwardValues fwd = modnet_forward(tape, pv, params);
    const BatchLoss loss = total_loss(fwd, gt_scales, gt_final, loss_cfg);
    const double v = loss.breakdown.l_total;
    if (grad) tape.backward(loss.total);
    return v;
  };
  return finite_diff_max_rel_err(params.params(), run, 20, kH, rng);
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, int trials_per_op, int e2e_batches) {
  GradCheckReport report;
  Rng rng = Rng::derive(seed, {0x6C});

  const std::vector<OpCheck> checks = {
      {"linear", 1e-6, linear_trial},
      {"batchnorm", 1e-5, batchnorm_trial},
      {"relu", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::relu(v); },
                            random_tensor_off_kink(random_shape(r), r));
       }},
      {"sigmoid", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::sigmoid(v); },
                            random_tensor(random_shape(r), r));
       }},
      {"tanh", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::tanh_(v); },
                            random_tensor(random_shape(r), r));
       }},
      {"softmax_axis", 1e-6,
       [](Rng& r) {
         auto shape = random_shape(r);
         const int axis = static_cast<int>(r.below(shape.size()));
         return unary_trial(r, [axis](Value v) { return ad::softmax_axis(v, axis); },
                            random_tensor(shape, r));
       }},
      {"maxpool_points", 1e-6, maxpool_trial},
      {"concat_lastaxis", 1e-6, concat_trial},
      {"mul", 1e-6, [](Rng& r) { return mul_trial(r, false); }},
      {"mul_per_feature", 1e-6, [](Rng& r) { return mul_trial(r, true); }},
      {"add", 1e-6,
       [](Rng& r) {
         return binary_trial(r, [](Value a, Value b) { return ad::add(a, b); }, false);
       }},
      {"sub", 1e-6,
       [](Rng& r) {
         return binary_trial(r, [](Value a, Value b) { return ad::sub(a, b); }, false);
       }},
      {"div", 1e-6,
       [](Rng& r) {
         return binary_trial(r, [](Value a, Value b) { return ad::div(a, b); }, true);
       }},
      {"scale", 1e-6,
       [](Rng& r) {
         const double c = r.uniform(-2.0, 2.0);
         return unary_trial(r, [c](Value v) { return ad::scale(v, c); },
                            random_tensor(random_shape(r), r));
       }},
      {"exp", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::exp_(v); },
                            random_tensor(random_shape(r), r, -1.5, 1.5));
       }},
      {"abs", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::abs_(v); },
                            random_tensor_off_kink(random_shape(r), r));
       }},
      {"sqrt", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::sqrt_(v); },
                            random_tensor(random_shape(r), r, 0.2, 4.0));
       }},
      {"sum", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::sum(v); },
                            random_tensor(random_shape(r), r));
       }},
      {"sum_lastaxis", 1e-6,
       [](Rng& r) {
         return unary_trial(r, [](Value v) { return ad::sum_lastaxis(v); },
                            random_tensor(random_shape(r), r));
       }},
      {"reduce_max", 1e-6,
       [](Rng& r) {
         // Widen the lead of the max so the finite-difference step cannot
         // change the argmax.
         Tensor x = random_tensor({3 + (int)r.below(6)}, r);
         Eigen::Index arg;
         x.data.maxCoeff(&arg);
         x.data[arg] += 0.1;
         return unary_trial(r, [](Value v) { return ad::reduce_max(v); }, std::move(x));
       }},
      {"reshape", 1e-6,
       [](Rng& r) {
         const int a = 1 + (int)r.below(4), b = 1 + (int)r.below(4);
         return unary_trial(r, [a, b](Value v) { return ad::reshape(v, {b, a}); },
                            random_tensor({a, b}, r));
       }},
      {"row", 1e-6,
       [](Rng& r) {
         const int rows = 1 + (int)r.below(4), cols = 1 + (int)r.below(4);
         const int i = (int)r.below(static_cast<std::uint64_t>(rows));
         return unary_trial(r, [i](Value v) { return ad::row(v, i); },
                            random_tensor({rows, cols}, r));
       }},
      {"broadcast_rows", 1e-6,
       [](Rng& r) {
         const int rows = 1 + (int)r.below(4);
         return unary_trial(r, [rows](Value v) { return ad::broadcast_rows(v, rows); },
                            random_tensor({1 + (int)r.below(5)}, r));
       }},
      {"select_lastaxis", 1e-6,
       [](Rng& r) {
         auto shape = random_shape(r);
         const int k = (int)r.below(static_cast<std::uint64_t>(shape.back()));
         return unary_trial(r, [k](Value v) { return ad::select_lastaxis(v, k); },
                            random_tensor(shape, r));
       }},
  };

  for (const OpCheck& check : checks) {
    GradCheckLine line;
    line.name = check.name;
    line.tolerance = check.tolerance;
    line.trials = trials_per_op;
    for (int t = 0; t < trials_per_op; ++t)
      line.max_rel_err = std::max(line.max_rel_err, check.trial(rng));
    line.pass = line.max_rel_err < line.tolerance;
    report.lines.push_back(line);
  }

  GradCheckLine e2e;
  e2e.name = "end_to_end";
  e2e.tolerance = 1e-4;
  e2e.trials = e2e_batches;
  for (int t = 0; t < e2e_batches; ++t)
    e2e.max_rel_err = std::max(e2e.max_rel_err, end_to_end_trial(rng));
  e2e.pass = e2e.max_rel_err < e2e.tolerance;
  report.lines.push_back(e2e);
  return report;
}

}  // namespace modnet
