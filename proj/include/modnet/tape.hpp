#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modnet/tensor.hpp"

namespace modnet::ad {

class Tape;

/// Handle to a node on a tape.
struct Value {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Learnable tensor. Gradients accumulate across backward passes and are
/// cleared by sgd_step (or zero_grad).
struct Parameter {
  Tensor value;
  Tensor grad;
  std::string name;
  bool trainable = true;
  int index = -1;  // slot in the owning registry; -1 when standalone

  Parameter() = default;
  Parameter(std::string n, Tensor v) : value(std::move(v)), name(std::move(n)) {
    grad = Tensor::zeros(value.shape);
  }
};

/// Batch-normalization layer state: learnable scale/shift plus running
/// statistics used in eval mode.
struct BatchNorm {
  Parameter gamma, beta;
  Tensor running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, int features)
      : gamma(name + ".gamma", Tensor::full({features}, 1.0)),
        beta(name + ".beta", Tensor::zeros({features})),
        running_mean(Tensor::zeros({features})),
        running_var(Tensor::full({features}, 1.0)) {}
};

enum class Mode { kTrain, kEval };

/// Append-only reverse-mode differentiation tape. Forward values are computed
/// eagerly as nodes are recorded; backward visits nodes in exact reverse
/// recording order. Any non-finite op output raises immediately, naming the op.
class Tape {
 public:
  explicit Tape(Mode mode = Mode::kEval) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }

  Value input(Tensor t);          // constant leaf (no gradient)
  Value param(Parameter& p);      // differentiable leaf when trainable

  const Tensor& value(Value v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Accumulates d(loss)/d(theta) into Parameter::grad for every trainable
  /// parameter reachable from the scalar loss. Node buffers are released as
  /// the sweep passes them when release_buffers is set.
  void backward(Value loss, bool release_buffers = true);

  /// Same sweep, but gradients land in sink[p.index] instead of p.grad, for
  /// deterministic multi-shard reduction.
  void backward(Value loss, std::vector<Tensor>& sink, bool release_buffers = true);

  /// Applies the running-statistic updates recorded by train-mode batchnorm
  /// nodes, in recording order. Kept separate from the forward pass so that
  /// repeated evaluations (e.g. finite differencing) stay side-effect free.
  void apply_bn_updates();

  // --- recording machinery (used by the op free functions) ---
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* bound = nullptr;
    std::function<void(Tape&, Node&)> backprop;
  };
  int append(Node node);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor& grad_buffer(int id);

  struct PendingBnUpdate {
    BatchNorm* layer;
    Eigen::ArrayXd mean;
    Eigen::ArrayXd var;
  };
  std::vector<PendingBnUpdate> pending_bn_updates;

 private:
  void backward_impl(Value loss, std::vector<Tensor>* sink, bool release_buffers);

  Mode mode_;
  std::vector<Node> nodes_;
};

// ---- operator set ----

Value linear(Value x, Parameter& weight, Parameter& bias);
Value batchnorm(Value x, BatchNorm& bn);
Value relu(Value x);
Value sigmoid(Value x);
Value tanh_(Value x);
Value softmax_axis(Value x, int axis);
Value maxpool_points(Value x);                           // [B,P,F] -> [B,F]
Value concat_lastaxis(const std::vector<Value>& xs);
Value mul(Value a, Value b);                             // same shape, or b = per-feature [F]
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value div(Value a, Value b);
Value scale(Value a, double c);
Value exp_(Value a);
Value abs_(Value a);
Value sqrt_(Value a);
Value sum(Value a);                                      // -> scalar
Value sum_lastaxis(Value a);
Value reduce_max(Value a);                               // -> scalar, ties to lowest index
Value reshape(Value a, std::vector<int> shape);
Value row(Value a, int i);                               // [B,C] -> [C]
Value broadcast_rows(Value v, int rows);                 // [C] -> [rows,C]
Value select_lastaxis(Value a, int k);

/// theta <- theta - lr * grad for trainable parameters; gradients are zeroed.
/// lr = 0 is a permitted no-op; negative lr is rejected.
void sgd_step(const std::vector<Parameter*>& params, double lr);
void zero_grads(const std::vector<Parameter*>& params);
double global_grad_norm(const std::vector<Parameter*>& params);
void clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

}  // namespace modnet::ad
