#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_map>
#include <vector>

namespace risur {

class Tape;

// Dense row-major float32 tensor. Copies share the underlying buffer. A
// tensor may additionally reference a node on a Tape, in which case ops
// record backward closures; off-tape tensors evaluate eagerly with no
// recording.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> values);
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float value);

  bool defined() const { return static_cast<bool>(data_); }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;  // negative axes count from the end
  std::int64_t size() const;

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  const std::vector<float>& values() const { return *data_; }
  float item() const;
  float& at(std::initializer_list<int> idx);
  float at(std::initializer_list<int> idx) const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  Tensor detached() const;

  // Gradient with respect to this tensor after Tape::backward. Zero for
  // nodes the loss never reached. Throws off-tape or before backward.
  Tensor grad() const;

  const std::shared_ptr<std::vector<float>>& buffer() const { return data_; }

 private:
  friend class Tape;
  std::vector<int> shape_;
  std::shared_ptr<std::vector<float>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Records the computation graph for one forward pass. backward() may run
// once per tape; rebuild the graph (cheap) for another pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<float>&)>;

  // Registers an existing value as a differentiable leaf. The returned
  // tensor shares the buffer.
  Tensor leaf(const Tensor& value);

  // For ops: wraps freshly computed values in an on-tape tensor whose
  // backward closure routes the node's gradient into its parents.
  Tensor make_node(std::vector<int> shape, std::vector<float> values, BackwardFn backward);

  void backward(const Tensor& loss);
  bool backward_done() const { return backward_done_; }

  // Accumulation buffer for a node's gradient, zero-initialized on first use.
  std::vector<float>& grad_buffer(int node);
  // Null if the node was never reached during backward.
  const std::vector<float>* grad_of(int node) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct NodeRec {
    std::int64_t size = 0;
    BackwardFn backward;  // empty for leaves
  };
  std::vector<NodeRec> nodes_;
  std::vector<std::vector<float>> grads_;
  bool backward_done_ = false;
};

// Maps parameter tensors to tape leaves, binding each underlying buffer at
// most once per tape. With a null tape it returns parameters unchanged, which
// makes the same layer code serve training and inference.
class Binder {
 public:
  explicit Binder(Tape* tape) : tape_(tape) {}
  Tape* tape() const { return tape_; }

  Tensor operator()(Tensor& param);

  // The leaf a parameter was bound to (by buffer identity). Throws if unbound.
  const Tensor& bound_for(const Tensor& param) const;

 private:
  Tape* tape_;
  std::unordered_map<const std::vector<float>*, Tensor> cache_;
};

}  // namespace risur
