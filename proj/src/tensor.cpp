#include "risur/tensor.hpp"

#include <stdexcept>
#include <string>

namespace risur {

namespace {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<float>>(shape_size(shape_), 0.0f)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values) : shape_(std::move(shape)) {
  if (shape_size(shape_) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("tensor: value count does not match shape");
  data_ = std::make_shared<std::vector<float>>(std::move(values));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  for (auto& v : *t.data_) v = value;
  return t;
}

int Tensor::dim(int axis) const {
  int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("tensor: axis out of range");
  return shape_[axis];
}

std::int64_t Tensor::size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

float Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("tensor: item() requires a single element");
  return (*data_)[0];
}

float& Tensor::at(std::initializer_list<int> idx) {
  if (static_cast<int>(idx.size()) != rank())
    throw std::invalid_argument("tensor: index rank mismatch");
  std::int64_t flat = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape_[axis]) throw std::invalid_argument("tensor: index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return (*data_)[flat];
}

float Tensor::at(std::initializer_list<int> idx) const {
  return const_cast<Tensor*>(this)->at(idx);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::grad() const {
  if (!on_tape()) throw std::runtime_error("tensor: grad() on an off-tape tensor");
  if (!tape_->backward_done()) throw std::runtime_error("tensor: grad() before backward");
  const std::vector<float>* g = tape_->grad_of(node_);
  if (!g) return Tensor(shape_);  // unreached by the loss: zero gradient
  return Tensor(shape_, *g);
}

Tensor Tape::leaf(const Tensor& value) {
  if (!value.defined()) throw std::invalid_argument("tape: leaf of undefined tensor");
  Tensor t;
  t.shape_ = value.shape_;
  t.data_ = value.data_;
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back({value.size(), BackwardFn{}});
  grads_.emplace_back();
  return t;
}

Tensor Tape::make_node(std::vector<int> shape, std::vector<float> values, BackwardFn backward) {
  Tensor t(std::move(shape), std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back({t.size(), std::move(backward)});
  grads_.emplace_back();
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_)
    throw std::runtime_error("tape: backward already ran; rebuild the graph for another pass");
  if (loss.tape() != this) throw std::invalid_argument("tape: loss does not belong to this tape");
  if (loss.size() != 1) throw std::invalid_argument("tape: loss must be a scalar");
  grad_buffer(loss.node())[0] = 1.0f;
  for (int i = loss.node(); i >= 0; --i) {
    if (grads_[i].empty()) continue;  // not reachable from the loss
    if (nodes_[i].backward) nodes_[i].backward(*this, grads_[i]);
  }
  backward_done_ = true;
}

std::vector<float>& Tape::grad_buffer(int node) {
  auto& g = grads_.at(node);
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[node].size), 0.0f);
  return g;
}

const std::vector<float>* Tape::grad_of(int node) const {
  const auto& g = grads_.at(node);
  return g.empty() ? nullptr : &g;
}

Tensor Binder::operator()(Tensor& param) {
  if (!param.defined()) throw std::invalid_argument("binder: undefined parameter");
  if (!tape_) return param;
  auto key = param.buffer().get();
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Tensor bound = tape_->leaf(param);
  cache_.emplace(key, bound);
  return bound;
}

const Tensor& Binder::bound_for(const Tensor& param) const {
  auto it = cache_.find(param.buffer().get());
  if (it == cache_.end()) throw std::runtime_error("binder: parameter was never bound");
  return it->second;
}

}  // namespace risur
