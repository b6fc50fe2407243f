#include "scgen/autodiff.hpp"

#include <atomic>

namespace scgen {

namespace {
std::atomic<std::uint64_t> next_store_id{1};
}

template <class T>
ParamStore<T>::ParamStore(std::string prefix) : prefix_(std::move(prefix)), id_(next_store_id++) {}

template <class T>
Parameter<T>& ParamStore<T>::add(const std::string& name, Tensor<T> init, bool trainable) {
  const std::string full = prefix_ + name;
  if (index_.count(full)) throw InternalError("duplicate parameter name " + full);
  auto p = std::make_unique<Parameter<T>>();
  p->name = full;
  p->grad = Tensor<T>(init.shape());
  p->value = std::move(init);
  p->trainable = trainable;
  p->store_id = id_;
  index_[full] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

template <class T>
Parameter<T>& ParamStore<T>::get(const std::string& full_name) {
  auto it = index_.find(full_name);
  if (it == index_.end()) throw ParameterError("unknown parameter " + full_name);
  return *params_[it->second];
}

template <class T>
const Parameter<T>& ParamStore<T>::get(const std::string& full_name) const {
  auto it = index_.find(full_name);
  if (it == index_.end()) throw ParameterError("unknown parameter " + full_name);
  return *params_[it->second];
}

template <class T>
bool ParamStore<T>::contains(const std::string& full_name) const {
  return index_.count(full_name) != 0;
}

template <class T>
std::vector<Parameter<T>*> ParamStore<T>::all() {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <class T>
std::vector<const Parameter<T>*> ParamStore<T>::all() const {
  std::vector<const Parameter<T>*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <class T>
std::vector<Parameter<T>*> ParamStore<T>::trainable() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <class T>
std::int64_t ParamStore<T>::trainable_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) {
    if (p->trainable) total += p->value.numel();
  }
  return total;
}

template <class T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

template <class T>
bool Var<T>::requires_grad() const {
  return graph->requires_grad(id);
}

template <class T>
Tensor<T> Var<T>::grad() const {
  return graph->grad(id);
}

template <class T>
typename Graph<T>::Node& Graph<T>::node(std::int32_t id) {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw InternalError("graph node id out of range: " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

template <class T>
const typename Graph<T>::Node& Graph<T>::node(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw InternalError("graph node id out of range: " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

template <class T>
Var<T> Graph<T>::push(Node n) {
  if (backward_done_) throw StateError("cannot record into a graph after backward");
  nodes_.push_back(std::move(n));
  return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::param(Parameter<T>& p) {
  Node n;
  n.value = p.value;
  if (p.trainable && !is_frozen(p)) {
    n.requires_grad = true;
    n.param = &p;
  }
  return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward fn) {
  Node n;
  n.value = std::move(value);
  const auto next_id = static_cast<std::int32_t>(nodes_.size());
  for (const auto& in : inputs) {
    if (in.graph != this) throw InternalError("operand recorded in a different graph");
    if (in.id >= next_id) throw InternalError("operand does not precede its consumer");
    if (node(in.id).requires_grad) n.requires_grad = true;
    n.inputs.push_back(in.id);
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <class T>
Tensor<T>& Graph<T>::grad_buffer(std::int32_t id) {
  Node& n = node(id);
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <class T>
Tensor<T> Graph<T>::grad(std::int32_t id) const {
  const Node& n = node(id);
  if (n.has_grad) return n.grad;
  return Tensor<T>(n.value.shape());
}

template <class T>
void Graph<T>::backward(const Var<T>& root) {
  if (root.graph != this) throw InternalError("backward root belongs to a different graph");
  if (backward_done_) throw StateError("backward already ran on this graph");
  Node& r = node(root.id);
  if (r.value.numel() != 1) throw ShapeError("backward root must be scalar, got " + r.value.shape().str());
  backward_done_ = true;
  visited_ = 0;
  if (!r.requires_grad) return;
  grad_buffer(root.id).fill(T(1));
  for (std::int32_t id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.requires_grad) continue;
    ++visited_;
    if (n.backward) {
      for (auto in : n.inputs) {
        if (in >= id) throw InternalError("cycle detected in computation graph");
      }
      n.backward(*this, n.grad);
      // Intermediate gradients are no longer needed once propagated.
      if (!n.param) n.backward = nullptr;
    }
  }
  for (auto& n : nodes_) {
    if (n.param && n.has_grad) {
      auto& dst = n.param->grad;
      for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i];
    }
  }
}

template struct Var<float>;
template struct Var<double>;
template class Graph<float>;
template class Graph<double>;
template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace scgen
