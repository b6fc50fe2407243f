#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "scgen/tensor.hpp"

namespace scgen {

template <class T>
class Graph;

// A learnable tensor or persistent buffer owned by a ParamStore.
// Buffers (trainable == false) hold state such as running statistics and
// spectral-norm vectors; they are checkpointed but never optimized.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  std::uint64_t store_id = 0;

  void zero_grad() { grad.fill(T(0)); }
};

// Ordered, name-addressable collection of parameters. Insertion order is the
// serialization order.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::string prefix = "");
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  const std::string& prefix() const { return prefix_; }
  std::uint64_t id() const { return id_; }

  // `name` is relative; the stored name is prefix + name.
  Parameter<T>& add(const std::string& name, Tensor<T> init, bool trainable = true);
  Parameter<T>& get(const std::string& full_name);
  const Parameter<T>& get(const std::string& full_name) const;
  bool contains(const std::string& full_name) const;

  std::vector<Parameter<T>*> all();
  std::vector<const Parameter<T>*> all() const;
  std::vector<Parameter<T>*> trainable();

  void zero_grad();
  std::int64_t trainable_count() const;

 private:
  std::string prefix_;
  std::uint64_t id_;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Handle to a node recorded in a Graph.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::int32_t id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Gradient after Graph::backward; zeros when nothing flowed into the node.
  Tensor<T> grad() const;
};

// Append-only tape. Operands always precede their consumers, so reverse
// append order is a valid reverse topological order.
template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> variable(Tensor<T> value);
  Var<T> param(Parameter<T>& p);

  // Parameters of a frozen store enter the graph as constants.
  void freeze(const ParamStore<T>& store) { frozen_.insert(store.id()); }
  bool is_frozen(const Parameter<T>& p) const { return frozen_.count(p.store_id) != 0; }

  // Records an op result. When no input requires grad the node is a constant
  // and `fn` is dropped.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward fn);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward fn);

  void backward(const Var<T>& root);

  const Tensor<T>& value(std::int32_t id) const { return node(id).value; }
  bool requires_grad(std::int32_t id) const { return node(id).requires_grad; }
  // Zero-initialized on first access; backward functions add into it.
  Tensor<T>& grad_buffer(std::int32_t id);
  Tensor<T> grad(std::int32_t id) const;

  std::size_t size() const { return nodes_.size(); }
  // Number of nodes visited by the last backward pass.
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::int32_t> inputs;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  Node& node(std::int32_t id);
  const Node& node(std::int32_t id) const;
  Var<T> push(Node n);

  std::deque<Node> nodes_;
  std::unordered_set<std::uint64_t> frozen_;
  bool backward_done_ = false;
  std::size_t visited_ = 0;
};

extern template struct Var<float>;
extern template struct Var<double>;
extern template class Graph<float>;
extern template class Graph<double>;
extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace scgen
