#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adaptvc/tensor.h"

namespace adaptvc {

// A named trainable array. `grad` accumulates across backward passes until
// zero_grad() is called.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad = Tensor::zeros_like(value); }
};

// Owns parameters by name. Iteration order is lexicographic by name, which
// keeps optimizer state and checkpoints stable.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  // Parameters whose name starts with `prefix`.
  std::vector<Parameter*> group(const std::string& prefix);

  void zero_grad();
  size_t size() const { return params_.size(); }
  int64_t element_count() const;

 private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int64_t rows() const { return value().rows(); }
  int64_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Operations append nodes in execution order; backward()
// replays them in reverse, accumulating into Parameter::grad for every
// parameter leaf that took part in the forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to `p`. Frozen parameters (trainable == false) act as constants.
  Var param(Parameter& p);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  void backward(Var output);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id()); }
  // Gradient buffer of node `id`, allocated on first use. Null when the node
  // does not require a gradient.
  Tensor* grad(int id);

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool recording_;
  std::deque<Node> nodes_;
};

}  // namespace adaptvc
