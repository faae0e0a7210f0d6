#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "ayce/core/binary_io.hpp"
#include "ayce/core/matrix.hpp"

namespace ayce::nn {

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Flat, ordered collection of trainable matrices. Modules keep ParamIds into
/// a store owned by the enclosing model, so copying the model copies the
/// weights and every id stays valid.
class ParameterStore {
 public:
  ParamId add(std::string name, Matrix init);

  Parameter& operator[](ParamId id) { return params_[id]; }
  const Parameter& operator[](ParamId id) const { return params_[id]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Parameter arrays in declaration order.
  void write(BinaryWriter& w) const;
  /// Reads arrays written by write() into an identically declared store;
  /// names and shapes must match.
  void read_into(BinaryReader& r);

  friend bool operator==(const ParameterStore& a, const ParameterStore& b);

 private:
  std::vector<Parameter> params_;
};

/// Gradient buffers parallel to a ParameterStore.
struct Gradients {
  std::vector<Matrix> per_param;

  Gradients() = default;
  explicit Gradients(const ParameterStore& store);
  void zero();
  void add(const Gradients& other, double scale = 1.0);
  void scale(double s);
  double squared_norm() const;
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep over the node list is a valid topological order for backward().
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  explicit Graph(const ParameterStore& params);

  Var constant(Matrix value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(ParamId id);

  /// Appends an op result. It requires grad iff any input does; `bw` is
  /// dropped otherwise.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward bw);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward bw);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulator of a node (zero-initialised on first access).
  Matrix& grad(Var v);

  /// Backpropagates from a 1 x 1 root and adds parameter gradients into `out`.
  void backward(Var root, Gradients& out);

  const ParameterStore& params() const { return params_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    ParamId param = static_cast<ParamId>(-1);
  };

  const ParameterStore& params_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> param_nodes_;
};

}  // namespace ayce::nn
