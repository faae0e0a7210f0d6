#include "ayce/nn/graph.hpp"

#include "ayce/core/errors.hpp"

namespace ayce::nn {

ParamId ParameterStore::add(std::string name, Matrix init) {
  params_.push_back({std::move(name), std::move(init)});
  return params_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::write(BinaryWriter& w) const {
  w.u64(params_.size());
  for (const auto& p : params_) {
    w.str(p.name);
    w.matrix(p.value);
  }
}

void ParameterStore::read_into(BinaryReader& r) {
  const auto n = r.u64();
  if (n != params_.size())
    throw CheckpointIOError("checkpoint has " + std::to_string(n) + " parameter arrays, model declares " +
                            std::to_string(params_.size()));
  for (auto& p : params_) {
    const auto name = r.str();
    Matrix m = r.matrix();
    if (name != p.name || !m.same_shape(p.value))
      throw CheckpointIOError("parameter mismatch at '" + p.name + "' (checkpoint has '" + name + "')");
    p.value = std::move(m);
  }
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  return true;
}

Gradients::Gradients(const ParameterStore& store) {
  per_param.reserve(store.size());
  for (const auto& p : store) per_param.emplace_back(p.value.rows, p.value.cols);
}

void Gradients::zero() {
  for (auto& g : per_param) std::fill(g.data.begin(), g.data.end(), 0.0);
}

void Gradients::add(const Gradients& other, double s) {
  for (std::size_t i = 0; i < per_param.size(); ++i) {
    auto& dst = per_param[i].data;
    const auto& src = other.per_param[i].data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * src[j];
  }
}

void Gradients::scale(double s) {
  for (auto& g : per_param)
    for (double& x : g.data) x *= s;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : per_param)
    for (double x : g.data) s += x * x;
  return s;
}

Graph::Graph(const ParameterStore& params) : params_(params), param_nodes_(params.size(), static_cast<std::size_t>(-1)) {}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var Graph::param(ParamId id) {
  if (id >= param_nodes_.size()) throw ShapeError("parameter id out of range");
  if (param_nodes_[id] != static_cast<std::size_t>(-1)) return {param_nodes_[id]};
  Node n;
  n.value = params_[id].value;
  n.requires_grad = true;
  n.param = id;
  nodes_.push_back(std::move(n));
  param_nodes_[id] = nodes_.size() - 1;
  return {nodes_.size() - 1};
}

Var Graph::record(Matrix value, std::initializer_list<Var> inputs, Backward bw) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(bw));
}

Var Graph::record(Matrix value, const std::vector<Var>& inputs, Backward bw) {
  Node n;
  n.value = std::move(value);
  for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  if (n.requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Matrix& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Graph::backward(Var root, Gradients& out) {
  if (value(root).size() != 1) throw ShapeError("backward root must be a scalar");
  if (!requires_grad(root)) return;
  grad(root).data[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
  }
  for (std::size_t id = 0; id < param_nodes_.size(); ++id) {
    const auto node = param_nodes_[id];
    if (node == static_cast<std::size_t>(-1) || nodes_[node].grad.empty()) continue;
    auto& dst = out.per_param[id].data;
    const auto& src = nodes_[node].grad.data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

}  // namespace ayce::nn
