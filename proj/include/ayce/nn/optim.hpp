#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ayce/nn/graph.hpp"

namespace ayce::nn {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterStore& params, const Gradients& grads, double lr) = 0;
  virtual std::string_view name() const = 0;
};

/// Adaptive first/second-moment method with bias correction.
class Adam final : public Optimizer {
 public:
  explicit Adam(const ParameterStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterStore& params, const Gradients& grads, double lr) override;
  std::string_view name() const override { return "adam"; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// SGD with optional heavy-ball momentum (momentum 0 is plain SGD).
class Sgd final : public Optimizer {
 public:
  explicit Sgd(const ParameterStore& params, double momentum = 0.0);
  void step(ParameterStore& params, const Gradients& grads, double lr) override;
  std::string_view name() const override { return momentum_ > 0 ? "sgd-momentum" : "sgd"; }

 private:
  double momentum_;
  std::vector<Matrix> velocity_;
};

std::unique_ptr<Optimizer> make_optimizer(std::string_view name, const ParameterStore& params);

}  // namespace ayce::nn
