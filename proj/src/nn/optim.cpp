#include "ayce/nn/optim.hpp"

#include <cmath>

#include "ayce/core/errors.hpp"

namespace ayce::nn {

Adam::Adam(const ParameterStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.rows, p.value.cols);
    v_.emplace_back(p.value.rows, p.value.cols);
  }
}

void Adam::step(ParameterStore& params, const Gradients& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.data;
    const auto& g = grads.per_param[i].data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

Sgd::Sgd(const ParameterStore& params, double momentum) : momentum_(momentum) {
  for (const auto& p : params) velocity_.emplace_back(p.value.rows, p.value.cols);
}

void Sgd::step(ParameterStore& params, const Gradients& grads, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.data;
    const auto& g = grads.per_param[i].data;
    auto& vel = velocity_[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      vel[j] = momentum_ * vel[j] + g[j];
      w[j] -= lr * vel[j];
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(std::string_view name, const ParameterStore& params) {
  if (name == "adam") return std::make_unique<Adam>(params);
  if (name == "sgd") return std::make_unique<Sgd>(params, 0.0);
  if (name == "sgd-momentum") return std::make_unique<Sgd>(params, 0.9);
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam|sgd|sgd-momentum)");
}

}  // namespace ayce::nn
