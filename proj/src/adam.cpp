#include "emocpd/adam.hpp"

#include <cmath>

namespace emocpd::nn {

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.data().size(), 0.0);
    v_.emplace_back(p.data().size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));

  double norm_sq = 0.0;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    std::vector<double>& value = p.mutable_data();
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];

    const std::vector<double>* grad = nullptr;
    if (p.has_grad()) {
      grad = &p.grad();
      if (grad->size() != value.size())
        throw ShapeError("gradient size does not match parameter '" + p.name() + "'");
    }

    for (size_t i = 0; i < value.size(); ++i) {
      double g = grad ? (*grad)[i] : 0.0;
      norm_sq += g * g;
      value[i] -= config_.lr * config_.weight_decay * value[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
  last_grad_norm_ = std::sqrt(norm_sq);
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace emocpd::nn
