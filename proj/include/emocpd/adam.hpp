#pragma once

#include <cstdint>
#include <vector>

#include "emocpd/tensor.hpp"

namespace emocpd::nn {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;  // decoupled: p -= lr*wd*p before the moment update
};

class AdamOptimizer {
public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config = {});

  // One bias-corrected update from the accumulated gradients. Parameters
  // without a gradient buffer are treated as zero-gradient (weight decay
  // still applies).
  void step();
  void zero_grad();

  int64_t step_count() const { return t_; }
  // L2 norm of the full gradient seen by the most recent step().
  double last_grad_norm() const { return last_grad_norm_; }
  const AdamConfig& config() const { return config_; }

private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  int64_t t_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace emocpd::nn
