#pragma once

#include <vector>

#include "emocpd/tensor.hpp"

namespace emocpd::nn {

enum class Act { none, relu, silu, sigmoid };

// 3D cross-correlation. x: [B,Cin,D,H,W], w: [Cout,Cin,k,k,k], b: [Cout].
// k in {1,3}, stride in {1,2}; padding 1 keeps k=3,s=1 shape-preserving.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

// x: [B,n], w: [m,n], b: [m] -> [B,m].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor activation(const Tensor& x, Act kind);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Per-channel spatial max over [B,C,D,H,W] -> [B,C,1,1,1]; gradient goes to
// the first maximum in scan order.
Tensor global_max_pool(const Tensor& x);

// Running statistics live outside the graph; training mode uses batch
// statistics (population variance) and folds them into the buffers with the
// given momentum, eval mode reads the buffers.
struct BatchNormBuffers {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormBuffers(int64_t channels = 0)
      : running_mean(static_cast<size_t>(channels), 0.0),
        running_var(static_cast<size_t>(channels), 1.0) {}
};

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormBuffers& buffers, bool training, double momentum = 0.1,
                  double eps = 1e-5);

// Normalizes each sample over all non-batch axes; affine is per channel
// (axis 1) broadcast over the rest.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Numerically stable softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis);

// Mean over the batch of -log softmax(logits)[label]; logits [B,K].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor mul(const Tensor& a, const Tensor& b);            // same shape
Tensor scale(const Tensor& a, double factor);
// x: [B,C,spatial...], gate: [B,C,1,...]; broadcast multiply over spatial.
Tensor mul_gate(const Tensor& x, const Tensor& gate);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor transpose_last2(const Tensor& x);
// a: [...,M,K] x b: [...,K,N] -> [...,M,N]; leading dims must match.
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& x);  // -> scalar [1]

}  // namespace emocpd::nn
