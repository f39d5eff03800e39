#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tfd/error.hpp"
#include "tfd/nn/layers.hpp"
#include "tfd/tensor.hpp"

namespace tfd::nn {

// Mean squared error over every element. Accumulates in double regardless
// of the tensor's scalar type.
template <typename T>
double mse(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.size() == target.size(), ErrorKind::Invalid,
          "mse: size mismatch " + pred.shape_string() + " vs " + target.shape_string());
  double s = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

// d(mse)/d(pred) = 2 (pred - target) / N
template <typename T>
Tensor<T> mse_backward(const Tensor<T>& pred, const Tensor<T>& target) {
  Tensor<T> g(pred.shape());
  const T inv = static_cast<T>(2.0 / static_cast<double>(pred.size()));
  for (int64_t i = 0; i < pred.size(); ++i) g[i] = inv * (pred[i] - target[i]);
  return g;
}

// Mean cross-entropy over a batch of logits [B, K] with integer labels.
// Log-sum-exp is max-shifted for stability.
template <typename T>
double cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, ErrorKind::Invalid, "cross_entropy: rank-2 logits required");
  const int64_t batch = logits.dim(0), k = logits.dim(1);
  require(static_cast<int64_t>(labels.size()) == batch, ErrorKind::Invalid,
          "cross_entropy: label count does not match batch");
  double total = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = logits.data() + b * k;
    require(labels[b] >= 0 && labels[b] < k, ErrorKind::Invalid,
            "cross_entropy: label out of range");
    double mx = row[0];
    for (int64_t i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(row[i]));
    double z = 0.0;
    for (int64_t i = 0; i < k; ++i) z += std::exp(static_cast<double>(row[i]) - mx);
    total += std::log(z) + mx - static_cast<double>(row[labels[b]]);
  }
  return total / static_cast<double>(batch);
}

// d(ce)/d(logits) = (softmax(logits) - onehot(labels)) / B
template <typename T>
Tensor<T> cross_entropy_backward(const Tensor<T>& logits, const std::vector<int>& labels) {
  Tensor<T> g = softmax_lastdim(logits);
  const int64_t batch = logits.dim(0), k = logits.dim(1);
  const T inv = static_cast<T>(1.0 / static_cast<double>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    g[b * k + labels[b]] -= T(1);
    for (int64_t i = 0; i < k; ++i) g[b * k + i] *= inv;
  }
  return g;
}

}  // namespace tfd::nn
