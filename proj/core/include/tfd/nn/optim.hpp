#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tfd/error.hpp"
#include "tfd/tensor.hpp"

namespace tfd::nn {

// A flat registry of named (value, grad) pairs plus the Adam moment buffers
// for each. Layers own their tensors; the store only points at them.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
    Tensor<T> m, v;  // first/second Adam moments
  };

  void add(std::string name, Tensor<T>* value, Tensor<T>* grad) {
    require(value != nullptr && grad != nullptr, ErrorKind::Invalid,
            "param store: null tensor for '" + name + "'");
    require(value->size() == grad->size(), ErrorKind::Invalid,
            "param store: value/grad size mismatch for '" + name + "'");
    Entry e{std::move(name), value, grad, Tensor<T>(value->shape()),
            Tensor<T>(value->shape())};
    entries_.push_back(std::move(e));
  }

  void zero_grads() {
    for (auto& e : entries_) e.grad->set_zero();
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value->size();
    return n;
  }

  int64_t step() const { return step_; }
  void bump_step() { ++step_; }

 private:
  std::vector<Entry> entries_;
  int64_t step_ = 0;
};

// One Adam update over every entry in the store. Moment estimates use the
// standard bias correction. Arithmetic runs element-wise in T (corrections
// are computed in double first); the passes are written as Eigen array ops
// so the float path vectorizes — the update was the dominant cost of a
// training step on the wide classifier otherwise. A non-finite gradient is
// caught through the second moment, where it necessarily lands; that also
// flags a float g whose square overflows, which is just as fatal.
template <typename T>
void adam_step(ParamStore<T>& store, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  store.bump_step();
  const auto t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  const T b1 = static_cast<T>(beta1);
  const T b2 = static_cast<T>(beta2);
  const T ob1 = static_cast<T>(1.0 - beta1);
  const T ob2 = static_cast<T>(1.0 - beta2);
  const T sc1 = static_cast<T>(lr / bc1);
  const T sc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T epst = static_cast<T>(eps);
  using Arr = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using CArr = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  for (auto& e : store.entries()) {
    const int64_t n = e.value->size();
    CArr g(e.grad->data(), n);
    Arr m(e.m.data(), n);
    Arr v(e.v.data(), n);
    Arr th(e.value->data(), n);
    m = b1 * m + ob1 * g;
    v = b2 * v + ob2 * g * g;
    if (!v.isFinite().all())
      fail(ErrorKind::Internal, "non-finite gradient in parameter '" + e.name + "'");
    th -= sc1 * m / (v.sqrt() * sc2 + epst);
  }
}

}  // namespace tfd::nn
