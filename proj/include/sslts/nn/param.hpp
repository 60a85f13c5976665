#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslts/autograd/autograd.hpp"
#include "sslts/core/rng.hpp"

namespace sslts::nn {

// A named trainable tensor. `group` is one of stem / backbone / head and
// drives per-group learning rates and checkpoint blob layout.
template <class T>
struct NamedParam {
  std::string name;
  std::string group;
  ag::Var<T> var;
};

// Named non-trainable state (running statistics, codebooks, prototypes, EMA
// copies). Pointer into the owning module; serialized alongside parameters.
template <class T>
struct NamedState {
  std::string name;
  std::string group;
  Tensor<T>* tensor;
};

template <class T>
ag::Var<T> param_normal(std::vector<int64_t> shape, Rng& rng, double stddev) {
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(stddev * rng.normal());
  return ag::make_leaf(std::move(t), true);
}

template <class T>
ag::Var<T> param_uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return ag::make_leaf(std::move(t), true);
}

template <class T>
ag::Var<T> param_const(std::vector<int64_t> shape, double v) {
  Tensor<T> t(shape);
  t.fill(static_cast<T>(v));
  return ag::make_leaf(std::move(t), true);
}

template <class T>
int64_t total_numel(const std::vector<NamedParam<T>>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.var->value.numel();
  return n;
}

}  // namespace sslts::nn
