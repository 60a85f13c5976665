#pragma once

#include <cmath>
#include <string>

#include "sslts/autograd/ops.hpp"
#include "sslts/nn/param.hpp"

namespace sslts::nn {

template <class T>
struct Linear {
  ag::Var<T> W;
  ag::Var<T> b;  // null when bias-free

  Linear() = default;
  // init_stddev < 0 selects 1/sqrt(fan_in).
  Linear(int64_t in, int64_t out, bool bias, Rng& rng, double init_stddev = -1.0) {
    const double s = init_stddev < 0 ? 1.0 / std::sqrt(static_cast<double>(in)) : init_stddev;
    W = param_normal<T>({out, in}, rng, s);
    if (bias) b = param_const<T>({out}, 0.0);
  }

  ag::Var<T> forward(const ag::Var<T>& x) const { return ag::linear(x, W, b); }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    out.push_back({prefix + ".weight", group, W});
    if (b) out.push_back({prefix + ".bias", group, b});
  }
};

template <class T>
struct LayerNorm {
  ag::Var<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int64_t dim) {
    gamma = param_const<T>({dim}, 1.0);
    beta = param_const<T>({dim}, 0.0);
  }

  ag::Var<T> forward(const ag::Var<T>& x) const { return ag::layer_norm(x, gamma, beta); }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    out.push_back({prefix + ".gamma", group, gamma});
    out.push_back({prefix + ".beta", group, beta});
  }
};

// Conv1d + optional BatchNorm; operates on [B,C,L].
template <class T>
struct ConvBN {
  ag::Var<T> W, bias, gamma, beta;
  Tensor<T> run_mean, run_var;
  int64_t stride = 1, dilation = 1;
  bool use_bn = true;

  ConvBN() = default;
  ConvBN(int64_t c_in, int64_t c_out, int64_t k, int64_t stride_, int64_t dilation_, bool bn,
         Rng& rng)
      : stride(stride_), dilation(dilation_), use_bn(bn) {
    W = param_normal<T>({c_out, c_in, k}, rng, 1.0 / std::sqrt(static_cast<double>(c_in * k)));
    bias = param_const<T>({c_out}, 0.0);
    if (use_bn) {
      gamma = param_const<T>({c_out}, 1.0);
      beta = param_const<T>({c_out}, 0.0);
      run_mean = Tensor<T>({c_out});
      run_var = Tensor<T>::full({c_out}, T(1));
    }
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training) {
    auto y = ag::conv1d(x, W, bias, stride, dilation);
    if (use_bn) y = ag::batch_norm1d(y, gamma, beta, &run_mean, &run_var, training);
    return y;
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    out.push_back({prefix + ".weight", group, W});
    out.push_back({prefix + ".bias", group, bias});
    if (use_bn) {
      out.push_back({prefix + ".bn.gamma", group, gamma});
      out.push_back({prefix + ".bn.beta", group, beta});
    }
  }

  void collect_state(std::vector<NamedState<T>>& out, const std::string& prefix,
                     const std::string& group) {
    if (use_bn) {
      out.push_back({prefix + ".bn.running_mean", group, &run_mean});
      out.push_back({prefix + ".bn.running_var", group, &run_var});
    }
  }
};

}  // namespace sslts::nn
