#pragma once

#include <cmath>

#include "sslts/nn/layers.hpp"

namespace sslts::nn {

// Residual 1-D conv block on [B,C,L]: conv-BN-GELU-conv-BN plus a skip
// (1x1 conv when channel counts differ), GELU after the sum. Stride 1 so the
// token count is untouched; all downsampling lives in the stem.
template <class T>
struct Net1dBlock {
  ConvBN<T> conv1, conv2;
  Linear<T> skip_proj;  // used only when c_in != c_out
  bool project = false;

  Net1dBlock() = default;
  Net1dBlock(int64_t c_in, int64_t c_out, int64_t k, Rng& rng)
      : conv1(c_in, c_out, k, 1, 1, true, rng),
        conv2(c_out, c_out, k, 1, 1, true, rng),
        project(c_in != c_out) {
    if (project) skip_proj = Linear<T>(c_in, c_out, false, rng);
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training) {
    auto y = conv2.forward(ag::gelu(conv1.forward(x, training)), training);
    auto s = x;
    if (project)
      s = ag::transpose_last2(skip_proj.forward(ag::transpose_last2(x)));
    return ag::gelu(ag::add(y, s));
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    conv1.collect(out, prefix + ".conv1", group);
    conv2.collect(out, prefix + ".conv2", group);
    if (project) skip_proj.collect(out, prefix + ".skip", group);
  }

  void collect_state(std::vector<NamedState<T>>& out, const std::string& prefix,
                     const std::string& group) {
    conv1.collect_state(out, prefix + ".conv1", group);
    conv2.collect_state(out, prefix + ".conv2", group);
  }
};

// One stage = blocks_per_stage residual blocks at a fixed width, dropout at
// the stage output. Operates on token-major [B,L,C]; transposes internally.
template <class T>
struct Net1dStage {
  std::vector<Net1dBlock<T>> blocks;
  double dropout_p = 0.0;

  Net1dStage() = default;
  Net1dStage(int64_t c_in, int64_t c_out, int64_t k, int64_t blocks_per_stage, double dropout,
             Rng& rng)
      : dropout_p(dropout) {
    blocks.emplace_back(c_in, c_out, k, rng);
    for (int64_t i = 1; i < blocks_per_stage; ++i) blocks.emplace_back(c_out, c_out, k, rng);
  }

  ag::Var<T> forward(const ag::Var<T>& x, bool training, uint64_t seed) {
    auto h = ag::transpose_last2(x);
    for (auto& b : blocks) h = b.forward(h, training);
    h = ag::transpose_last2(h);
    return ag::dropout(h, dropout_p, seed, training);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix,
               const std::string& group) const {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(out, prefix + ".block" + std::to_string(i), group);
  }

  void collect_state(std::vector<NamedState<T>>& out, const std::string& prefix,
                     const std::string& group) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_state(out, prefix + ".block" + std::to_string(i), group);
  }
};

// Default width ramp ending at model_dim: walking backward from the last
// stage, widths shrink alternately by 3/4 and 2/3 (512, 384, 256, 192, ...).
inline std::vector<int64_t> net1d_default_widths(int64_t depth, int64_t model_dim) {
  std::vector<int64_t> w(static_cast<size_t>(depth));
  double cur = static_cast<double>(model_dim);
  for (int64_t j = depth - 1; j >= 0; --j) {
    w[static_cast<size_t>(j)] = std::max<int64_t>(8, static_cast<int64_t>(std::llround(cur)));
    cur *= ((depth - 1 - j) % 2 == 0) ? 0.75 : (2.0 / 3.0);
  }
  return w;
}

}  // namespace sslts::nn
