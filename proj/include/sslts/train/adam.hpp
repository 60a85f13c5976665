#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sslts/nn/param.hpp"

namespace sslts::train {

struct AdamConfig {
  double learning_rate = 3e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // 0 disables gradient clipping
};

// Adam with L2 weight decay folded into the gradient. Decay skips
// normalization gains/biases (parameters named *.gamma / *.beta); per-group
// learning-rate overrides serve the staged finetuning protocols. Parameters
// without a gradient this step are left untouched.
template <class T>
class Adam {
 public:
  Adam(std::vector<nn::NamedParam<T>> params, AdamConfig cfg,
       std::map<std::string, double> group_lr = {})
      : cfg_(cfg) {
    if (cfg.learning_rate <= 0.0) throw ConfigError("adam: learning rate must be positive");
    slots_.reserve(params.size());
    for (auto& p : params) {
      Slot s;
      s.lr = group_lr.count(p.group) ? group_lr.at(p.group) : cfg.learning_rate;
      s.decay = cfg.weight_decay > 0.0 && !ends_with(p.name, ".gamma") &&
                !ends_with(p.name, ".beta");
      s.m = Tensor<T>::zeros(p.var->value.shape());
      s.v = Tensor<T>::zeros(p.var->value.shape());
      s.p = std::move(p);
      slots_.push_back(std::move(s));
    }
  }

  void zero_grad() {
    for (auto& s : slots_) s.p.var->has_grad = false;
  }

  void step() {
    step_count_[0] += T(1);
    const auto t = static_cast<double>(step_count_[0]);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);

    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double total = 0.0;
      for (const auto& s : slots_) {
        if (!s.p.var->has_grad) continue;
        const Tensor<T>& g = s.p.var->grad;
        for (int64_t i = 0; i < g.numel(); ++i)
          total += static_cast<double>(g[i]) * static_cast<double>(g[i]);
      }
      total = std::sqrt(total);
      if (total > cfg_.clip_norm) clip_scale = cfg_.clip_norm / total;
    }

    for (auto& s : slots_) {
      if (!s.p.var->has_grad) continue;
      Tensor<T>& th = s.p.var->value;
      const Tensor<T>& gr = s.p.var->grad;
      for (int64_t i = 0; i < th.numel(); ++i) {
        double g = static_cast<double>(gr[i]) * clip_scale;
        if (s.decay) g += cfg_.weight_decay * static_cast<double>(th[i]);
        const double m = cfg_.beta1 * static_cast<double>(s.m[i]) + (1.0 - cfg_.beta1) * g;
        const double v = cfg_.beta2 * static_cast<double>(s.v[i]) + (1.0 - cfg_.beta2) * g * g;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        th[i] = static_cast<T>(static_cast<double>(th[i]) -
                               s.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon));
      }
    }
  }

  void collect_state(std::vector<nn::NamedState<T>>& out) {
    out.push_back({"optimizer.step", "optimizer", &step_count_});
    for (auto& s : slots_) {
      out.push_back({"optimizer.m." + s.p.name, "optimizer", &s.m});
      out.push_back({"optimizer.v." + s.p.name, "optimizer", &s.v});
    }
  }

  int64_t step_count() const { return static_cast<int64_t>(step_count_[0]); }

 private:
  static bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  }

  struct Slot {
    nn::NamedParam<T> p;
    Tensor<T> m, v;
    double lr = 0.0;
    bool decay = false;
  };

  AdamConfig cfg_;
  std::vector<Slot> slots_;
  Tensor<T> step_count_{std::vector<int64_t>{1}};
};

}  // namespace sslts::train
