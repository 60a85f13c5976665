#include "sslts/data/windows.hpp"

#include <cmath>
#include <cstdio>

namespace sslts::data {

void normalize_window(Tensor<float>& values) {
  const int64_t C = values.dim(0), W = values.dim(1);
  for (int64_t c = 0; c < C; ++c) {
    float* row = values.data() + c * W;
    double mean = 0.0;
    for (int64_t t = 0; t < W; ++t) mean += row[t];
    mean /= static_cast<double>(W);
    double var = 0.0;
    for (int64_t t = 0; t < W; ++t) {
      const double d = row[t] - mean;
      var += d * d;
    }
    var /= static_cast<double>(W);
    if (var <= 1e-20) {
      for (int64_t t = 0; t < W; ++t) row[t] = 0.0f;
      continue;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (int64_t t = 0; t < W; ++t) row[t] = static_cast<float>((row[t] - mean) * inv);
  }
}

std::vector<SignalWindow> window_and_normalize(const DatasetManifest& manifest,
                                               int64_t window_len, int64_t stride) {
  if (stride == 0) stride = window_len;
  if (window_len < 1 || stride < 1)
    throw ConfigError("window_len and stride must be positive");

  std::vector<SignalWindow> out;
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.num_samples < window_len) {
      std::fprintf(stderr, "warning: record %zu has %lld samples, shorter than window %lld; skipped\n",
                   i, static_cast<long long>(r.num_samples), static_cast<long long>(window_len));
      continue;
    }
    const Tensor<float> sig = read_signal(manifest, static_cast<int64_t>(i));
    const int64_t C = sig.dim(0), S = sig.dim(1);
    for (int64_t start = 0; start + window_len <= S; start += stride) {
      SignalWindow w;
      w.values = Tensor<float>({C, window_len});
      for (int64_t c = 0; c < C; ++c)
        std::copy(sig.data() + c * S + start, sig.data() + c * S + start + window_len,
                  w.values.data() + c * window_len);
      normalize_window(w.values);
      w.source_record = static_cast<int64_t>(i);
      w.start_sample = start;
      out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace sslts::data
