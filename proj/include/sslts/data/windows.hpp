#pragma once

#include <cstdint>
#include <vector>

#include "sslts/data/manifest.hpp"

namespace sslts::data {

struct SignalWindow {
  Tensor<float> values;  // [channels, window_len]
  int64_t source_record = 0;
  int64_t start_sample = 0;
};

// Per-channel z-normalization using this window's own statistics; channels
// with (numerically) zero variance map to all zeros.
void normalize_window(Tensor<float>& values);

// Cuts every record into windows of window_len at the given stride (default
// stride = window_len gives non-overlapping coverage), normalizes each
// window, and drops trailing partial windows. Records shorter than
// window_len are skipped with a warning on stderr. Emission order is record
// order, then start offset.
std::vector<SignalWindow> window_and_normalize(const DatasetManifest& manifest,
                                               int64_t window_len, int64_t stride = 0);

// The label vector of the record a window came from.
inline const std::vector<double>& window_labels(const DatasetManifest& m, const SignalWindow& w) {
  return m.records[static_cast<size_t>(w.source_record)].labels;
}

}  // namespace sslts::data
