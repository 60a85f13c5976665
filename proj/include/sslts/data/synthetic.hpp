#pragma once

#include <cstdint>
#include <string>

#include "sslts/data/manifest.hpp"

namespace sslts::data {

enum class SyntheticTask { kNone, kBandPower, kRateClass };

SyntheticTask synthetic_task_from_string(const std::string& s);
std::string synthetic_task_to_string(SyntheticTask t);

struct SyntheticSpec {
  int64_t num_records = 256;
  int64_t channels = 12;
  int64_t length_samples = 1800;
  uint64_t seed = 0;
  SyntheticTask task = SyntheticTask::kNone;
  double sampling_rate_hz = 240.0;
};

// Writes num_records .f32 signal files plus manifest.tsv into out_dir and
// returns the manifest. Each record is a sum of harmonics of a record-specific
// base rate, a band-limited component, and pink-ish noise; band_power labels
// whether the designated band carries above-median power, rate_class labels
// the base-rate bucket. Deterministic in the seed.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace sslts::data
