#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslts/common.hpp"
#include "sslts/core/tensor.hpp"

namespace sslts::data {

struct ManifestRecord {
  std::string signal_path;  // relative paths resolve against the manifest dir
  int64_t num_channels = 0;
  int64_t num_samples = 0;
  double sampling_rate_hz = 0.0;
  std::vector<double> labels;  // empty when the manifest field is '-'
  std::string subject_id;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::string base_dir;  // directory the manifest was loaded from

  int64_t num_channels() const { return records.empty() ? 0 : records[0].num_channels; }
  double sampling_rate_hz() const { return records.empty() ? 0.0 : records[0].sampling_rate_hz; }
  std::string resolve_path(int64_t record) const;
};

// Parses the tab-separated manifest and validates every invariant eagerly:
// field count and types per line, one sampling rate and channel count across
// records, and the byte length of every referenced signal file.
DatasetManifest load_manifest(const std::string& path);

// Writes records in the same tab-separated layout load_manifest reads.
void write_manifest(const std::string& path, const DatasetManifest& manifest);

// Reads one record's .f32 signal file as a [channels, samples] tensor
// (channel-major on disk, little-endian float32).
Tensor<float> read_signal(const DatasetManifest& manifest, int64_t record);

// Writes a [channels, samples] tensor in the .f32 layout read_signal expects.
void write_signal(const std::string& path, const Tensor<float>& signal);

}  // namespace sslts::data
