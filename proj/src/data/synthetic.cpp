#include "sslts/data/synthetic.hpp"

#include <cmath>
#include <filesystem>

#include "sslts/core/rng.hpp"

namespace sslts::data {

namespace fs = std::filesystem;

SyntheticTask synthetic_task_from_string(const std::string& s) {
  if (s == "none") return SyntheticTask::kNone;
  if (s == "band_power") return SyntheticTask::kBandPower;
  if (s == "rate_class") return SyntheticTask::kRateClass;
  throw ConfigError("unknown synthetic task: " + s);
}

std::string synthetic_task_to_string(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::kNone: return "none";
    case SyntheticTask::kBandPower: return "band_power";
    default: return "rate_class";
  }
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  if (spec.channels < 1) throw ConfigError("synthetic: channels must be positive");
  if (spec.num_records < 1) throw ConfigError("synthetic: num_records must be positive");
  if (spec.length_samples < 1) throw ConfigError("synthetic: length_samples must be positive");
  if (spec.sampling_rate_hz <= 0.0) throw ConfigError("synthetic: sampling rate must be positive");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("synthetic: cannot create output directory " + out_dir);

  constexpr double kTwoPi = 2.0 * M_PI;
  // Base oscillation rates span [0.8, 2.5] Hz; the rate_class boundary is the
  // midpoint. The band component lives in [8, 16] Hz with amplitude drawn
  // from [0, 1]; band_power labels amplitudes above the distribution median.
  constexpr double kRateLo = 0.8, kRateHi = 2.5;
  constexpr double kBandLo = 8.0, kBandHi = 16.0;

  DatasetManifest m;
  m.base_dir = out_dir;
  for (int64_t rec = 0; rec < spec.num_records; ++rec) {
    Rng rng(derive_seed(spec.seed, {0xda7a, static_cast<uint64_t>(rec)}));
    const double base_rate = rng.uniform(kRateLo, kRateHi);
    const double band_amp = rng.uniform(0.0, 1.0);
    const double band_freq = rng.uniform(kBandLo, kBandHi);

    Tensor<float> sig({spec.channels, spec.length_samples});
    const double dt = 1.0 / spec.sampling_rate_hz;
    for (int64_t c = 0; c < spec.channels; ++c) {
      float* row = sig.data() + c * spec.length_samples;
      double harm_amp[3], harm_ph[3];
      for (int k = 0; k < 3; ++k) {
        harm_amp[k] = rng.uniform(0.7, 1.3) / static_cast<double>(k + 1);
        harm_ph[k] = rng.uniform(0.0, kTwoPi);
      }
      const double band_jitter = rng.uniform(0.8, 1.2);
      const double band_ph = rng.uniform(0.0, kTwoPi);
      // Pink-ish noise: octave-spaced random-phase tones with 1/sqrt(f) decay.
      double oct_ph[8];
      for (int o = 0; o < 8; ++o) oct_ph[o] = rng.uniform(0.0, kTwoPi);
      for (int64_t s = 0; s < spec.length_samples; ++s) {
        const double t = static_cast<double>(s) * dt;
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
          v += harm_amp[k] * std::sin(kTwoPi * (k + 1) * base_rate * t + harm_ph[k]);
        v += band_amp * band_jitter * std::sin(kTwoPi * band_freq * t + band_ph);
        double f = 0.5;
        for (int o = 0; o < 8; ++o, f *= 2.0)
          v += 0.15 / std::sqrt(f) * std::sin(kTwoPi * f * t + oct_ph[o]);
        v += 0.05 * rng.normal();
        row[s] = static_cast<float>(v);
      }
    }

    char name[32];
    std::snprintf(name, sizeof name, "record_%04lld.f32", static_cast<long long>(rec));
    write_signal((fs::path(out_dir) / name).string(), sig);

    ManifestRecord r;
    r.signal_path = name;
    r.num_channels = spec.channels;
    r.num_samples = spec.length_samples;
    r.sampling_rate_hz = spec.sampling_rate_hz;
    if (spec.task == SyntheticTask::kBandPower)
      r.labels = {band_amp > 0.5 ? 1.0 : 0.0};
    else if (spec.task == SyntheticTask::kRateClass)
      r.labels = {base_rate >= 0.5 * (kRateLo + kRateHi) ? 1.0 : 0.0};
    // Four records per synthetic subject keeps fold assignment non-trivial.
    r.subject_id = "subj" + std::to_string(rec / 4);
    m.records.push_back(std::move(r));
  }

  write_manifest((fs::path(out_dir) / "manifest.tsv").string(), m);
  return m;
}

}  // namespace sslts::data
