#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "sslts/core/rng.hpp"
#include "sslts/data/folds.hpp"
#include "sslts/data/manifest.hpp"
#include "sslts/data/synthetic.hpp"
#include "sslts/data/windows.hpp"

using namespace sslts;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sslts_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Writes one .f32 per tensor and a manifest that references them.
data::DatasetManifest write_corpus(const fs::path& dir, const std::vector<Tensor<float>>& sigs,
                                   const std::vector<std::string>& subjects,
                                   double rate_hz = 240.0) {
  data::DatasetManifest m;
  m.base_dir = dir.string();
  for (size_t i = 0; i < sigs.size(); ++i) {
    const std::string name = "sig" + std::to_string(i) + ".f32";
    data::write_signal((dir / name).string(), sigs[i]);
    data::ManifestRecord r;
    r.signal_path = name;
    r.num_channels = sigs[i].dim(0);
    r.num_samples = sigs[i].dim(1);
    r.sampling_rate_hz = rate_hz;
    r.subject_id = subjects[i];
    m.records.push_back(std::move(r));
  }
  data::write_manifest((dir / "manifest.tsv").string(), m);
  return m;
}

Tensor<float> random_signal(int64_t C, int64_t S, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> x({C, S});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  return x;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("manifest round trip preserves records and validates files") {
  auto dir = fresh_dir("roundtrip");
  std::vector<Tensor<float>> sigs{random_signal(3, 100, 1), random_signal(3, 80, 2)};
  auto written = write_corpus(dir, sigs, {"a", "b"});
  written.records[0].labels = {1.0, 0.0, 0.5};
  data::write_manifest((dir / "manifest.tsv").string(), written);

  auto m = data::load_manifest((dir / "manifest.tsv").string());
  REQUIRE(m.records.size() == 2);
  CHECK(m.records[0].signal_path == "sig0.f32");
  CHECK(m.records[0].num_channels == 3);
  CHECK(m.records[0].num_samples == 100);
  CHECK(m.records[0].sampling_rate_hz == 240.0);
  CHECK(m.records[0].labels == std::vector<double>{1.0, 0.0, 0.5});
  CHECK(m.records[1].labels.empty());
  CHECK(m.records[1].subject_id == "b");
  CHECK(m.num_channels() == 3);

  auto sig = data::read_signal(m, 1);
  CHECK(sig.dim(0) == 3);
  CHECK(sig.dim(1) == 80);
  CHECK(sig[5] == sigs[1][5]);
}

TEST_CASE("manifest loader reports line numbers and record indices in errors") {
  auto dir = fresh_dir("malformed");

  {
    std::ofstream out(dir / "bad_fields.tsv");
    out << "a.f32\t3\t100\t240\t-\ts\n";
    out << "b.f32\t3\t100\n";
  }
  CHECK_THROWS_WITH_AS(data::load_manifest((dir / "bad_fields.tsv").string()),
                       doctest::Contains("line 2"), DataError);

  {
    std::ofstream out(dir / "bad_int.tsv");
    out << "a.f32\tthree\t100\t240\t-\ts\n";
  }
  CHECK_THROWS_WITH_AS(data::load_manifest((dir / "bad_int.tsv").string()),
                       doctest::Contains("line 1"), DataError);

  CHECK_THROWS_AS(data::load_manifest((dir / "missing.tsv").string()), IoError);

  // Second referenced file is four bytes short: the error names record 1.
  std::vector<Tensor<float>> sigs{random_signal(2, 50, 3), random_signal(2, 50, 4)};
  write_corpus(dir, sigs, {"a", "b"});
  fs::resize_file(dir / "sig1.f32", 2 * 50 * 4 - 4);
  CHECK_THROWS_WITH_AS(data::load_manifest((dir / "manifest.tsv").string()),
                       doctest::Contains("record 1"), DataError);
}

TEST_CASE("manifest with zero records is valid; mixed rates or channels are not") {
  auto dir = fresh_dir("edge");
  {
    std::ofstream out(dir / "empty.tsv");
  }
  auto m = data::load_manifest((dir / "empty.tsv").string());
  CHECK(m.records.empty());

  std::vector<Tensor<float>> sigs{random_signal(2, 50, 5), random_signal(2, 50, 6)};
  auto written = write_corpus(dir, sigs, {"a", "b"});
  written.records[1].sampling_rate_hz = 500.0;
  data::write_manifest((dir / "manifest.tsv").string(), written);
  CHECK_THROWS_WITH_AS(data::load_manifest((dir / "manifest.tsv").string()),
                       doctest::Contains("sampling rate"), DataError);
}

TEST_CASE("windowing count, loss-free coverage, and short-record skipping") {
  auto dir = fresh_dir("windows");
  std::vector<Tensor<float>> sigs{random_signal(2, 1800, 7), random_signal(2, 1000, 8),
                                  random_signal(2, 400, 9)};
  auto m = write_corpus(dir, sigs, {"a", "b", "c"});

  auto ws = data::window_and_normalize(m, 600);
  // 1800 -> 3 windows, 1000 -> 1 window (400 dropped), 400 -> skipped.
  REQUIRE(ws.size() == 4);
  for (const auto& [rec, count] : std::vector<std::pair<int64_t, int64_t>>{{0, 3}, {1, 1}}) {
    int64_t covered = 0;
    for (const auto& w : ws)
      if (w.source_record == rec) covered += 600;
    const int64_t total = m.records[static_cast<size_t>(rec)].num_samples;
    CHECK(covered + total % 600 == total);
  }
  CHECK(ws[3].source_record == 1);
  CHECK(ws[2].start_sample == 1200);

  auto overlapped = data::window_and_normalize(m, 600, 300);
  CHECK(overlapped.size() == 5 + 2);  // (1800-600)/300+1 and (1000-600)/300+1

  CHECK_THROWS_AS(data::window_and_normalize(m, 0), ConfigError);
}

TEST_CASE("per-window normalization: unit statistics, constant channels, idempotence") {
  auto dir = fresh_dir("norm");
  Tensor<float> sig({3, 600});
  Rng rng(10);
  for (int64_t t = 0; t < 600; ++t) {
    sig[t] = static_cast<float>(3.0 + 2.0 * rng.normal());
    sig[600 + t] = 5.0f;  // constant channel
    sig[1200 + t] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  auto m = write_corpus(dir, {sig}, {"a"});
  auto ws = data::window_and_normalize(m, 600);
  REQUIRE(ws.size() == 1);

  for (int64_t c : {0, 2}) {
    double mean = 0, var = 0;
    for (int64_t t = 0; t < 600; ++t) mean += ws[0].values[c * 600 + t];
    mean /= 600;
    for (int64_t t = 0; t < 600; ++t) {
      const double d = ws[0].values[c * 600 + t] - mean;
      var += d * d;
    }
    var /= 600;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-5);
  }
  for (int64_t t = 0; t < 600; ++t) CHECK(ws[0].values[600 + t] == 0.0f);

  Tensor<float> again = ws[0].values;
  data::normalize_window(again);
  double max_change = 0;
  for (int64_t i = 0; i < again.numel(); ++i)
    max_change = std::max(max_change, std::abs(static_cast<double>(again[i]) - ws[0].values[i]));
  CHECK(max_change < 1e-5);
}

TEST_CASE("folds: subject-level, balanced, deterministic, seed-sensitive") {
  data::DatasetManifest m;
  for (int i = 0; i < 100; ++i)
    for (int rep = 0; rep < 2; ++rep) {
      data::ManifestRecord r;
      r.signal_path = "x.f32";
      r.num_channels = 1;
      r.num_samples = 1;
      r.sampling_rate_hz = 240.0;
      r.subject_id = "s" + std::to_string(i);
      m.records.push_back(std::move(r));
    }

  auto split = data::make_folds(m, 10, 33);
  REQUIRE(split.fold_assignment.size() == 200);

  std::map<std::string, std::set<int>> folds_of_subject;
  std::map<int, std::set<std::string>> subjects_of_fold;
  for (size_t i = 0; i < m.records.size(); ++i) {
    folds_of_subject[m.records[i].subject_id].insert(split.fold_assignment[i]);
    subjects_of_fold[split.fold_assignment[i]].insert(m.records[i].subject_id);
  }
  for (const auto& [subj, folds] : folds_of_subject) CHECK(folds.size() == 1);
  REQUIRE(subjects_of_fold.size() == 10);
  for (const auto& [fold, subjects] : subjects_of_fold) CHECK(subjects.size() == 10);

  auto same = data::make_folds(m, 10, 33);
  CHECK(same.fold_assignment == split.fold_assignment);
  auto other = data::make_folds(m, 10, 34);
  CHECK(other.fold_assignment != split.fold_assignment);

  // 10 subjects over 10 folds: exactly one subject per fold.
  data::DatasetManifest ten;
  ten.records.assign(m.records.begin(), m.records.begin() + 20);
  auto pigeon = data::make_folds(ten, 10, 1);
  std::set<int> used(pigeon.fold_assignment.begin(), pigeon.fold_assignment.end());
  CHECK(used.size() == 10);

  data::DatasetManifest one;
  one.records.assign(m.records.begin(), m.records.begin() + 2);
  CHECK_THROWS_AS(data::make_folds(one, 2, 1), DataError);
  CHECK_THROWS_AS(data::make_folds(m, 1, 1), ConfigError);
  CHECK_THROWS_AS(data::make_folds(m, 10, 1, 10), ConfigError);
}

TEST_CASE("subsampling is nested, deterministic, and rejects empty subsets") {
  auto subs = data::subsample_indices(1024, {1.0, 0.5, 0.25}, 5);
  REQUIRE(subs.size() == 3);
  CHECK(subs[1.0].size() == 1024);
  CHECK(subs[0.5].size() == 512);
  CHECK(subs[0.25].size() == 256);

  std::set<int64_t> half(subs[0.5].begin(), subs[0.5].end());
  for (int64_t i : subs[0.25]) CHECK(half.count(i) == 1);
  for (int64_t i = 0; i < 1024; ++i) CHECK(subs[1.0][static_cast<size_t>(i)] == i);

  auto again = data::subsample_indices(1024, {0.5}, 5);
  CHECK(again[0.5] == subs[0.5]);
  auto other = data::subsample_indices(1024, {0.5}, 6);
  CHECK(other[0.5] != subs[0.5]);

  CHECK_THROWS_AS(data::subsample_indices(1024, {1.0 / 2048.0}, 5), DataError);
  CHECK_THROWS_AS(data::subsample_indices(1024, {0.0}, 5), ConfigError);
  CHECK_THROWS_AS(data::subsample_indices(1024, {1.5}, 5), ConfigError);
}

TEST_CASE("synthetic generation is byte-identical under one seed") {
  auto dir1 = fresh_dir("synth1");
  auto dir2 = fresh_dir("synth2");
  data::SyntheticSpec spec;
  spec.num_records = 8;
  spec.channels = 12;
  spec.length_samples = 1800;
  spec.seed = 7;
  auto m1 = data::generate_synthetic(spec, dir1.string());
  auto m2 = data::generate_synthetic(spec, dir2.string());
  REQUIRE(m1.records.size() == 8);
  for (int i = 0; i < 8; ++i) {
    const auto a = slurp(dir1 / m1.records[static_cast<size_t>(i)].signal_path);
    const auto b = slurp(dir2 / m2.records[static_cast<size_t>(i)].signal_path);
    CHECK(a == b);
  }

  // The written manifest passes eager validation on load.
  auto loaded = data::load_manifest((dir1 / "manifest.tsv").string());
  CHECK(loaded.records.size() == 8);
  CHECK(loaded.records[0].num_channels == 12);
  CHECK(loaded.records[0].labels.empty());

  data::SyntheticSpec bad = spec;
  bad.channels = 0;
  CHECK_THROWS_AS(data::generate_synthetic(bad, dir1.string()), ConfigError);
}

TEST_CASE("synthetic task labels are near-balanced and windows are learnable-scale") {
  for (auto task : {data::SyntheticTask::kBandPower, data::SyntheticTask::kRateClass}) {
    CAPTURE(data::synthetic_task_to_string(task));
    auto dir = fresh_dir("prev_" + data::synthetic_task_to_string(task));
    data::SyntheticSpec spec;
    spec.num_records = 256;
    spec.channels = 1;
    spec.length_samples = 128;
    spec.seed = 11;
    spec.task = task;
    auto m = data::generate_synthetic(spec, dir.string());
    double ones = 0;
    for (const auto& r : m.records) {
      REQUIRE(r.labels.size() == 1);
      CHECK((r.labels[0] == 0.0 || r.labels[0] == 1.0));
      ones += r.labels[0];
    }
    const double prevalence = ones / 256.0;
    CHECK(prevalence >= 0.4);
    CHECK(prevalence <= 0.6);
  }
}

TEST_CASE("synthetic records group into multi-record subjects") {
  auto dir = fresh_dir("subjects");
  data::SyntheticSpec spec;
  spec.num_records = 12;
  spec.channels = 2;
  spec.length_samples = 64;
  auto m = data::generate_synthetic(spec, dir.string());
  std::set<std::string> subjects;
  for (const auto& r : m.records) subjects.insert(r.subject_id);
  CHECK(subjects.size() == 3);
  CHECK(m.records[0].subject_id == m.records[3].subject_id);
  CHECK(m.records[0].subject_id != m.records[4].subject_id);
}
