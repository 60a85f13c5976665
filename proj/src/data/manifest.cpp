#include "sslts/data/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sslts::data {

namespace fs = std::filesystem;

std::string DatasetManifest::resolve_path(int64_t record) const {
  const auto& p = records[static_cast<size_t>(record)].signal_path;
  if (fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).string();
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

int64_t parse_int(const std::string& s, const std::string& where) {
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw DataError(where + ": expected integer, got '" + s + "'");
  }
  if (pos != s.size()) throw DataError(where + ": expected integer, got '" + s + "'");
  return v;
}

double parse_num(const std::string& s, const std::string& where) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError(where + ": expected number, got '" + s + "'");
  }
  if (pos != s.size()) throw DataError(where + ": expected number, got '" + s + "'");
  return v;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);

  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path().string();

  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(lineno);
    auto fields = split(line, '\t');
    if (fields.size() != 6)
      throw DataError(where + ": expected 6 tab-separated fields, got " +
                      std::to_string(fields.size()));
    ManifestRecord r;
    r.signal_path = fields[0];
    r.num_channels = parse_int(fields[1], where);
    r.num_samples = parse_int(fields[2], where);
    r.sampling_rate_hz = parse_num(fields[3], where);
    if (fields[4] != "-")
      for (const auto& tok : split(fields[4], ','))
        r.labels.push_back(parse_num(tok, where + " label"));
    r.subject_id = fields[5];
    if (r.signal_path.empty()) throw DataError(where + ": empty signal path");
    if (r.num_channels <= 0 || r.num_samples <= 0)
      throw DataError(where + ": channels and samples must be positive");
    if (r.sampling_rate_hz <= 0.0) throw DataError(where + ": sampling rate must be positive");
    if (r.subject_id.empty()) throw DataError(where + ": empty subject id");
    m.records.push_back(std::move(r));
  }

  for (size_t i = 1; i < m.records.size(); ++i) {
    if (m.records[i].sampling_rate_hz != m.records[0].sampling_rate_hz)
      throw DataError("record " + std::to_string(i) + ": sampling rate " +
                      std::to_string(m.records[i].sampling_rate_hz) +
                      " differs from record 0's " +
                      std::to_string(m.records[0].sampling_rate_hz));
    if (m.records[i].num_channels != m.records[0].num_channels)
      throw DataError("record " + std::to_string(i) + ": channel count " +
                      std::to_string(m.records[i].num_channels) + " differs from record 0's " +
                      std::to_string(m.records[0].num_channels));
  }

  for (size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    const std::string p = m.resolve_path(static_cast<int64_t>(i));
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    if (ec) throw IoError("record " + std::to_string(i) + ": cannot stat signal file " + p);
    const uint64_t expect =
        static_cast<uint64_t>(r.num_channels) * static_cast<uint64_t>(r.num_samples) * 4u;
    if (size != expect)
      throw DataError("record " + std::to_string(i) + ": signal file " + p + " holds " +
                      std::to_string(size) + " bytes, manifest implies " +
                      std::to_string(expect));
  }
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& r : manifest.records) {
    out << r.signal_path << '\t' << r.num_channels << '\t' << r.num_samples << '\t';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.sampling_rate_hz);
    out << buf << '\t';
    if (r.labels.empty()) {
      out << '-';
    } else {
      for (size_t i = 0; i < r.labels.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", r.labels[i]);
        out << (i ? "," : "") << buf;
      }
    }
    out << '\t' << r.subject_id << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + path);
}

Tensor<float> read_signal(const DatasetManifest& manifest, int64_t record) {
  const auto& r = manifest.records[static_cast<size_t>(record)];
  const std::string p = manifest.resolve_path(record);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open signal file: " + p);
  Tensor<float> x({r.num_channels, r.num_samples});
  // Raw little-endian float32; this code targets little-endian hosts.
  in.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(x.numel() * 4));
  if (in.gcount() != static_cast<std::streamsize>(x.numel() * 4))
    throw DataError("signal file " + p + " is shorter than the manifest implies");
  return x;
}

void write_signal(const std::string& path, const Tensor<float>& signal) {
  if (signal.ndim() != 2) throw DataError("write_signal: expects [channels, samples]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write signal file: " + path);
  out.write(reinterpret_cast<const char*>(signal.data()),
            static_cast<std::streamsize>(signal.numel() * 4));
  if (!out) throw IoError("failed writing signal file: " + path);
}

}  // namespace sslts::data
