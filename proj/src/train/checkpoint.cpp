#include "sslts/train/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sslts/common.hpp"

namespace sslts::train {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "sslts-checkpoint-v1";

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i)
    s += (i ? "x" : "") + std::to_string(shape[i]);
  return s.empty() ? "scalar" : s;
}

struct TensorLine {
  std::string name, group;
  std::vector<int64_t> shape;
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
};

}  // namespace

void save_checkpoint(const std::string& dir, const std::vector<nn::NamedState<float>>& entries,
                     const CheckpointMeta& meta) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("checkpoint: cannot create directory " + dir);

  std::ofstream man(fs::path(dir) / "manifest.txt");
  if (!man) throw IoError("checkpoint: cannot write manifest in " + dir);
  man << kVersion << '\n';
  man << "[meta]\n" << "objective=" << meta.objective_kind << '\n';
  man << "[provenance]\n";
  for (const auto& line : meta.provenance) man << line << '\n';
  man << "[config]\n" << meta.config_echo;
  if (!meta.config_echo.empty() && meta.config_echo.back() != '\n') man << '\n';
  man << "[tensors]\n";

  std::map<std::string, std::ofstream> blobs;
  for (const auto& e : entries) {
    man << e.name << '\t' << e.group << '\t';
    const auto& shape = e.tensor->shape();
    for (size_t i = 0; i < shape.size(); ++i) man << (i ? "," : "") << shape[i];
    man << '\n';
    auto it = blobs.find(e.group);
    if (it == blobs.end()) {
      auto path = fs::path(dir) / (e.group + ".bin");
      it = blobs.emplace(e.group, std::ofstream(path, std::ios::binary)).first;
      if (!it->second) throw IoError("checkpoint: cannot write " + path.string());
    }
    it->second.write(reinterpret_cast<const char*>(e.tensor->data()),
                     static_cast<std::streamsize>(e.tensor->numel() * 4));
  }
  for (auto& [group, out] : blobs)
    if (!out) throw IoError("checkpoint: failed writing group " + group);
  if (!man) throw IoError("checkpoint: failed writing manifest in " + dir);
}

namespace {

struct ParsedManifest {
  CheckpointMeta meta;
  std::vector<TensorLine> tensors;
};

ParsedManifest parse_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) throw IoError("checkpoint: cannot open manifest in " + dir);
  std::string line;
  if (!std::getline(in, line) || line != kVersion)
    throw DataError("checkpoint: version mismatch in " + dir + " (expected " + kVersion + ")");

  ParsedManifest pm;
  std::string section;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '[' && line.back() == ']') {
      section = line;
      continue;
    }
    if (section == "[meta]") {
      if (line.rfind("objective=", 0) == 0) pm.meta.objective_kind = line.substr(10);
    } else if (section == "[provenance]") {
      if (!line.empty()) pm.meta.provenance.push_back(line);
    } else if (section == "[config]") {
      pm.meta.config_echo += line;
      pm.meta.config_echo += '\n';
    } else if (section == "[tensors]") {
      if (line.empty()) continue;
      std::istringstream ls(line);
      TensorLine t;
      std::string shape;
      if (!std::getline(ls, t.name, '\t') || !std::getline(ls, t.group, '\t') ||
          !std::getline(ls, shape))
        throw DataError("checkpoint: malformed tensor line '" + line + "'");
      std::istringstream ss(shape);
      std::string tok;
      while (std::getline(ss, tok, ',')) t.shape.push_back(std::stoll(tok));
      pm.tensors.push_back(std::move(t));
    }
  }
  return pm;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
  return parse_manifest(dir).meta;
}

CheckpointMeta load_checkpoint(const std::string& dir, std::vector<nn::NamedState<float>>& dests,
                               const std::set<std::string>& groups) {
  auto pm = parse_manifest(dir);
  const auto selected = [&](const std::string& g) { return groups.empty() || groups.count(g); };

  std::map<std::string, nn::NamedState<float>*> by_name;
  for (auto& d : dests)
    if (selected(d.group)) by_name[d.name] = &d;

  // Blob length checks first, per group, so truncation is reported as such
  // rather than as a read failure partway through.
  std::map<std::string, int64_t> group_numel;
  for (const auto& t : pm.tensors) group_numel[t.group] += t.numel();
  for (const auto& [group, numel] : group_numel) {
    if (!selected(group)) continue;
    const auto path = fs::path(dir) / (group + ".bin");
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw IoError("checkpoint: cannot stat blob for group " + group);
    if (size != static_cast<uint64_t>(numel) * 4)
      throw DataError("checkpoint: group " + group + " blob holds " + std::to_string(size) +
                      " bytes, manifest implies " + std::to_string(numel * 4));
  }

  std::map<std::string, std::ifstream> blobs;
  std::set<std::string> restored;
  for (const auto& t : pm.tensors) {
    if (!selected(t.group)) continue;
    auto it = by_name.find(t.name);
    if (it == by_name.end())
      throw DataError("checkpoint: tensor " + t.name + " is not expected by this configuration");
    Tensor<float>& dst = *it->second->tensor;
    if (dst.shape() != t.shape)
      throw DataError("checkpoint: tensor " + t.name + " has shape " + shape_str(t.shape) +
                      ", expected " + shape_str(dst.shape()));
    auto bit = blobs.find(t.group);
    if (bit == blobs.end()) {
      auto path = fs::path(dir) / (t.group + ".bin");
      bit = blobs.emplace(t.group, std::ifstream(path, std::ios::binary)).first;
      if (!bit->second) throw IoError("checkpoint: cannot open blob " + path.string());
    }
    bit->second.read(reinterpret_cast<char*>(dst.data()),
                     static_cast<std::streamsize>(dst.numel() * 4));
    if (bit->second.gcount() != static_cast<std::streamsize>(dst.numel() * 4))
      throw DataError("checkpoint: group " + t.group + " blob ended early at tensor " + t.name);
    restored.insert(t.name);
  }

  for (const auto& [name, dest] : by_name)
    if (!restored.count(name))
      throw DataError("checkpoint: missing tensor " + name + " (group " + dest->group + ")");
  return pm.meta;
}

}  // namespace sslts::train
