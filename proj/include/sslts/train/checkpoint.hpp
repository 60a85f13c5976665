#pragma once

#include <set>
#include <string>
#include <vector>

#include "sslts/nn/param.hpp"

namespace sslts::train {

struct CheckpointMeta {
  std::string objective_kind;
  std::vector<std::string> provenance;  // one line per training stage
  std::string config_echo;              // verbatim run configuration
};

// On-disk layout: <dir>/manifest.txt (version line, meta, tensor table) plus
// one raw little-endian float32 blob per parameter group, concatenated in
// manifest order. Re-saving loaded state reproduces the directory byte for
// byte.
void save_checkpoint(const std::string& dir, const std::vector<nn::NamedState<float>>& entries,
                     const CheckpointMeta& meta);

// Reads manifest.txt only (kind, provenance, config echo): no tensor I/O.
CheckpointMeta read_checkpoint_meta(const std::string& dir);

// Restores checkpoint tensors into the named destinations. When groups is
// non-empty, only tensors of those groups are restored and checked. Errors:
// version mismatch; blob length mismatch (names the group); first shape
// mismatch (names tensor and both shapes); tensors missing on either side.
CheckpointMeta load_checkpoint(const std::string& dir, std::vector<nn::NamedState<float>>& dests,
                               const std::set<std::string>& groups = {});

}  // namespace sslts::train
