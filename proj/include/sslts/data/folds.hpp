#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "sslts/data/manifest.hpp"

namespace sslts::data {

struct FoldSplit {
  std::vector<int> fold_assignment;  // record index -> fold id
  int num_folds = 0;
  int val_fold = 0;

  bool is_validation(int64_t record) const {
    return fold_assignment[static_cast<size_t>(record)] == val_fold;
  }
};

// Subject-level fold assignment: subjects are shuffled deterministically by
// seed and dealt round-robin, so all records of one subject share a fold and
// fold sizes differ by at most one subject.
FoldSplit make_folds(const DatasetManifest& manifest, int num_folds, uint64_t seed,
                     int val_fold = 0);

// Nested deterministic subsets: one shared shuffle of [0, n), each fraction
// keeping the first floor(fraction * n) entries, so smaller fractions are
// subsets of larger ones. Indices within each subset are sorted.
std::map<double, std::vector<int64_t>> subsample_indices(int64_t n,
                                                         const std::vector<double>& fractions,
                                                         uint64_t seed);

}  // namespace sslts::data
