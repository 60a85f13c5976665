#include "sslts/data/folds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "sslts/core/rng.hpp"

namespace sslts::data {

FoldSplit make_folds(const DatasetManifest& manifest, int num_folds, uint64_t seed,
                     int val_fold) {
  if (num_folds < 2) throw ConfigError("make_folds: num_folds must be at least 2");
  if (val_fold < 0 || val_fold >= num_folds)
    throw ConfigError("make_folds: val_fold out of range");

  std::set<std::string> unique;
  for (const auto& r : manifest.records) unique.insert(r.subject_id);
  if (static_cast<int>(unique.size()) < num_folds)
    throw DataError("make_folds: " + std::to_string(unique.size()) + " subjects cannot fill " +
                    std::to_string(num_folds) + " folds");

  std::vector<std::string> subjects(unique.begin(), unique.end());
  Rng rng(seed);
  for (size_t i = subjects.size(); i > 1; --i)
    std::swap(subjects[i - 1], subjects[rng.next_u64() % i]);

  std::unordered_map<std::string, int> fold_of;
  for (size_t i = 0; i < subjects.size(); ++i)
    fold_of[subjects[i]] = static_cast<int>(i % static_cast<size_t>(num_folds));

  FoldSplit split;
  split.num_folds = num_folds;
  split.val_fold = val_fold;
  split.fold_assignment.reserve(manifest.records.size());
  for (const auto& r : manifest.records) split.fold_assignment.push_back(fold_of[r.subject_id]);
  return split;
}

std::map<double, std::vector<int64_t>> subsample_indices(int64_t n,
                                                         const std::vector<double>& fractions,
                                                         uint64_t seed) {
  for (double f : fractions)
    if (!(f > 0.0) || f > 1.0)
      throw ConfigError("subsample: fraction " + std::to_string(f) + " outside (0, 1]");

  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.next_u64() % i]);

  std::map<double, std::vector<int64_t>> out;
  for (double f : fractions) {
    const auto m = static_cast<int64_t>(f * static_cast<double>(n) + 1e-9);
    if (m < 1)
      throw DataError("subsample: fraction " + std::to_string(f) + " of " + std::to_string(n) +
                      " items is empty");
    std::vector<int64_t> sub(perm.begin(), perm.begin() + m);
    std::sort(sub.begin(), sub.end());
    out[f] = std::move(sub);
  }
  return out;
}

}  // namespace sslts::data
