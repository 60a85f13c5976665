#include "sslts/ssl/masks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "sslts/common.hpp"
#include "sslts/core/rng.hpp"

namespace sslts {

namespace {
std::atomic<int64_t> g_fallbacks{0};
}

int64_t block_mask_fallback_count() { return g_fallbacks.load(); }

std::vector<uint8_t> sample_span_mask(int64_t seq_len, const SpanMaskSpec& spec, uint64_t seed) {
  if (seq_len <= 0) throw DataError("sample_span_mask: non-positive sequence length");
  if (spec.midpoint_prob < 0.0 || spec.midpoint_prob > 1.0 || spec.span_len <= 0)
    throw ConfigError("sample_span_mask: invalid spec");
  Rng rng(seed);
  std::vector<uint8_t> mask(static_cast<size_t>(seq_len), 0);
  const int64_t half = spec.span_len / 2;
  for (int64_t t = 0; t < seq_len; ++t) {
    if (rng.uniform() >= spec.midpoint_prob) continue;
    const int64_t lo = std::max<int64_t>(0, t - half);
    const int64_t hi = std::min<int64_t>(seq_len, t - half + spec.span_len);
    for (int64_t i = lo; i < hi; ++i) mask[static_cast<size_t>(i)] = 1;
  }
  return mask;
}

namespace {

bool overlaps(const std::vector<std::pair<int64_t, int64_t>>& blocks, int64_t start, int64_t len) {
  for (const auto& [s, l] : blocks)
    if (start < s + l && s < start + len) return true;
  return false;
}

}  // namespace

BlockMask sample_block_mask(int64_t seq_len, const BlockMaskSpec& spec, uint64_t seed) {
  if (seq_len <= 0) throw DataError("sample_block_mask: non-positive sequence length");
  const int64_t min_pred = static_cast<int64_t>(std::ceil(spec.pred_frac_lo * static_cast<double>(seq_len)));
  const int64_t max_pred = static_cast<int64_t>(std::floor(spec.pred_frac_hi * static_cast<double>(seq_len)));
  if (min_pred <= 0 || max_pred < min_pred)
    throw ConfigError("sample_block_mask: prediction fraction range empty at seq_len " +
                      std::to_string(seq_len));
  if (static_cast<int64_t>(spec.num_pred_blocks) * min_pred > seq_len)
    throw ConfigError("sample_block_mask: prediction blocks cannot fit");

  Rng rng(seed);
  BlockMask out;
  const double frac = rng.uniform(spec.context_frac_lo, spec.context_frac_hi);
  int64_t clen = static_cast<int64_t>(std::ceil(frac * static_cast<double>(seq_len)));
  clen = std::min(clen, seq_len);
  clen = std::max(clen, std::min(spec.min_context_tokens, seq_len));
  out.ctx_len = clen;
  out.ctx_start = clen < seq_len ? rng.randint(seq_len - clen + 1) : 0;

  for (int b = 0; b < spec.num_pred_blocks; ++b) {
    const int64_t len = min_pred + (max_pred > min_pred ? rng.randint(max_pred - min_pred + 1) : 0);
    bool placed = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int64_t start = rng.randint(seq_len - len + 1);
      if (!overlaps(out.pred_blocks, start, len)) {
        out.pred_blocks.emplace_back(start, len);
        placed = true;
        break;
      }
    }
    if (!placed) {
      // Shrink fallback: retry at the minimum length with deterministic
      // first-fit; if even that cannot fit, shrink to the largest free gap.
      // Either way the fallback counter fires.
      out.fallback_used = true;
      g_fallbacks.fetch_add(1);
      for (int64_t start = 0; start + min_pred <= seq_len && !placed; ++start) {
        if (!overlaps(out.pred_blocks, start, min_pred)) {
          out.pred_blocks.emplace_back(start, min_pred);
          placed = true;
        }
      }
      if (!placed) {
        std::vector<uint8_t> used(static_cast<size_t>(seq_len), 0);
        for (const auto& [s, l] : out.pred_blocks)
          for (int64_t i = s; i < s + l; ++i) used[static_cast<size_t>(i)] = 1;
        int64_t best_start = -1, best_len = 0, run_start = 0, run_len = 0;
        for (int64_t i = 0; i <= seq_len; ++i) {
          if (i < seq_len && !used[static_cast<size_t>(i)]) {
            if (run_len == 0) run_start = i;
            ++run_len;
          } else {
            if (run_len > best_len) {
              best_len = run_len;
              best_start = run_start;
            }
            run_len = 0;
          }
        }
        if (best_len <= 0)
          throw DataError("sample_block_mask: no free positions for prediction block " +
                          std::to_string(b) + " at seq_len " + std::to_string(seq_len));
        out.pred_blocks.emplace_back(best_start, std::min(min_pred, best_len));
      }
    }
  }
  std::sort(out.pred_blocks.begin(), out.pred_blocks.end());
  return out;
}

}  // namespace sslts
