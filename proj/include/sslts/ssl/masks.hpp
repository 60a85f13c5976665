#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace sslts {

struct SpanMaskSpec {
  double midpoint_prob = 0.065;
  int64_t span_len = 10;
};

struct BlockMaskSpec {
  double context_frac_lo = 0.85;
  double context_frac_hi = 1.0;
  int num_pred_blocks = 4;
  double pred_frac_lo = 0.15;
  double pred_frac_hi = 0.20;
  int64_t min_context_tokens = 64;
};

struct BlockMask {
  int64_t ctx_start = 0;
  int64_t ctx_len = 0;
  std::vector<std::pair<int64_t, int64_t>> pred_blocks;  // (start, len)
  bool fallback_used = false;
};

// Span masking: each position is a span midpoint with probability
// midpoint_prob; a span_len run centered on each midpoint is masked, clipped
// at the sequence bounds. Returns one flag per position.
std::vector<uint8_t> sample_span_mask(int64_t seq_len, const SpanMaskSpec& spec, uint64_t seed);

// Multi-block masking: one contiguous context block whose length is a uniform
// fraction of the sequence (at least min_context_tokens), plus
// num_pred_blocks pairwise-disjoint prediction blocks that may overlap the
// context. Placement is rejection-sampled; after 100 failed draws per block
// the sampler falls back to minimum-length greedy placement and counts it.
BlockMask sample_block_mask(int64_t seq_len, const BlockMaskSpec& spec, uint64_t seed);

// Total number of greedy fallbacks since process start (diagnostic).
int64_t block_mask_fallback_count();

}  // namespace sslts
