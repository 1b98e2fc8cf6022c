#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "gkv/kv_cache.hpp"
#include "gkv/model.hpp"
#include "gkv/topology.hpp"

namespace gkv {

struct EncoderOptions {
  std::optional<std::uint64_t> L_override;
  // Graph-KV update rounds. 1 is the evaluated setting; larger values make
  // round-r targets read the round-(r-1) blocks of their sources.
  std::uint32_t rounds = 1;
  // Shifts every shared range (and the query) right; 0 shares the range
  // from the first position.
  std::uint64_t pe_offset = 0;
  unsigned workers = 1;
};

// One causal prefill over the segments concatenated in `order`. Each segment
// gets a round-0 block recording its true absolute positions; the query
// starts right after the last segment.
CacheState encode_sequential(const SegmentGraph& graph,
                             std::span<const SegmentId> order,
                             const ModelConfig& config, const Weights& weights,
                             const EncoderOptions& options = {});

// Sequential encoding in ascending id order.
CacheState encode_sequential(const SegmentGraph& graph,
                             const ModelConfig& config, const Weights& weights,
                             const EncoderOptions& options = {});

// Every segment prefilled independently at the shared start position;
// edges are ignored.
CacheState encode_parallel(const SegmentGraph& graph, const ModelConfig& config,
                           const Weights& weights,
                           const EncoderOptions& options = {});

// Round 0 as encode_parallel, then each target is re-encoded at r*L reading
// the blocks of its sources in ascending id order. Targets only read blocks
// of the previous round, so target processing order never matters.
CacheState encode_graphkv(const SegmentGraph& graph, const ModelConfig& config,
                          const Weights& weights,
                          const EncoderOptions& options = {});

// Re-encodes `target` at `start` attending to `sources` (in the given order)
// and then causally to itself. Returns the new block tagged with `round`;
// counters are added to `stats` when given.
KVBlock update_target(const Segment& target,
                      std::span<const KVBlock* const> sources,
                      std::uint64_t start, std::uint32_t round,
                      const ModelConfig& config, const Weights& weights,
                      EncodeStats* stats = nullptr);

}  // namespace gkv
