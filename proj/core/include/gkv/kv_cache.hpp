#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gkv/kv_block.hpp"
#include "gkv/topology.hpp"

namespace gkv {

enum class Topology : std::uint32_t {
  kSequential = 0,
  kParallel = 1,
  kGraphKV = 2,
};

std::string_view to_string(Topology t);
// Accepts "sequential", "parallel", "graphkv"; throws InputError otherwise.
Topology parse_topology(std::string_view name);

// Position ranges for a segment graph. Every round-r block starts at
// r * L + pe_offset, so all blocks of one round share the same range; the
// query continues contiguously at (rounds_used + 1) * L + pe_offset.
struct PEPlan {
  std::uint64_t L = 0;
  std::uint32_t rounds_used = 0;  // 0 when the graph has no edges
  std::uint64_t pe_offset = 0;
  std::uint64_t query_start = 0;
  std::map<std::pair<SegmentId, std::uint32_t>, std::uint64_t> starts;

  // Throws InputError if (segment, round) is not part of the plan.
  std::uint64_t start(SegmentId segment, std::uint32_t round) const;
};

// L = L_override or the graph's longest segment. Sources (and every segment's
// round-0 block) start at pe_offset; targets of round r start at r*L+offset.
// `rounds` only matters for graphs with edges.
PEPlan plan_positions(const SegmentGraph& graph,
                      std::optional<std::uint64_t> L_override = std::nullopt,
                      std::uint32_t rounds = 1, std::uint64_t pe_offset = 0);

// Blocks keyed by (segment_id, round). Blocks are immutable once stored and
// every listing is in ascending (segment_id, round) order. Reads may run
// concurrently; writes need a single writer.
class KVStore {
 public:
  using Key = std::pair<SegmentId, std::uint32_t>;
  using Selector = std::function<bool(const KVBlock&)>;

  // Throws InputError if the key is already present.
  void put(KVBlock block);
  bool contains(SegmentId segment, std::uint32_t round) const;
  // Throws InputError ("missing block") when absent.
  const KVBlock& get(SegmentId segment, std::uint32_t round) const;
  // Highest-round block of `segment` with round <= max_round.
  const KVBlock& latest(SegmentId segment, std::uint32_t max_round) const;

  // Blocks for which `selector` returns true; an empty selector selects none.
  std::vector<const KVBlock*> get_blocks(const Selector& selector) const;
  std::vector<const KVBlock*> all() const;

  std::size_t size() const { return blocks_.size(); }
  std::uint64_t total_tokens() const;

  bool operator==(const KVStore&) const = default;

 private:
  std::map<Key, KVBlock> blocks_;
};

// Prefill-side counters gathered while populating a cache.
struct EncodeStats {
  std::uint64_t score_count = 0;
  std::uint64_t peak_block_tokens = 0;

  void add(std::uint64_t scores, std::uint64_t block_tokens) {
    score_count += scores;
    if (block_tokens > peak_block_tokens) peak_block_tokens = block_tokens;
  }

  bool operator==(const EncodeStats&) const = default;
};

// A populated cache plus what the decoder needs to continue after it.
struct CacheState {
  Topology topology = Topology::kParallel;
  std::uint32_t rounds = 0;
  std::uint64_t L = 0;
  std::uint64_t query_start = 0;
  KVStore store;
  EncodeStats stats;

  bool operator==(const CacheState&) const = default;
};

// Cache file layout (little-endian):
//
//   "GKVC" | version u32 | config_hash u64 | L u64 | block_count u64
//   | topology u32 | rounds u32 | query_start u64
//   | prefill_score_count u64 | prefill_peak_block_tokens u64
//   then block_count times:
//     segment_id u32 | round u32 | position_start u64 | length u64
//     | for each layer: keys (length*kv_width f32) then values (same)
//
// Blocks are written in ascending (segment_id, round) order.
inline constexpr std::uint32_t kCacheVersion = 1;

std::vector<std::uint8_t> serialize_cache(const CacheState& cache,
                                          std::uint64_t config_hash);
// Throws FormatError on bad magic, version or config-hash mismatch,
// truncation or inconsistent block sizes.
CacheState deserialize_cache(std::span<const std::uint8_t> bytes,
                             std::uint64_t expected_config_hash,
                             std::uint32_t n_layers, std::uint32_t kv_width);

void save_cache(const std::string& path, const CacheState& cache,
                std::uint64_t config_hash);
CacheState load_cache(const std::string& path,
                      std::uint64_t expected_config_hash,
                      std::uint32_t n_layers, std::uint32_t kv_width);

}  // namespace gkv
