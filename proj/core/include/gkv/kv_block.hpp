#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gkv {

using SegmentId = std::uint32_t;

// Keys and values of one layer, each [length x kv_width] row-major, where
// kv_width = n_heads * d_head. Keys are stored after rotary rotation.
struct LayerKV {
  std::vector<float> keys;
  std::vector<float> values;

  bool operator==(const LayerKV&) const = default;
};

// Cached keys/values for one segment at one update round. A block is
// position-committed: row i was rotated at position_start + i.
struct KVBlock {
  SegmentId segment_id = 0;
  std::uint32_t round = 0;
  std::uint64_t position_start = 0;
  std::uint64_t length = 0;
  std::vector<LayerKV> layers;

  std::uint64_t position_end() const { return position_start + length; }

  std::span<const float> keys(std::size_t layer) const {
    return layers.at(layer).keys;
  }
  std::span<const float> values(std::size_t layer) const {
    return layers.at(layer).values;
  }

  // Appends the rows of `tail` (which must start at position_end()).
  void append(const KVBlock& tail);

  bool operator==(const KVBlock&) const = default;
};

// Total cached token rows across a set of blocks.
std::uint64_t total_length(std::span<const KVBlock* const> blocks);

}  // namespace gkv
