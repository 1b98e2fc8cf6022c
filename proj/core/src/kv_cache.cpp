#include "gkv/kv_cache.hpp"

#include "binary_io.hpp"
#include "gkv/errors.hpp"

namespace gkv {

void KVBlock::append(const KVBlock& tail) {
  if (tail.position_start != position_end()) {
    throw InvariantError("KVBlock::append: tail is not contiguous");
  }
  if (layers.empty()) layers.resize(tail.layers.size());
  if (tail.layers.size() != layers.size()) {
    throw InvariantError("KVBlock::append: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& dst = layers[l];
    const auto& src = tail.layers[l];
    dst.keys.insert(dst.keys.end(), src.keys.begin(), src.keys.end());
    dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
  }
  length += tail.length;
}

std::uint64_t total_length(std::span<const KVBlock* const> blocks) {
  std::uint64_t n = 0;
  for (const KVBlock* b : blocks) n += b->length;
  return n;
}

std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::kSequential: return "sequential";
    case Topology::kParallel: return "parallel";
    case Topology::kGraphKV: return "graphkv";
  }
  return "unknown";
}

Topology parse_topology(std::string_view name) {
  if (name == "sequential") return Topology::kSequential;
  if (name == "parallel") return Topology::kParallel;
  if (name == "graphkv") return Topology::kGraphKV;
  throw InputError("unknown topology '" + std::string(name) +
                   "' (expected sequential|parallel|graphkv)");
}

// ---------------------------------------------------------------------------

std::uint64_t PEPlan::start(SegmentId segment, std::uint32_t round) const {
  auto it = starts.find({segment, round});
  if (it == starts.end()) {
    throw InputError("PE plan has no entry for segment " +
                     std::to_string(segment) + " round " +
                     std::to_string(round));
  }
  return it->second;
}

PEPlan plan_positions(const SegmentGraph& graph,
                      std::optional<std::uint64_t> L_override,
                      std::uint32_t rounds, std::uint64_t pe_offset) {
  const std::uint64_t longest = graph.max_length();
  PEPlan plan;
  if (L_override) {
    if (*L_override < longest) {
      throw InputError("L override " + std::to_string(*L_override) +
                       " is shorter than the longest chunk (" +
                       std::to_string(longest) + " tokens)");
    }
    plan.L = *L_override;
  } else {
    plan.L = longest;
  }
  plan.pe_offset = pe_offset;
  plan.rounds_used = graph.has_edges() ? rounds : 0;
  for (SegmentId id : graph.ids()) plan.starts[{id, 0}] = pe_offset;
  const auto targets = graph.targets();
  for (std::uint32_t r = 1; r <= plan.rounds_used; ++r) {
    for (SegmentId id : targets) plan.starts[{id, r}] = r * plan.L + pe_offset;
  }
  plan.query_start = (plan.rounds_used + 1) * plan.L + pe_offset;
  return plan;
}

// ---------------------------------------------------------------------------

void KVStore::put(KVBlock block) {
  const Key key{block.segment_id, block.round};
  if (blocks_.contains(key)) {
    throw InputError("cache already holds segment " +
                     std::to_string(key.first) + " round " +
                     std::to_string(key.second));
  }
  blocks_.emplace(key, std::move(block));
}

bool KVStore::contains(SegmentId segment, std::uint32_t round) const {
  return blocks_.contains({segment, round});
}

const KVBlock& KVStore::get(SegmentId segment, std::uint32_t round) const {
  auto it = blocks_.find({segment, round});
  if (it == blocks_.end()) {
    throw InputError("missing block: segment " + std::to_string(segment) +
                     " round " + std::to_string(round));
  }
  return it->second;
}

const KVBlock& KVStore::latest(SegmentId segment,
                               std::uint32_t max_round) const {
  auto it = blocks_.upper_bound({segment, max_round});
  if (it == blocks_.begin() || std::prev(it)->first.first != segment) {
    throw InputError("missing block: segment " + std::to_string(segment) +
                     " has no round <= " + std::to_string(max_round));
  }
  return std::prev(it)->second;
}

std::vector<const KVBlock*> KVStore::get_blocks(const Selector& selector) const {
  std::vector<const KVBlock*> out;
  if (!selector) return out;
  for (const auto& [_, b] : blocks_) {
    if (selector(b)) out.push_back(&b);
  }
  return out;
}

std::vector<const KVBlock*> KVStore::all() const {
  return get_blocks([](const KVBlock&) { return true; });
}

std::uint64_t KVStore::total_tokens() const {
  std::uint64_t n = 0;
  for (const auto& [_, b] : blocks_) n += b.length;
  return n;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_cache(const CacheState& cache,
                                          std::uint64_t config_hash) {
  detail::ByteWriter w;
  w.raw("GKVC");
  w.u32(kCacheVersion);
  w.u64(config_hash);
  w.u64(cache.L);
  w.u64(cache.store.size());
  w.u32(static_cast<std::uint32_t>(cache.topology));
  w.u32(cache.rounds);
  w.u64(cache.query_start);
  w.u64(cache.stats.score_count);
  w.u64(cache.stats.peak_block_tokens);
  for (const KVBlock* b : cache.store.all()) {
    w.u32(b->segment_id);
    w.u32(b->round);
    w.u64(b->position_start);
    w.u64(b->length);
    for (const auto& layer : b->layers) {
      w.f32s(layer.keys);
      w.f32s(layer.values);
    }
  }
  return w.bytes();
}

CacheState deserialize_cache(std::span<const std::uint8_t> bytes,
                             std::uint64_t expected_config_hash,
                             std::uint32_t n_layers, std::uint32_t kv_width) {
  detail::ByteReader r(bytes, "cache");
  if (bytes.size() < 4 || r.raw(4) != "GKVC") {
    throw FormatError("cache: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCacheVersion) {
    throw FormatError("cache: version mismatch (file " +
                      std::to_string(version) + ")");
  }
  const std::uint64_t hash = r.u64();
  if (hash != expected_config_hash) {
    throw FormatError("cache: config-hash mismatch (cache was built for a "
                      "different model)");
  }
  CacheState cache;
  cache.L = r.u64();
  const std::uint64_t count = r.u64();
  const std::uint32_t topo = r.u32();
  if (topo > static_cast<std::uint32_t>(Topology::kGraphKV)) {
    throw FormatError("cache: unknown topology code " + std::to_string(topo));
  }
  cache.topology = static_cast<Topology>(topo);
  cache.rounds = r.u32();
  cache.query_start = r.u64();
  cache.stats.score_count = r.u64();
  cache.stats.peak_block_tokens = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    KVBlock b;
    b.segment_id = r.u32();
    b.round = r.u32();
    b.position_start = r.u64();
    b.length = r.u64();
    if (b.length * kv_width * 2 * n_layers * 4 > r.remaining()) {
      throw FormatError("cache: truncated file");
    }
    b.layers.resize(n_layers);
    for (auto& layer : b.layers) {
      layer.keys.resize(b.length * kv_width);
      layer.values.resize(b.length * kv_width);
      r.f32s(layer.keys);
      r.f32s(layer.values);
    }
    try {
      cache.store.put(std::move(b));
    } catch (const InputError& e) {
      throw FormatError(std::string("cache: ") + e.what());
    }
  }
  if (r.remaining() != 0) throw FormatError("cache: trailing bytes");
  return cache;
}

void save_cache(const std::string& path, const CacheState& cache,
                std::uint64_t config_hash) {
  detail::write_file(path, serialize_cache(cache, config_hash), "cache");
}

CacheState load_cache(const std::string& path,
                      std::uint64_t expected_config_hash,
                      std::uint32_t n_layers, std::uint32_t kv_width) {
  return deserialize_cache(detail::read_file(path, "cache"),
                           expected_config_hash, n_layers, kv_width);
}

}  // namespace gkv
