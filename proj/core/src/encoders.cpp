#include "gkv/encoders.hpp"

#include <algorithm>
#include <set>

#include "gkv/errors.hpp"
#include "gkv/parallel.hpp"

namespace gkv {

namespace {

void require_segments(const SegmentGraph& graph) {
  if (graph.size() == 0) throw InputError("graph has no segments");
}

// Round-0 blocks for every segment at `start`, stored in id order.
void prefill_round0(const SegmentGraph& graph, std::uint64_t start,
                    const ModelConfig& config, const Weights& weights,
                    unsigned workers, CacheState& cache) {
  const auto ids = graph.ids();
  std::vector<EncodeResult> results(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    results[i] = encode_block(graph.segment(ids[i]).tokens, start, {}, config,
                              weights, EncodeMode::kPrefill);
  });
  for (std::size_t i = 0; i < ids.size(); ++i) {
    results[i].block.segment_id = ids[i];
    results[i].block.round = 0;
    cache.stats.add(results[i].score_count, results[i].block.length);
    cache.store.put(std::move(results[i].block));
  }
}

}  // namespace

CacheState encode_sequential(const SegmentGraph& graph,
                             std::span<const SegmentId> order,
                             const ModelConfig& config, const Weights& weights,
                             const EncoderOptions& /*options*/) {
  require_segments(graph);
  std::set<SegmentId> seen;
  for (SegmentId id : order) {
    if (!graph.contains(id) || !seen.insert(id).second) {
      throw InputError("sequential order must list every segment exactly once");
    }
  }
  if (seen.size() != graph.size()) {
    throw InputError("sequential order must list every segment exactly once");
  }

  std::vector<TokenId> tokens;
  tokens.reserve(graph.total_length());
  for (SegmentId id : order) {
    const auto& t = graph.segment(id).tokens;
    tokens.insert(tokens.end(), t.begin(), t.end());
  }
  EncodeResult run =
      encode_block(tokens, 0, {}, config, weights, EncodeMode::kPrefill);

  CacheState cache;
  cache.topology = Topology::kSequential;
  cache.rounds = 0;
  cache.L = graph.max_length();
  cache.query_start = tokens.size();
  cache.stats.add(run.score_count, tokens.size());

  const std::size_t width = config.d_model;
  std::uint64_t offset = 0;
  for (SegmentId id : order) {
    const std::uint64_t len = graph.segment(id).tokens.size();
    KVBlock b;
    b.segment_id = id;
    b.round = 0;
    b.position_start = offset;
    b.length = len;
    b.layers.resize(config.n_layers);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
      const auto& src = run.block.layers[l];
      const auto first = static_cast<std::ptrdiff_t>(offset * width);
      const auto last = static_cast<std::ptrdiff_t>((offset + len) * width);
      b.layers[l].keys.assign(src.keys.begin() + first, src.keys.begin() + last);
      b.layers[l].values.assign(src.values.begin() + first,
                                src.values.begin() + last);
    }
    cache.store.put(std::move(b));
    offset += len;
  }
  return cache;
}

CacheState encode_sequential(const SegmentGraph& graph,
                             const ModelConfig& config, const Weights& weights,
                             const EncoderOptions& options) {
  const auto ids = graph.ids();
  return encode_sequential(graph, ids, config, weights, options);
}

CacheState encode_parallel(const SegmentGraph& graph, const ModelConfig& config,
                           const Weights& weights,
                           const EncoderOptions& options) {
  require_segments(graph);
  const PEPlan plan = plan_positions(graph.without_edges(), options.L_override,
                                     0, options.pe_offset);
  CacheState cache;
  cache.topology = Topology::kParallel;
  cache.rounds = 0;
  cache.L = plan.L;
  cache.query_start = plan.query_start;
  prefill_round0(graph, plan.pe_offset, config, weights, options.workers, cache);
  return cache;
}

KVBlock update_target(const Segment& target,
                      std::span<const KVBlock* const> sources,
                      std::uint64_t start, std::uint32_t round,
                      const ModelConfig& config, const Weights& weights,
                      EncodeStats* stats) {
  EncodeResult r = encode_block(target.tokens, start, sources, config, weights,
                                EncodeMode::kPrefill);
  r.block.segment_id = target.id;
  r.block.round = round;
  if (stats) stats->add(r.score_count, r.block.length);
  return std::move(r.block);
}

CacheState encode_graphkv(const SegmentGraph& graph, const ModelConfig& config,
                          const Weights& weights,
                          const EncoderOptions& options) {
  require_segments(graph);
  if (options.rounds < 1) throw InputError("graphkv needs rounds >= 1");
  const PEPlan plan = plan_positions(graph, options.L_override, options.rounds,
                                     options.pe_offset);
  CacheState cache;
  cache.topology = Topology::kGraphKV;
  cache.rounds = plan.rounds_used;
  cache.L = plan.L;
  cache.query_start = plan.query_start;
  prefill_round0(graph, plan.pe_offset, config, weights, options.workers,
                 cache);

  const auto targets = graph.targets();
  for (std::uint32_t round = 1; round <= plan.rounds_used; ++round) {
    std::vector<EncodeResult> results(targets.size());
    parallel_for(targets.size(), options.workers, [&](std::size_t i) {
      std::vector<const KVBlock*> sources;
      for (SegmentId src : graph.sources(targets[i])) {
        sources.push_back(&cache.store.latest(src, round - 1));
      }
      results[i] = encode_block(graph.segment(targets[i]).tokens,
                                plan.start(targets[i], round), sources, config,
                                weights, EncodeMode::kPrefill);
    });
    for (std::size_t i = 0; i < targets.size(); ++i) {
      results[i].block.segment_id = targets[i];
      results[i].block.round = round;
      cache.stats.add(results[i].score_count, results[i].block.length);
      cache.store.put(std::move(results[i].block));
    }
  }
  return cache;
}

}  // namespace gkv
