#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gkv/kv_cache.hpp"
#include "gkv/model.hpp"
#include "gkv/topology.hpp"

namespace gkv {

struct RunMetrics {
  // Wall clock from the start of query prefill to the first emitted token.
  std::uint64_t ttft_ns = 0;
  // prefill_score_count + decode_score_count.
  std::uint64_t score_count = 0;
  std::uint64_t prefill_score_count = 0;
  std::uint64_t decode_score_count = 0;
  // Most tokens pushed through a single encode_block call (prefill or decode).
  std::uint64_t peak_block_tokens = 0;
  // Cached token rows at the end of the run: every stored block plus the
  // query and the generated tokens that were fed back.
  std::uint64_t kv_entries_total = 0;
  // Highest position assigned to any query or emitted token.
  std::uint64_t max_position_index = 0;
};

struct GenerationResult {
  std::vector<TokenId> tokens;  // emitted tokens; a stopping EOT is excluded
  RunMetrics metrics;
  // Logits behind every emitted token, when GenerateOptions::keep_logits.
  std::vector<std::vector<float>> step_logits;
};

struct GenerateOptions {
  std::uint32_t max_new = 16;
  // Applied to every decode-time attention row (query and generated tokens).
  AttentionKnobs knobs;
  // Defaults to the cache's own query_start.
  std::optional<std::uint64_t> query_start;
  bool stop_on_eot = true;
  bool keep_logits = false;
};

// Blocks the query reads, in canonical order:
//   sequential -> the run's blocks ordered by position;
//   parallel   -> every round-0 block;
//   graphkv    -> the final-round block of every target and the round-0
//                 block of every pure source.
// Each segment contributes exactly one block. Throws InputError when a
// required block is absent.
std::vector<const KVBlock*> visible_set(const CacheState& cache,
                                        const SegmentGraph& graph);

// Greedy generation after `cache`. The query is encoded at query_start
// against visible_set(); each emitted token takes the next position and,
// if generation continues, is fed back attending to the visible set plus
// all query/generated rows. Stops after max_new tokens or on EOT.
GenerationResult generate(const CacheState& cache, const SegmentGraph& graph,
                          std::span<const TokenId> query,
                          const ModelConfig& config, const Weights& weights,
                          const GenerateOptions& options = {});

}  // namespace gkv
