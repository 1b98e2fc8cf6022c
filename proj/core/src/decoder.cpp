#include "gkv/decoder.hpp"

#include <algorithm>
#include <chrono>

#include "gkv/errors.hpp"

namespace gkv {

std::vector<const KVBlock*> visible_set(const CacheState& cache,
                                        const SegmentGraph& graph) {
  std::vector<const KVBlock*> out;
  out.reserve(graph.size());
  for (SegmentId id : graph.ids()) {
    std::uint32_t round = 0;
    if (cache.topology == Topology::kGraphKV && graph.is_target(id)) {
      round = cache.rounds;
    }
    out.push_back(&cache.store.get(id, round));
  }
  if (cache.topology == Topology::kSequential) {
    std::sort(out.begin(), out.end(), [](const KVBlock* a, const KVBlock* b) {
      return a->position_start < b->position_start;
    });
  }
  return out;
}

GenerationResult generate(const CacheState& cache, const SegmentGraph& graph,
                          std::span<const TokenId> query,
                          const ModelConfig& config, const Weights& weights,
                          const GenerateOptions& options) {
  if (query.empty()) throw InputError("generate: query is empty");
  using Clock = std::chrono::steady_clock;

  std::vector<const KVBlock*> visible = visible_set(cache, graph);
  const std::uint64_t query_start = options.query_start.value_or(cache.query_start);

  GenerationResult result;
  RunMetrics& m = result.metrics;
  m.prefill_score_count = cache.stats.score_count;
  m.peak_block_tokens = cache.stats.peak_block_tokens;

  const auto t0 = Clock::now();
  EncodeResult step = encode_block(query, query_start, visible, config, weights,
                                   EncodeMode::kLastLogits, options.knobs);
  m.decode_score_count += step.score_count;
  m.peak_block_tokens = std::max<std::uint64_t>(m.peak_block_tokens, query.size());
  KVBlock tail = std::move(step.block);
  visible.push_back(&tail);

  const std::size_t vocab = config.vocab_size;
  std::vector<float> logits(step.logits.begin(), step.logits.end());
  bool first = true;
  while (result.tokens.size() < options.max_new) {
    const TokenId next = argmax(logits);
    if (first) {
      m.ttft_ns = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0)
              .count());
      first = false;
    }
    if (options.stop_on_eot && next == kEotToken) break;
    if (tail.position_end() >= config.max_positions) {
      throw InputError("position overflow: generated token would take position " +
                       std::to_string(tail.position_end()));
    }
    result.tokens.push_back(next);
    if (options.keep_logits) result.step_logits.push_back(logits);
    if (result.tokens.size() == options.max_new) break;

    // `visible` ends with the tail, so the fed token reads every cached row,
    // the query, the earlier generated tokens and itself.
    const TokenId fed[1] = {next};
    step = encode_block(fed, tail.position_end(), visible, config, weights,
                        EncodeMode::kLastLogits, options.knobs);
    m.decode_score_count += step.score_count;
    m.peak_block_tokens = std::max<std::uint64_t>(m.peak_block_tokens, 1);
    tail.append(step.block);
    logits.assign(step.logits.begin(), step.logits.begin() + static_cast<std::ptrdiff_t>(vocab));
  }
  if (first) {
    m.ttft_ns = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0)
            .count());
  }

  m.score_count = m.prefill_score_count + m.decode_score_count;
  m.kv_entries_total = cache.store.total_tokens() + tail.length;
  m.max_position_index = query_start + query.size() + result.tokens.size() - 1;
  return result;
}

}  // namespace gkv
