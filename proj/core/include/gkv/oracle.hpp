#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "gkv/kv_cache.hpp"
#include "gkv/model.hpp"
#include "gkv/topology.hpp"

namespace gkv {

// Square boolean visibility matrix: allows(i, j) means row i may attend to
// key j.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t n) : n_(n), bits_(n * n, 0) {}

  static AttentionMask causal(std::size_t n);

  std::size_t size() const { return n_; }
  bool allows(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void allow(std::size_t i, std::size_t j) { bits_.at(i * n_ + j) = 1; }

  // Grows to n + extra rows; new rows see every earlier row and are causal
  // among themselves.
  void append_causal_rows(std::size_t extra);

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct ReferenceOutput {
  std::vector<LayerKV> layers;  // rotated keys / values for every row
  std::vector<float> logits;    // rows x vocab_size
  std::size_t rows = 0;
};

// Monolithic masked attention over one token sequence with explicit
// positions. Everything is recomputed from scratch in double precision with
// its own loop structure; nothing is shared with the cached engine path.
// Throws InputError on size mismatches or a mask row that sees no key.
ReferenceOutput full_attention_reference(std::span<const TokenId> tokens,
                                         std::span<const std::uint64_t> positions,
                                         const AttentionMask& mask,
                                         const ModelConfig& config,
                                         const Weights& weights,
                                         AttentionKnobs knobs = {});

// max_i |actual_i - reference_i| / max_i |reference_i|: the norm-wise
// relative error every oracle comparison is held to (1e-5 for fp32 runs).
double relative_error(std::span<const float> actual,
                      std::span<const float> reference);

inline constexpr double kOracleTolerance = 1e-5;

// A flattened sequence with positions and mask that reproduces what a
// topology's cache exposes to the query. `segment_rows` maps each segment to
// its [first_row, first_row + length) span.
struct ReferenceLayout {
  std::vector<TokenId> tokens;
  std::vector<std::uint64_t> positions;
  AttentionMask mask;
  std::map<SegmentId, std::pair<std::size_t, std::size_t>> segment_rows;
  std::uint64_t query_start = 0;

  // Adds query-like rows at contiguous positions after the last one added
  // (starting at query_start); they see every row and are causal.
  void append_tail(std::span<const TokenId> tail);
};

// Segments concatenated in `order`, positions 0.., plain causal mask.
ReferenceLayout sequential_layout(const SegmentGraph& graph,
                                  std::span<const SegmentId> order);

// Parallel / Graph-KV (single round) visibility: pure sources occupy their
// round-0 range and see only themselves; each target occupies its round-1
// range and sees all rows of its sources plus itself causally. Requires
// every source to be a pure source (bipartite, star, chain graphs).
ReferenceLayout graphkv_layout(const SegmentGraph& graph, const PEPlan& plan);

// Greedy decoding by repeated full recomputation over the layout.
std::vector<TokenId> reference_generate(ReferenceLayout layout,
                                        std::span<const TokenId> query,
                                        std::uint32_t max_new,
                                        const ModelConfig& config,
                                        const Weights& weights,
                                        bool stop_on_eot = true);

// ---------------------------------------------------------------------------
// Closed-form cost accounting.

// Segment lengths (by id) and edges; enough to price any topology.
struct GraphShape {
  std::map<SegmentId, std::uint64_t> lengths;
  std::vector<Edge> edges;

  static GraphShape of(const SegmentGraph& graph);
  // Star with `leaves` leaves of length leaf_len pointing at one center.
  static GraphShape star(std::size_t leaves, std::uint64_t leaf_len,
                         std::uint64_t center_len);
};

struct CostOptions {
  std::uint32_t rounds = 1;
  std::optional<std::uint64_t> L_override;
  std::uint64_t pe_offset = 0;
};

struct CostPrediction {
  std::uint64_t prefill_score_count = 0;
  std::uint64_t decode_score_count = 0;
  std::uint64_t score_count = 0;
  std::uint64_t peak_block_tokens = 0;
  std::uint64_t kv_entries = 0;
  std::uint64_t query_start = 0;
  std::uint64_t max_position_index = 0;
};

// t(t+1)/2: scores in causal self-attention over t tokens.
constexpr std::uint64_t causal_pairs(std::uint64_t t) { return t * (t + 1) / 2; }

// Exact counts for a run that emits gen_len tokens (all but the last are fed
// back). With T = total tokens, V = tokens visible to the query,
// f = max(gen_len - 1, 0):
//   prefill  sequential: S(T)
//            parallel:   sum_i S(len_i)
//            graphkv:    sum_i S(len_i)
//                        + rounds * sum_j (len_j * sum_{i in N(j)} len_i + S(len_j))
//   decode   q*V + S(q) + f*(V + q) + S(f)
CostPrediction cost_model(const GraphShape& shape, Topology topology,
                          std::uint64_t query_len, std::uint64_t gen_len,
                          const CostOptions& options = {});

// Largest neighbor count n in [0, limit] such that encoding a star of n
// leaves (all chunks chunk_len tokens) plus a query_len query keeps
// peak_block_tokens <= budget under `topology`.
std::size_t max_neighbors_within_budget(Topology topology,
                                        std::uint64_t chunk_len,
                                        std::uint64_t query_len,
                                        std::uint64_t budget,
                                        std::size_t limit);

}  // namespace gkv
