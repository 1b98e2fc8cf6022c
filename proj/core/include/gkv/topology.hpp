#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gkv/kv_block.hpp"
#include "gkv/tokenizer.hpp"

namespace gkv {

struct Segment {
  SegmentId id = 0;
  std::vector<TokenId> tokens;

  static Segment from_text(SegmentId id, std::string_view text);
};

// Directed structural dependency: `target` is re-encoded reading `source`.
struct Edge {
  SegmentId source = 0;
  SegmentId target = 0;

  auto operator<=>(const Edge&) const = default;
};

// Text segments plus directed source -> target edges. Immutable once built.
//
// Construction rejects duplicate segment ids, empty segments, self edges,
// edges to unknown ids and duplicate edges (all as InputError). Segments keep
// their input order; every derived id list is ascending.
class SegmentGraph {
 public:
  SegmentGraph() = default;
  SegmentGraph(std::vector<Segment> segments, std::vector<Edge> edges,
               std::vector<double> scores = {});

  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Edge>& edges() const { return edges_; }
  // Optional retrieval scores aligned with segments(); may be empty.
  const std::vector<double>& scores() const { return scores_; }

  std::size_t size() const { return segments_.size(); }
  bool has_edges() const { return !edges_.empty(); }
  bool contains(SegmentId id) const { return index_.contains(id); }
  const Segment& segment(SegmentId id) const;

  // All ids, ascending.
  std::vector<SegmentId> ids() const;
  // N(target): ids with an edge into `target`, ascending.
  std::vector<SegmentId> sources(SegmentId target) const;
  // Ids with at least one incoming edge, ascending.
  std::vector<SegmentId> targets() const;
  // Ids that are never a target, ascending.
  std::vector<SegmentId> pure_sources() const;
  bool is_target(SegmentId id) const;

  std::size_t max_length() const;
  std::size_t total_length() const;

  SegmentGraph with_edges(std::vector<Edge> edges) const;
  SegmentGraph without_edges() const { return with_edges({}); }

 private:
  std::vector<Segment> segments_;
  std::vector<Edge> edges_;
  std::vector<double> scores_;
  std::map<SegmentId, std::size_t> index_;
  std::map<SegmentId, std::vector<SegmentId>> incoming_;
};

// The m highest-scoring segments become sources; every remaining segment is a
// target with an edge from each of them. Ties on score go to the lower id.
// Requires scores.size() == segments.size() and 1 <= m < n.
SegmentGraph build_bipartite_topm(std::vector<Segment> segments,
                                  std::vector<double> scores, std::size_t m);

// Ids of the m sources chosen by build_bipartite_topm, ascending.
std::vector<SegmentId> select_topm(std::span<const SegmentId> ids,
                                   std::span<const double> scores,
                                   std::size_t m);

// Every segment is a target of every other segment; no self edges. n >= 2.
SegmentGraph build_full(std::vector<Segment> segments);

// leaf -> center for every leaf. Leaves must be non-empty and exclude center.
SegmentGraph build_star(Segment center, std::vector<Segment> leaves);

// Deterministic pseudo-text of exactly `words` whitespace-separated words,
// cut cyclically from a built-in passage at a seed-dependent offset.
std::string synth_text(std::size_t words, std::uint64_t seed);

// Star with center id 0 and leaves 1..num_leaves, each node holding
// synth_text(words_per_node, seed + node id) tokenized as bytes.
SegmentGraph synth_star(std::size_t num_leaves, std::size_t words_per_node,
                        std::uint64_t seed);

}  // namespace gkv
