#include "gkv/topology.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "gkv/errors.hpp"

namespace gkv {

Segment Segment::from_text(SegmentId id, std::string_view text) {
  return Segment{id, tokenize(text)};
}

SegmentGraph::SegmentGraph(std::vector<Segment> segments,
                           std::vector<Edge> edges, std::vector<double> scores)
    : segments_(std::move(segments)),
      edges_(std::move(edges)),
      scores_(std::move(scores)) {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (s.tokens.empty()) {
      throw InputError("graph: segment " + std::to_string(s.id) +
                       " has no tokens");
    }
    if (!index_.emplace(s.id, i).second) {
      throw InputError("graph: duplicate segment id " + std::to_string(s.id));
    }
  }
  if (!scores_.empty() && scores_.size() != segments_.size()) {
    throw InputError("graph: scores must align with segments");
  }
  std::set<Edge> seen;
  for (const Edge& e : edges_) {
    if (e.source == e.target) {
      throw InputError("graph: self edge on segment " +
                       std::to_string(e.source));
    }
    if (!contains(e.source) || !contains(e.target)) {
      throw InputError("graph: edge " + std::to_string(e.source) + "->" +
                       std::to_string(e.target) + " names an unknown segment");
    }
    if (!seen.insert(e).second) {
      throw InputError("graph: duplicate edge " + std::to_string(e.source) +
                       "->" + std::to_string(e.target));
    }
    incoming_[e.target].push_back(e.source);
  }
  for (auto& [_, srcs] : incoming_) std::sort(srcs.begin(), srcs.end());
}

const Segment& SegmentGraph::segment(SegmentId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw InputError("graph: unknown segment " + std::to_string(id));
  }
  return segments_[it->second];
}

std::vector<SegmentId> SegmentGraph::ids() const {
  std::vector<SegmentId> out;
  out.reserve(index_.size());
  for (const auto& [id, _] : index_) out.push_back(id);
  return out;
}

std::vector<SegmentId> SegmentGraph::sources(SegmentId target) const {
  auto it = incoming_.find(target);
  return it == incoming_.end() ? std::vector<SegmentId>{} : it->second;
}

std::vector<SegmentId> SegmentGraph::targets() const {
  std::vector<SegmentId> out;
  for (const auto& [id, _] : incoming_) out.push_back(id);
  return out;
}

std::vector<SegmentId> SegmentGraph::pure_sources() const {
  std::vector<SegmentId> out;
  for (const auto& [id, _] : index_) {
    if (!is_target(id)) out.push_back(id);
  }
  return out;
}

bool SegmentGraph::is_target(SegmentId id) const {
  return incoming_.contains(id);
}

std::size_t SegmentGraph::max_length() const {
  std::size_t m = 0;
  for (const auto& s : segments_) m = std::max(m, s.tokens.size());
  return m;
}

std::size_t SegmentGraph::total_length() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.tokens.size();
  return n;
}

SegmentGraph SegmentGraph::with_edges(std::vector<Edge> edges) const {
  return SegmentGraph(segments_, std::move(edges), scores_);
}

// ---------------------------------------------------------------------------

std::vector<SegmentId> select_topm(std::span<const SegmentId> ids,
                                   std::span<const double> scores,
                                   std::size_t m) {
  if (scores.size() != ids.size()) {
    throw InputError("top-m: need one score per segment");
  }
  if (m < 1 || m >= ids.size()) {
    throw InputError("top-m: m must satisfy 1 <= m < n (m=" +
                     std::to_string(m) + ", n=" + std::to_string(ids.size()) +
                     ")");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<SegmentId> chosen;
  for (std::size_t i = 0; i < m; ++i) chosen.push_back(ids[order[i]]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SegmentGraph build_bipartite_topm(std::vector<Segment> segments,
                                  std::vector<double> scores, std::size_t m) {
  std::vector<SegmentId> ids;
  for (const auto& s : segments) ids.push_back(s.id);
  const auto chosen = select_topm(ids, scores, m);
  std::vector<SegmentId> rest;
  for (SegmentId id : ids) {
    if (!std::binary_search(chosen.begin(), chosen.end(), id)) {
      rest.push_back(id);
    }
  }
  std::sort(rest.begin(), rest.end());
  std::vector<Edge> edges;
  for (SegmentId tgt : rest) {
    for (SegmentId src : chosen) edges.push_back({src, tgt});
  }
  return SegmentGraph(std::move(segments), std::move(edges), std::move(scores));
}

SegmentGraph build_full(std::vector<Segment> segments) {
  if (segments.size() < 2) throw InputError("full topology needs n >= 2");
  std::vector<SegmentId> ids;
  for (const auto& s : segments) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  std::vector<Edge> edges;
  for (SegmentId tgt : ids) {
    for (SegmentId src : ids) {
      if (src != tgt) edges.push_back({src, tgt});
    }
  }
  return SegmentGraph(std::move(segments), std::move(edges));
}

SegmentGraph build_star(Segment center, std::vector<Segment> leaves) {
  if (leaves.empty()) throw InputError("star: needs at least one leaf");
  std::vector<Edge> edges;
  for (const auto& leaf : leaves) {
    if (leaf.id == center.id) {
      throw InputError("star: center " + std::to_string(center.id) +
                       " is also listed as a leaf");
    }
    edges.push_back({leaf.id, center.id});
  }
  std::sort(edges.begin(), edges.end());
  leaves.insert(leaves.begin(), std::move(center));
  return SegmentGraph(std::move(leaves), std::move(edges));
}

namespace {

constexpr std::string_view kPassage =
    "we set out to see how a small net of text can help a model read what "
    "one doc has to say to the next a link from one node to its hub lets "
    "the hub take in all the facts its peers hold and so the map of who "
    "cites whom can guide the read of each page in turn it is a way to "
    "add the shape of the data back to a flat list of text and to keep the "
    "cost low as the set of docs grows";

std::vector<std::string_view> passage_words() {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < kPassage.size()) {
    const std::size_t j = kPassage.find(' ', i);
    const std::size_t end = j == std::string_view::npos ? kPassage.size() : j;
    words.push_back(kPassage.substr(i, end - i));
    i = end + 1;
  }
  return words;
}

}  // namespace

std::string synth_text(std::size_t words, std::uint64_t seed) {
  static const std::vector<std::string_view> kWords = passage_words();
  std::string out;
  const std::size_t start = static_cast<std::size_t>(
      (seed * 0x9E3779B97F4A7C15ull >> 32) % kWords.size());
  for (std::size_t w = 0; w < words; ++w) {
    if (w) out.push_back(' ');
    out.append(kWords[(start + w) % kWords.size()]);
  }
  return out;
}

SegmentGraph synth_star(std::size_t num_leaves, std::size_t words_per_node,
                        std::uint64_t seed) {
  if (num_leaves < 1 || words_per_node < 1) {
    throw InputError("synth_star: counts must be >= 1");
  }
  Segment center = Segment::from_text(0, synth_text(words_per_node, seed));
  std::vector<Segment> leaves;
  for (std::size_t i = 1; i <= num_leaves; ++i) {
    leaves.push_back(Segment::from_text(static_cast<SegmentId>(i),
                                        synth_text(words_per_node, seed + i)));
  }
  return build_star(std::move(center), std::move(leaves));
}

}  // namespace gkv
