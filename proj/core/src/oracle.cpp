#include "gkv/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gkv/errors.hpp"

namespace gkv {

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.allow(i, j);
  }
  return m;
}

void AttentionMask::append_causal_rows(std::size_t extra) {
  const std::size_t old = n_;
  AttentionMask grown(old + extra);
  for (std::size_t i = 0; i < old; ++i) {
    for (std::size_t j = 0; j < old; ++j) {
      if (allows(i, j)) grown.allow(i, j);
    }
  }
  for (std::size_t i = old; i < old + extra; ++i) {
    for (std::size_t j = 0; j <= i; ++j) grown.allow(i, j);
  }
  *this = std::move(grown);
}

namespace {

using Matrix = std::vector<std::vector<double>>;

// out[r][c] = sum_p in[r][p] * w[p][c], column-outer.
Matrix project(const Matrix& in, const Tensor& w) {
  const std::size_t k = w.dim(0), n = w.dim(1);
  Matrix out(in.size(), std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < in.size(); ++r) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += in[r][p] * static_cast<double>(w[p * n + c]);
      }
      out[r][c] = acc;
    }
  }
  return out;
}

Matrix normalize(const Matrix& x, const Tensor& gain, double eps) {
  Matrix out = x;
  for (auto& row : out) {
    double ms = 0.0;
    for (double v : row) ms += v * v;
    ms /= static_cast<double>(row.size());
    const double denom = std::sqrt(ms + eps);
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = row[i] / denom * static_cast<double>(gain[i]);
    }
  }
  return out;
}

void rotate(std::vector<double>& row, std::size_t head_offset, std::size_t dh,
            std::uint64_t pos, double theta) {
  const double log_theta = std::log(theta);
  for (std::size_t i = 0; i < dh / 2; ++i) {
    const double freq = std::exp(-log_theta * static_cast<double>(2 * i) /
                                 static_cast<double>(dh));
    const double a = static_cast<double>(pos) * freq;
    double& x = row[head_offset + 2 * i];
    double& y = row[head_offset + 2 * i + 1];
    const double nx = x * std::cos(a) - y * std::sin(a);
    const double ny = x * std::sin(a) + y * std::cos(a);
    x = nx;
    y = ny;
  }
}

}  // namespace

ReferenceOutput full_attention_reference(std::span<const TokenId> tokens,
                                         std::span<const std::uint64_t> positions,
                                         const AttentionMask& mask,
                                         const ModelConfig& config,
                                         const Weights& weights,
                                         AttentionKnobs knobs) {
  const std::size_t t = tokens.size();
  if (positions.size() != t || mask.size() != t) {
    throw InputError("reference: tokens, positions and mask sizes differ");
  }
  for (std::size_t i = 0; i < t; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < t && !any; ++j) any = mask.allows(i, j);
    if (!any) {
      throw InputError("reference: malformed mask, row " + std::to_string(i) +
                       " sees no key");
    }
  }
  const std::size_t d = config.d_model, dh = config.d_head;
  const double eps = config.epsilon;

  Matrix x(t, std::vector<double>(d));
  for (std::size_t i = 0; i < t; ++i) {
    if (tokens[i] >= config.vocab_size) throw InputError("reference: bad token");
    for (std::size_t c = 0; c < d; ++c) {
      x[i][c] = weights.tok_embed[tokens[i] * d + c];
    }
  }

  ReferenceOutput out;
  out.rows = t;
  for (const LayerWeights& lw : weights.layers) {
    Matrix xn = normalize(x, lw.attn_norm, eps);
    Matrix q = project(xn, lw.wq);
    Matrix k = project(xn, lw.wk);
    Matrix v = project(xn, lw.wv);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t h = 0; h < config.n_heads; ++h) {
        rotate(q[i], h * dh, dh, positions[i], config.theta_base);
        rotate(k[i], h * dh, dh, positions[i], config.theta_base);
      }
    }
    LayerKV kv;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        kv.keys.push_back(static_cast<float>(k[i][c]));
        kv.values.push_back(static_cast<float>(v[i][c]));
      }
    }
    out.layers.push_back(std::move(kv));

    Matrix attended(t, std::vector<double>(d, 0.0));
    const double factor = static_cast<double>(knobs.scale) /
                          static_cast<double>(knobs.temperature) /
                          std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> logit(t, -std::numeric_limits<double>::infinity());
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < t; ++j) {
          if (!mask.allows(i, j)) continue;
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += q[i][h * dh + e] * k[j][h * dh + e];
          logit[j] = s * factor;
          best = std::max(best, logit[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < t; ++j) {
          if (mask.allows(i, j)) z += std::exp(logit[j] - best);
        }
        for (std::size_t j = 0; j < t; ++j) {
          if (!mask.allows(i, j)) continue;
          const double p = std::exp(logit[j] - best) / z;
          for (std::size_t e = 0; e < dh; ++e) {
            attended[i][h * dh + e] += p * v[j][h * dh + e];
          }
        }
      }
    }
    Matrix o = project(attended, lw.wo);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < d; ++c) x[i][c] += o[i][c];
    }

    Matrix hn = normalize(x, lw.ffn_norm, eps);
    Matrix g = project(hn, lw.w_gate);
    Matrix u = project(hn, lw.w_up);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < g[i].size(); ++c) {
        const double s = g[i][c] / (1.0 + std::exp(-g[i][c]));
        g[i][c] = s * u[i][c];
      }
    }
    Matrix down = project(g, lw.w_down);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < d; ++c) x[i][c] += down[i][c];
    }
  }

  Matrix final_n = normalize(x, weights.final_norm, eps);
  Matrix logits = project(final_n, weights.lm_head);
  for (const auto& row : logits) {
    for (double v : row) out.logits.push_back(static_cast<float>(v));
  }
  return out;
}

double relative_error(std::span<const float> actual,
                      std::span<const float> reference) {
  if (actual.size() != reference.size()) {
    throw InvariantError("relative_error: length mismatch");
  }
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(actual[i]) - reference[i]));
    scale = std::max(scale, std::abs(static_cast<double>(reference[i])));
  }
  return scale > 0.0 ? diff / scale : diff;
}

// ---------------------------------------------------------------------------

void ReferenceLayout::append_tail(std::span<const TokenId> tail) {
  std::uint64_t next = query_start;
  if (!positions.empty() && tokens.size() > 0 &&
      positions.back() >= query_start) {
    next = positions.back() + 1;
  }
  for (TokenId tok : tail) {
    tokens.push_back(tok);
    positions.push_back(next++);
  }
  mask.append_causal_rows(tail.size());
}

ReferenceLayout sequential_layout(const SegmentGraph& graph,
                                  std::span<const SegmentId> order) {
  ReferenceLayout layout;
  for (SegmentId id : order) {
    const auto& seg = graph.segment(id).tokens;
    layout.segment_rows[id] = {layout.tokens.size(), seg.size()};
    for (TokenId tok : seg) {
      layout.positions.push_back(layout.tokens.size());
      layout.tokens.push_back(tok);
    }
  }
  layout.mask = AttentionMask::causal(layout.tokens.size());
  layout.query_start = layout.tokens.size();
  return layout;
}

ReferenceLayout graphkv_layout(const SegmentGraph& graph, const PEPlan& plan) {
  if (plan.rounds_used > 1) {
    throw InputError("reference layout covers a single update round only");
  }
  for (const Edge& e : graph.edges()) {
    if (graph.is_target(e.source)) {
      throw InputError("reference layout needs every source to be a pure "
                       "source; segment " + std::to_string(e.source) +
                       " is both");
    }
  }
  ReferenceLayout layout;
  for (SegmentId id : graph.ids()) {
    const auto& seg = graph.segment(id).tokens;
    const std::uint32_t round = graph.is_target(id) ? plan.rounds_used : 0;
    const std::uint64_t start = plan.start(id, round);
    layout.segment_rows[id] = {layout.tokens.size(), seg.size()};
    for (std::size_t i = 0; i < seg.size(); ++i) {
      layout.tokens.push_back(seg[i]);
      layout.positions.push_back(start + i);
    }
  }
  layout.mask = AttentionMask(layout.tokens.size());
  for (SegmentId id : graph.ids()) {
    const auto [row0, len] = layout.segment_rows[id];
    for (std::size_t i = 0; i < len; ++i) {
      for (SegmentId src : graph.sources(id)) {
        const auto [s0, slen] = layout.segment_rows[src];
        for (std::size_t j = 0; j < slen; ++j) layout.mask.allow(row0 + i, s0 + j);
      }
      for (std::size_t j = 0; j <= i; ++j) layout.mask.allow(row0 + i, row0 + j);
    }
  }
  layout.query_start = plan.query_start;
  return layout;
}

std::vector<TokenId> reference_generate(ReferenceLayout layout,
                                        std::span<const TokenId> query,
                                        std::uint32_t max_new,
                                        const ModelConfig& config,
                                        const Weights& weights,
                                        bool stop_on_eot) {
  layout.append_tail(query);
  std::vector<TokenId> out;
  while (out.size() < max_new) {
    const ReferenceOutput ref = full_attention_reference(
        layout.tokens, layout.positions, layout.mask, config, weights);
    const std::size_t vocab = config.vocab_size;
    const TokenId next = argmax(
        std::span<const float>(ref.logits).subspan((ref.rows - 1) * vocab, vocab));
    if (stop_on_eot && next == kEotToken) break;
    out.push_back(next);
    const TokenId one[1] = {next};
    layout.append_tail(one);
  }
  return out;
}

// ---------------------------------------------------------------------------

GraphShape GraphShape::of(const SegmentGraph& graph) {
  GraphShape s;
  for (const auto& seg : graph.segments()) s.lengths[seg.id] = seg.tokens.size();
  s.edges = graph.edges();
  return s;
}

GraphShape GraphShape::star(std::size_t leaves, std::uint64_t leaf_len,
                            std::uint64_t center_len) {
  GraphShape s;
  s.lengths[0] = center_len;
  for (std::size_t i = 1; i <= leaves; ++i) {
    s.lengths[static_cast<SegmentId>(i)] = leaf_len;
    s.edges.push_back({static_cast<SegmentId>(i), 0});
  }
  return s;
}

CostPrediction cost_model(const GraphShape& shape, Topology topology,
                          std::uint64_t query_len, std::uint64_t gen_len,
                          const CostOptions& options) {
  CostPrediction p;
  std::uint64_t total = 0, longest = 0, sum_causal = 0;
  for (const auto& [_, len] : shape.lengths) {
    total += len;
    longest = std::max(longest, len);
    sum_causal += causal_pairs(len);
  }
  const std::uint64_t L = options.L_override.value_or(longest);
  const std::uint64_t visible = total;
  std::uint64_t cached = total;

  switch (topology) {
    case Topology::kSequential:
      p.prefill_score_count = causal_pairs(total);
      p.peak_block_tokens = total;
      p.query_start = total;
      break;
    case Topology::kParallel:
      p.prefill_score_count = sum_causal;
      p.peak_block_tokens = longest;
      p.query_start = L + options.pe_offset;
      break;
    case Topology::kGraphKV: {
      std::map<SegmentId, std::uint64_t> source_tokens;
      for (const Edge& e : shape.edges) source_tokens[e.target] += shape.lengths.at(e.source);
      const std::uint32_t rounds = shape.edges.empty() ? 0 : options.rounds;
      std::uint64_t update = 0, target_tokens = 0;
      for (const auto& [tgt, src_len] : source_tokens) {
        const std::uint64_t len = shape.lengths.at(tgt);
        update += len * src_len + causal_pairs(len);
        target_tokens += len;
      }
      p.prefill_score_count = sum_causal + rounds * update;
      p.peak_block_tokens = longest;
      cached += rounds * target_tokens;
      p.query_start = (rounds + 1) * L + options.pe_offset;
      break;
    }
  }

  const std::uint64_t fed = gen_len > 0 ? gen_len - 1 : 0;
  p.decode_score_count = query_len * visible + causal_pairs(query_len) +
                         fed * (visible + query_len) + causal_pairs(fed);
  p.score_count = p.prefill_score_count + p.decode_score_count;
  p.peak_block_tokens = std::max(p.peak_block_tokens, query_len);
  if (fed > 0) p.peak_block_tokens = std::max<std::uint64_t>(p.peak_block_tokens, 1);
  p.kv_entries = cached + query_len + fed;
  p.max_position_index = p.query_start + query_len + gen_len - 1;
  return p;
}

std::size_t max_neighbors_within_budget(Topology topology,
                                        std::uint64_t chunk_len,
                                        std::uint64_t query_len,
                                        std::uint64_t budget,
                                        std::size_t limit) {
  std::size_t best = 0;
  for (std::size_t n = 1; n <= limit; ++n) {
    const CostPrediction p =
        cost_model(GraphShape::star(n, chunk_len, chunk_len), topology,
                   query_len, 1);
    if (p.peak_block_tokens <= budget) best = n;
  }
  return best;
}

}  // namespace gkv
