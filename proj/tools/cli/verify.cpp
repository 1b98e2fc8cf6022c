#include "verify.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>

#include "gkv/decoder.hpp"
#include "gkv/encoders.hpp"
#include "gkv/oracle.hpp"
#include "gkv/weights_io.hpp"

namespace gkv::cli {

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_head = 8;
  c.d_ff = 32;
  return c;
}

Segment random_segment(SegmentId id, std::size_t len, std::mt19937_64& rng) {
  Segment s{id, {}};
  for (std::size_t i = 0; i < len; ++i) s.tokens.push_back('a' + rng() % 26);
  return s;
}

std::string fmt_err(double e) {
  std::ostringstream o;
  o << "max rel err " << e;
  return o.str();
}

CheckResult check(const std::string& name, const std::function<std::string()>& body) {
  CheckResult r{name, false, ""};
  try {
    r.detail = body();
    r.passed = true;
  } catch (const std::exception& e) {
    r.detail = e.what();
  }
  return r;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

double block_rel_error(const KVBlock& block, const ReferenceOutput& ref,
                       std::size_t first_row, std::size_t width) {
  double worst = 0.0;
  for (std::size_t l = 0; l < block.layers.size(); ++l) {
    const auto n = static_cast<std::ptrdiff_t>(block.length * width);
    const auto off = static_cast<std::ptrdiff_t>(first_row * width);
    std::vector<float> rk(ref.layers[l].keys.begin() + off,
                          ref.layers[l].keys.begin() + off + n);
    std::vector<float> rv(ref.layers[l].values.begin() + off,
                          ref.layers[l].values.begin() + off + n);
    worst = std::max(worst, relative_error(block.layers[l].keys, rk));
    worst = std::max(worst, relative_error(block.layers[l].values, rv));
  }
  return worst;
}

}  // namespace

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.passed; });
}

nlohmann::ordered_json VerifyReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = "gkv.verify.v1";
  j["passed"] = all_passed();
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return j;
}

std::string VerifyReport::to_text() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << "  (" << c.detail << ")\n";
  }
  out << (all_passed() ? "all checks passed" : "verification FAILED") << '\n';
  return out.str();
}

VerifyReport run_verify(std::uint64_t seed, unsigned workers) {
  const ModelConfig cfg = tiny_config();
  const Weights w = random_weights(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5eedull);
  VerifyReport report;
  const std::size_t width = cfg.d_model;

  report.checks.push_back(check("causal_prefill_matches_oracle", [&] {
    const Segment s = random_segment(0, 12, rng);
    const EncodeResult r = encode_block(s.tokens, 0, {}, cfg, w, EncodeMode::kAllLogits);
    std::vector<std::uint64_t> pos(s.tokens.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    const ReferenceOutput ref = full_attention_reference(
        s.tokens, pos, AttentionMask::causal(pos.size()), cfg, w);
    const double e = std::max(relative_error(r.logits, ref.logits),
                              block_rel_error(r.block, ref, 0, width));
    require(e <= kOracleTolerance, fmt_err(e));
    return fmt_err(e);
  }));

  report.checks.push_back(check("chain_target_matches_oracle", [&] {
    const Segment a = random_segment(0, 10, rng);
    const Segment b = random_segment(1, 7, rng);
    const SegmentGraph g({a, b}, {{0, 1}});
    const CacheState cache = encode_graphkv(g, cfg, w);
    const PEPlan plan = plan_positions(g);
    const ReferenceLayout layout = graphkv_layout(g, plan);
    const ReferenceOutput ref = full_attention_reference(
        layout.tokens, layout.positions, layout.mask, cfg, w);
    const double e = block_rel_error(cache.store.get(1, 1), ref,
                                     layout.segment_rows.at(1).first, width);
    require(e <= kOracleTolerance, fmt_err(e));
    return fmt_err(e);
  }));

  report.checks.push_back(check("star_union_matches_oracle", [&] {
    std::vector<Segment> leaves;
    for (SegmentId i = 1; i <= 3; ++i) leaves.push_back(random_segment(i, 4 + i, rng));
    const SegmentGraph g = build_star(random_segment(0, 6, rng), leaves);
    const CacheState cache = encode_graphkv(g, cfg, w);
    const ReferenceLayout layout = graphkv_layout(g, plan_positions(g));
    const ReferenceOutput ref = full_attention_reference(
        layout.tokens, layout.positions, layout.mask, cfg, w);
    const double e = block_rel_error(cache.store.get(0, 1), ref,
                                     layout.segment_rows.at(0).first, width);
    require(e <= kOracleTolerance, fmt_err(e));
    return fmt_err(e);
  }));

  report.checks.push_back(check("edgeless_graphkv_equals_parallel", [&] {
    std::vector<Segment> segs;
    for (SegmentId i = 0; i < 4; ++i) segs.push_back(random_segment(i, 3 + i, rng));
    const SegmentGraph g(segs, {});
    require(encode_graphkv(g, cfg, w).store == encode_parallel(g, cfg, w).store,
            "caches differ");
    return std::string("bitwise equal");
  }));

  report.checks.push_back(check("source_permutation_invariance", [&] {
    std::vector<Segment> leaves;
    for (SegmentId i = 1; i <= 4; ++i) leaves.push_back(random_segment(i, 5, rng));
    const SegmentGraph g = build_star(random_segment(0, 5, rng), leaves);
    const CacheState cache = encode_graphkv(g, cfg, w);
    std::vector<const KVBlock*> srcs;
    for (SegmentId i = 1; i <= 4; ++i) srcs.push_back(&cache.store.get(i, 0));
    const KVBlock& base = cache.store.get(0, 1);
    double worst = 0.0;
    std::sort(srcs.begin(), srcs.end());
    do {
      const KVBlock b = update_target(g.segment(0), srcs, base.position_start, 1, cfg, w);
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        worst = std::max(worst, relative_error(b.layers[l].keys, base.layers[l].keys));
        worst = std::max(worst, relative_error(b.layers[l].values, base.layers[l].values));
      }
    } while (std::next_permutation(srcs.begin(), srcs.end()));
    require(worst <= kOracleTolerance, fmt_err(worst));
    return fmt_err(worst);
  }));

  report.checks.push_back(check("positional_span_bound", [&] {
    const std::vector<TokenId> query = tokenize("why?");
    for (std::size_t n : {2u, 10u}) {
      std::vector<Segment> leaves;
      for (SegmentId i = 1; i <= n; ++i) leaves.push_back(random_segment(i, 6, rng));
      const SegmentGraph g = build_star(random_segment(0, 6, rng), leaves);
      GenerateOptions opts;
      opts.max_new = 3;
      opts.stop_on_eot = false;
      const auto res = generate(encode_graphkv(g, cfg, w), g, query, cfg, w, opts);
      require(res.metrics.max_position_index == 2 * 6 + query.size() + 3 - 1,
              "span bound violated for n=" + std::to_string(n));
    }
    return std::string("max position == 2L + q + g - 1");
  }));

  report.checks.push_back(check("cost_model_matches_counters", [&] {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Segment> segs;
      const std::size_t n = 2 + rng() % 4;
      for (SegmentId i = 0; i < n; ++i) segs.push_back(random_segment(i, 1 + rng() % 6, rng));
      std::vector<Edge> edges;
      for (SegmentId s = 0; s < n; ++s)
        for (SegmentId t = 0; t < n; ++t)
          if (s != t && rng() % 3 == 0) edges.push_back({s, t});
      const SegmentGraph g(segs, edges);
      const auto query = tokenize("q?");
      GenerateOptions opts;
      opts.max_new = 2;
      opts.stop_on_eot = false;
      for (Topology topo : {Topology::kSequential, Topology::kParallel, Topology::kGraphKV}) {
        const CacheState c = topo == Topology::kSequential ? encode_sequential(g, cfg, w)
                             : topo == Topology::kParallel ? encode_parallel(g, cfg, w)
                                                           : encode_graphkv(g, cfg, w);
        const auto res = generate(c, g, query, cfg, w, opts);
        const auto p = cost_model(GraphShape::of(g), topo, query.size(), res.tokens.size());
        require(res.metrics.score_count == p.score_count &&
                    res.metrics.peak_block_tokens == p.peak_block_tokens &&
                    res.metrics.kv_entries_total == p.kv_entries &&
                    res.metrics.max_position_index == p.max_position_index,
                std::string("counter mismatch for ") + std::string(to_string(topo)));
      }
    }
    return std::string("exact on 5 random graphs x 3 topologies");
  }));

  report.checks.push_back(check("cache_roundtrip_decode_bitwise", [&] {
    std::vector<Segment> leaves;
    for (SegmentId i = 1; i <= 3; ++i) leaves.push_back(random_segment(i, 5, rng));
    const SegmentGraph g = build_star(random_segment(0, 5, rng), leaves);
    const CacheState fresh = encode_graphkv(g, cfg, w);
    const auto bytes = serialize_cache(fresh, config_hash(cfg));
    const CacheState loaded = deserialize_cache(bytes, config_hash(cfg), cfg.n_layers, cfg.d_model);
    GenerateOptions opts;
    opts.max_new = 4;
    opts.keep_logits = true;
    const auto q = tokenize("hi");
    const auto a = generate(fresh, g, q, cfg, w, opts);
    const auto b = generate(loaded, g, q, cfg, w, opts);
    require(a.tokens == b.tokens && a.step_logits == b.step_logits, "decode differs");
    return std::string("bitwise equal");
  }));

  report.checks.push_back(check("worker_count_bitwise", [&] {
    std::vector<Segment> segs;
    for (SegmentId i = 0; i < 6; ++i) segs.push_back(random_segment(i, 4 + i, rng));
    const SegmentGraph g = build_full(segs);
    EncoderOptions one, many;
    many.workers = std::max(2u, workers);
    require(encode_graphkv(g, cfg, w, one) == encode_graphkv(g, cfg, w, many),
            "worker counts disagree");
    return "workers 1 vs " + std::to_string(many.workers) + " bitwise equal";
  }));

  return report;
}

}  // namespace gkv::cli
