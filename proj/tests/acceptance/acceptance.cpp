// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bench.hpp"
#include "commands.hpp"
#include "gkv/decoder.hpp"
#include "gkv/encoders.hpp"
#include "gkv/oracle.hpp"
#include "gkv/weights_io.hpp"
#include "graph_json.hpp"

namespace {

using namespace gkv;
namespace fs = std::filesystem;

// Pinned tolerances and sweep settings.
constexpr double kRelTol = 1e-5;
constexpr int kChainModels = 20;
constexpr int kEdgelessGraphs = 10;
constexpr int kComplexityGraphs = 50;
constexpr std::size_t kPermSources = 5;
constexpr double kMemoryRatio = 3.0;
constexpr std::size_t kMemoryLimit = 1000;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<TokenId> byte(32, 126);
  std::vector<TokenId> out(n);
  for (auto& t : out) t = byte(rng);
  return out;
}

std::string ids(const std::vector<TokenId>& toks) {
  std::string out = "[";
  for (std::size_t i = 0; i < toks.size(); ++i) out += (i ? " " : "") + std::to_string(toks[i]);
  return out + "]";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double block_error(const KVBlock& a, const KVBlock& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    worst = std::max(worst, relative_error(a.keys(l), b.keys(l)));
    worst = std::max(worst, relative_error(a.values(l), b.values(l)));
  }
  return worst;
}

GenerateOptions greedy(std::uint32_t max_new) {
  GenerateOptions o;
  o.max_new = max_new;
  o.stop_on_eot = false;
  return o;
}

CacheState encode_as(Topology topo, const SegmentGraph& g, const ModelConfig& c,
                     const Weights& w, const EncoderOptions& o = {}) {
  switch (topo) {
    case Topology::kSequential: return encode_sequential(g, c, w, o);
    case Topology::kParallel: return encode_parallel(g, c, w, o);
    case Topology::kGraphKV: return encode_graphkv(g, c, w, o);
  }
  throw InvariantError("unhandled topology");
}

// ---------------------------------------------------------------------------

Outcome chain_equivalence() {
  ModelConfig c;  // 2 layers, 2 heads, d_model 16
  std::mt19937_64 rng(2024);
  double worst_kv = 0.0;
  int same = 0;
  for (int m = 0; m < kChainModels; ++m) {
    const Weights w = random_weights(c, 1000 + m);
    std::uniform_int_distribution<std::size_t> len(8, 48);
    const std::size_t la = len(rng);
    const std::size_t lb = std::uniform_int_distribution<std::size_t>(1, la)(rng);
    const SegmentGraph g({Segment{0, random_tokens(rng, la)}, Segment{1, random_tokens(rng, lb)}},
                         {{0, 1}});
    const CacheState cache = encode_graphkv(g, c, w);
    if (cache.L != la) return {false, "L != len(A)"};

    std::vector<TokenId> toks = g.segment(0).tokens;
    toks.insert(toks.end(), g.segment(1).tokens.begin(), g.segment(1).tokens.end());
    std::vector<std::uint64_t> pos(toks.size());
    std::iota(pos.begin(), pos.end(), 0);
    const ReferenceOutput ref =
        full_attention_reference(toks, pos, AttentionMask::causal(toks.size()), c, w);
    const KVBlock& b = cache.store.get(1, 1);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      const auto rk = std::span<const float>(ref.layers[l].keys).subspan(la * c.d_model);
      const auto rv = std::span<const float>(ref.layers[l].values).subspan(la * c.d_model);
      worst_kv = std::max({worst_kv, relative_error(b.keys(l), rk), relative_error(b.values(l), rv)});
    }

    const auto query = random_tokens(rng, 6);
    const auto out = generate(cache, g, query, c, w, greedy(8)).tokens;
    const std::vector<SegmentId> order{0, 1};
    ReferenceLayout layout = sequential_layout(g, order);
    layout.query_start = cache.query_start;
    same += out == reference_generate(layout, query, 8, c, w, false);
  }
  return {worst_kv <= kRelTol && same == kChainModels,
          "max rel err " + fmt(worst_kv) + ", greedy identical " + std::to_string(same) + "/" +
              std::to_string(kChainModels)};
}

Outcome edgeless_reduction() {
  const ModelConfig c;
  std::mt19937_64 rng(77);
  int equal = 0;
  for (int i = 0; i < kEdgelessGraphs; ++i) {
    const Weights w = random_weights(c, 500 + i);
    std::vector<Segment> segs;
    const std::size_t n = 2 + i;
    for (std::size_t s = 0; s < n; ++s) {
      segs.push_back({static_cast<SegmentId>(s * 2 + i),
                      random_tokens(rng, std::uniform_int_distribution<std::size_t>(1, 40)(rng))});
    }
    const SegmentGraph g(std::move(segs), {});
    EncoderOptions o;
    o.pe_offset = i % 3;
    o.workers = 1 + i % 3;
    const CacheState a = encode_graphkv(g, c, w, o);
    const CacheState b = encode_parallel(g, c, w, o);
    equal += a.store == b.store && a.stats == b.stats && a.query_start == b.query_start &&
             a.L == b.L;
  }
  return {equal == kEdgelessGraphs,
          "bitwise equal " + std::to_string(equal) + "/" + std::to_string(kEdgelessGraphs)};
}

Outcome source_permutation() {
  const ModelConfig c;
  const Weights w = random_weights(c, 42);
  const SegmentGraph base = synth_star(kPermSources, 24, 42);
  const auto query = tokenize("what do the sources say?");
  const CacheState ref_cache = encode_graphkv(base, c, w);
  const KVBlock& ref_block = ref_cache.store.get(0, 1);
  const auto ref_out = generate(ref_cache, base, query, c, w, greedy(12)).tokens;

  // Source k is relabelled to id perm[k] + 1, which changes the order the
  // target reads its sources in, and the order the query sees them.
  std::vector<SegmentId> perm(kPermSources);
  std::iota(perm.begin(), perm.end(), 0);
  double worst = 0.0;
  int perms = 0, same = 0;
  do {
    std::vector<Segment> leaves;
    for (std::size_t k = 0; k < kPermSources; ++k) {
      leaves.push_back({perm[k] + 1, base.segment(static_cast<SegmentId>(k + 1)).tokens});
    }
    const SegmentGraph g = build_star(base.segment(0), leaves);
    const CacheState cache = encode_graphkv(g, c, w);
    worst = std::max(worst, block_error(cache.store.get(0, 1), ref_block));
    same += generate(cache, g, query, c, w, greedy(12)).tokens == ref_out;
    ++perms;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {perms == 120 && worst <= kRelTol && same == perms,
          std::to_string(perms) + " permutations, max rel err " + fmt(worst) +
              ", greedy identical " + std::to_string(same) + "/" + std::to_string(perms)};
}

Outcome positional_span() {
  const ModelConfig c;
  const Weights w = random_weights(c, 42);
  constexpr std::uint64_t L = 24;
  constexpr std::uint32_t g_tokens = 7;
  std::mt19937_64 rng(5);
  const auto query = random_tokens(rng, 9);
  std::string detail;
  bool ok = true;
  for (std::size_t n : {2u, 10u, 100u}) {
    std::vector<Segment> leaves;
    for (std::size_t i = 1; i < n; ++i) {
      leaves.push_back({static_cast<SegmentId>(i),
                        random_tokens(rng, std::uniform_int_distribution<std::size_t>(1, L)(rng))});
    }
    const SegmentGraph graph = build_star(Segment{0, random_tokens(rng, L - 3)}, leaves);
    EncoderOptions o;
    o.L_override = L;
    const CacheState cache = encode_graphkv(graph, c, w, o);
    const auto res = generate(cache, graph, query, c, w, greedy(g_tokens));
    const std::uint64_t expect = 2 * L + query.size() + g_tokens - 1;
    ok = ok && res.tokens.size() == g_tokens && res.metrics.max_position_index == expect;
    detail += (detail.empty() ? "" : ", ") + std::string("n=") + std::to_string(n) + ": " +
              std::to_string(res.metrics.max_position_index);
  }
  return {ok, detail + " (expected 2L+q+g-1 = " +
                  std::to_string(2 * L + query.size() + g_tokens - 1) + ")"};
}

Outcome complexity_accounting() {
  ModelConfig c;
  c.n_layers = 1;
  const Weights w = random_weights(c, 9);
  std::mt19937_64 rng(31);
  int checked = 0, exact = 0;
  bool bounds = true;
  for (int i = 0; i < kComplexityGraphs; ++i) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 9)(rng);
    std::vector<Segment> segs;
    for (std::size_t s = 0; s < n; ++s) {
      segs.push_back({static_cast<SegmentId>(s),
                      random_tokens(rng, std::uniform_int_distribution<std::size_t>(1, 30)(rng))});
    }
    std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0.0, 0.6)(rng));
    std::vector<Edge> edges;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b && coin(rng)) edges.push_back({static_cast<SegmentId>(a), static_cast<SegmentId>(b)});
      }
    }
    const SegmentGraph g(std::move(segs), std::move(edges));
    EncoderOptions o;
    o.rounds = 1 + i % 3;
    o.pe_offset = i % 4;
    CostOptions co;
    co.rounds = o.rounds;
    co.pe_offset = o.pe_offset;
    const auto query = random_tokens(rng, 1 + i % 7);
    const std::uint32_t gen = i % 5;
    for (Topology topo : {Topology::kSequential, Topology::kParallel, Topology::kGraphKV}) {
      const CacheState cache = encode_as(topo, g, c, w, o);
      const RunMetrics m = generate(cache, g, query, c, w, greedy(gen)).metrics;
      const CostPrediction p = cost_model(GraphShape::of(g), topo, query.size(), gen, co);
      ++checked;
      exact += m.score_count == p.score_count && m.prefill_score_count == p.prefill_score_count &&
               m.decode_score_count == p.decode_score_count &&
               m.peak_block_tokens == p.peak_block_tokens && m.kv_entries_total == p.kv_entries &&
               m.max_position_index == p.max_position_index;
      // Closed forms against the asymptotic shapes, with L = longest chunk.
      const std::uint64_t Lmax = g.max_length();
      const std::uint64_t nodes = g.size(), e = g.edges().size();
      if (topo == Topology::kSequential) {
        bounds = bounds && p.prefill_score_count <= causal_pairs(nodes * Lmax);
      } else if (topo == Topology::kParallel) {
        bounds = bounds && p.prefill_score_count <= nodes * causal_pairs(Lmax);
      } else {
        bounds = bounds && p.prefill_score_count <=
                               (nodes + co.rounds * (nodes + e)) * Lmax * Lmax;
      }
    }
  }
  return {exact == checked && bounds,
          "exact " + std::to_string(exact) + "/" + std::to_string(checked) +
              " runs, growth bounds " + (bounds ? "hold" : "violated")};
}

Outcome memory_echo() {
  constexpr std::uint64_t query_len = 32;
  std::string detail;
  bool ok = true;
  for (std::uint64_t L : {500u, 1000u}) {
    double min_ratio = 1e300;
    const std::uint64_t budgets[] = {4 * L, 4 * L + 1, 5 * L - 1, 5 * L, 7 * L + L / 2,
                                     16 * L, 50 * L, 100 * L};
    for (std::uint64_t B : budgets) {
      const std::size_t seq =
          max_neighbors_within_budget(Topology::kSequential, L, query_len, B, kMemoryLimit);
      const std::size_t gkv =
          max_neighbors_within_budget(Topology::kGraphKV, L, query_len, B, kMemoryLimit);
      if (seq == 0 || gkv < kMemoryRatio * seq) ok = false;
      if (seq > 0) min_ratio = std::min(min_ratio, static_cast<double>(gkv) / seq);
    }
    detail += (detail.empty() ? "" : ", ") + std::string("L=") + std::to_string(L) +
              " min ratio " + fmt(min_ratio);
  }
  return {ok, detail};
}

Outcome ttft_trend() {
  using namespace gkv::cli;
  const ModelConfig c = bench_model_config();
  const ModelBundle model{c, random_weights(c, 42)};
  TtftBenchOptions o;  // 10 neighbors, words {100,200,400,800}, 5 runs
  const auto rows = run_ttft_bench(model, o);
  std::map<std::string, std::map<std::size_t, std::uint64_t>> med;
  for (const auto& r : rows) med[r.topology][r.words] = r.median_ns;
  auto& seq = med["sequential"];
  auto& gk = med["graphkv-cached"];
  bool faster = true;
  for (std::size_t words : o.words) faster = faster && gk.at(words) < seq.at(words);
  const double g_seq = static_cast<double>(seq.at(800)) / seq.at(100);
  const double g_gk = static_cast<double>(gk.at(800)) / gk.at(100);
  return {faster && g_gk < g_seq,
          std::string("cached below sequential at all points: ") + (faster ? "yes" : "no") +
              ", 800/100 growth " + fmt(g_gk) + " vs " + fmt(g_seq) + ", medians(ms) seq " +
              fmt(seq.at(800) / 1e6) + " gkv " + fmt(gk.at(800) / 1e6) + " at 800 words"};
}

Outcome positional_bias() {
  const ModelConfig c;
  const auto query = tokenize("which one?");
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Weights w = random_weights(c, seed);
    std::mt19937_64 rng(seed);
    std::vector<std::vector<TokenId>> chunks;
    for (int k = 0; k < 3; ++k) chunks.push_back(random_tokens(rng, 12));

    // Chunk k gets id order[k]: the id order is the input order.
    auto outputs = [&](const std::vector<SegmentId>& order) {
      std::vector<Segment> segs;
      for (int k = 0; k < 3; ++k) segs.push_back({order[k], chunks[k]});
      const SegmentGraph flat(segs, {});
      const SegmentGraph full = build_full(segs);
      std::array<std::vector<TokenId>, 3> out;
      out[0] = generate(encode_sequential(flat, c, w), flat, query, c, w, greedy(6)).tokens;
      out[1] = generate(encode_parallel(flat, c, w), flat, query, c, w, greedy(6)).tokens;
      out[2] = generate(encode_graphkv(full, c, w), full, query, c, w, greedy(6)).tokens;
      return out;
    };
    const auto a = outputs({1, 2, 3});
    const auto b = outputs({3, 2, 1});
    if (a[0] != b[0] && a[1] == b[1] && a[2] == b[2]) {
      return {true, "seed " + std::to_string(seed) + ": sequential " + ids(a[0]) + " vs " +
                        ids(b[0]) + "; parallel and graphkv order-identical"};
    }
  }
  return {false, "no instance in 500 seeds"};
}

Outcome determinism_persistence() {
  using namespace gkv::cli;
  const fs::path dir = fs::temp_directory_path() / "gkv_acceptance";
  fs::create_directories(dir);
  const std::string graph = (dir / "graph.json").string();
  write_text_file(graph, graph_to_json(synth_star(4, 30, 7)).dump());

  auto run = [](std::vector<std::string> args) {
    args.insert(args.begin(), "gkv");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return std::to_string(code) + "\n" + out.str();
  };
  auto strip_timing = [](std::string s) {
    const auto at = s.find("\"ttft_ns\"");
    if (at != std::string::npos) s.erase(at, s.find('\n', at) - at);
    return s;
  };
  auto slurp = [](const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };

  int same = 0, total = 0;
  for (const char* topo : {"sequential", "parallel", "graphkv"}) {
    const std::vector<std::string> args{"generate", "--graph", graph, "--query", "why?",
                                        "--topology", topo, "--max-new", "8", "--ignore-eot"};
    same += strip_timing(run(args)) == strip_timing(run(args));
    ++total;
    const std::string c1 = (dir / "a.gkvc").string(), c2 = (dir / "b.gkvc").string();
    run({"prefill", "--graph", graph, "--topology", topo, "--out", c1});
    run({"prefill", "--graph", graph, "--topology", topo, "--out", c2});
    same += !slurp(c1).empty() && slurp(c1) == slurp(c2);
    ++total;
  }
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"verify"},
        std::vector<std::string>{"bench-memory", "--analytic-only"},
        std::vector<std::string>{"build-graph", "--synth-star", "5", "--words", "20"}}) {
    same += run(args) == run(args);
    ++total;
  }

  // Cache save -> load -> decode against fresh compute.
  const ModelConfig c;
  const Weights w = random_weights(c, 42);
  const SegmentGraph g = synth_star(4, 30, 7);
  const auto query = tokenize("why?");
  int bitwise = 0;
  for (Topology topo : {Topology::kSequential, Topology::kParallel, Topology::kGraphKV}) {
    const CacheState fresh = encode_as(topo, g, c, w);
    const std::string path = (dir / "cache.gkvc").string();
    save_cache(path, fresh, config_hash(c));
    const CacheState loaded = load_cache(path, config_hash(c), c.n_layers, c.d_model);
    GenerateOptions o = greedy(10);
    o.keep_logits = true;
    const auto a = generate(fresh, g, query, c, w, o);
    const auto b = generate(loaded, g, query, c, w, o);
    bitwise += loaded == fresh && a.tokens == b.tokens && a.step_logits == b.step_logits;
  }
  fs::remove_all(dir);
  return {same == total && bitwise == 3,
          "repeat-identical " + std::to_string(same) + "/" + std::to_string(total) +
              ", cache round-trip bitwise " + std::to_string(bitwise) + "/3"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"chain_equivalence", chain_equivalence},
      {"edgeless_reduction", edgeless_reduction},
      {"source_permutation_invariance", source_permutation},
      {"positional_span_bound", positional_span},
      {"complexity_accounting", complexity_accounting},
      {"memory_echo", memory_echo},
      {"ttft_trend", ttft_trend},
      {"positional_bias_contrast", positional_bias},
      {"determinism_and_persistence", determinism_persistence},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s  (%s; %.2fs)\n", o.passed ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += !o.passed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed,
              std::size(criteria));
  return failed ? 1 : 0;
}
