#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bench.hpp"
#include "gkv/decoder.hpp"
#include "gkv/encoders.hpp"
#include "gkv/errors.hpp"
#include "gkv/weights_io.hpp"
#include "graph_json.hpp"
#include "verify.hpp"

namespace gkv::cli {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("GKV_SEED")) {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError(std::string("GKV_SEED is not an unsigned integer: '") + env + "'");
  }
  return 42;
}

namespace {

struct ModelArgs {
  std::string weights;
  std::optional<std::uint64_t> seed;
};

struct GraphArgs {
  std::string graph;
  std::size_t m = 0;
  bool full = false;
};

struct EncodeArgs {
  std::string topology = "graphkv";
  std::uint32_t rounds = 1;
  std::uint64_t L = 0;
  std::uint64_t pe_offset = 0;
  unsigned workers = 1;
};

void add_model_options(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--weights", a.weights,
                  "Weight file (GKVW); omitted: seeded random tiny model");
  cmd->add_option("--seed", a.seed, "Seed for random weights (default GKV_SEED or 42)");
}

void add_graph_options(CLI::App* cmd, GraphArgs& a) {
  cmd->add_option("--graph", a.graph, "Graph JSON file")->required();
  cmd->add_option("--m", a.m, "Rebuild edges as bipartite top-m from the graph's scores");
  cmd->add_flag("--full", a.full, "Rebuild edges as the Full topology");
}

void add_encode_options(CLI::App* cmd, EncodeArgs& a) {
  cmd->add_option("--topology", a.topology, "sequential | parallel | graphkv")
      ->check(CLI::IsMember({"sequential", "parallel", "graphkv"}));
  cmd->add_option("--rounds", a.rounds, "Graph-KV update rounds (1 = evaluated setting)");
  cmd->add_option("--L", a.L, "Shared range length override (0 = longest chunk)");
  cmd->add_option("--pe-offset", a.pe_offset, "Shift every shared position range");
  cmd->add_option("--workers", a.workers, "Worker threads for prefill");
}

ModelBundle load_model(const ModelArgs& a, const ModelConfig& fallback) {
  if (!a.weights.empty()) {
    auto [config, weights] = load_weights(a.weights);
    return {config, std::move(weights)};
  }
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  return {fallback, random_weights(fallback, seed)};
}

SegmentGraph load_graph(const GraphArgs& a) {
  SegmentGraph g = read_graph_file(a.graph);
  if (a.m > 0 && a.full) throw InputError("--m and --full are mutually exclusive");
  if (a.m > 0) {
    if (g.scores().empty()) {
      throw InputError("--m needs \"scores\" in graph file '" + a.graph + "'");
    }
    return build_bipartite_topm(g.segments(), g.scores(), a.m);
  }
  if (a.full) return build_full(g.segments());
  return g;
}

EncoderOptions encoder_options(const EncodeArgs& a) {
  EncoderOptions o;
  o.rounds = a.rounds;
  if (a.L > 0) o.L_override = a.L;
  o.pe_offset = a.pe_offset;
  o.workers = a.workers;
  return o;
}

CacheState encode(Topology topo, const SegmentGraph& g, const ModelBundle& m,
                  const EncoderOptions& o) {
  switch (topo) {
    case Topology::kSequential: return encode_sequential(g, m.config, m.weights, o);
    case Topology::kParallel: return encode_parallel(g, m.config, m.weights, o);
    case Topology::kGraphKV: return encode_graphkv(g, m.config, m.weights, o);
  }
  throw InvariantError("unhandled topology");
}

void warn_if_edges_ignored(Topology topo, const SegmentGraph& g, std::ostream& err) {
  if (topo == Topology::kParallel && g.has_edges()) {
    err << "warning: --topology parallel ignores the graph's " << g.edges().size()
        << " edges\n";
  }
}

// Generated bytes need not be valid UTF-8; invalid sequences become U+FFFD.
std::string dump(const nlohmann::ordered_json& j) {
  return j.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text_file(out_path, text);
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, const char* flag) {
  std::vector<T> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(static_cast<T>(std::stoull(item)));
    } catch (const std::exception&) {
      throw InputError(std::string(flag) + ": '" + item + "' is not a count");
    }
  }
  if (out.empty()) throw InputError(std::string(flag) + " is empty");
  return out;
}

// --- subcommands -------------------------------------------------------------

struct GenerateArgs {
  ModelArgs model;
  GraphArgs graph;
  EncodeArgs enc;
  std::string query;
  std::uint32_t max_new = 16;
  float temperature = 1.0f;
  float scale = 1.0f;
  bool ignore_eot = false;
  std::string cache;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  const ModelBundle model = load_model(a.model, ModelConfig{});
  const SegmentGraph graph = load_graph(a.graph);
  const Topology topo = parse_topology(a.enc.topology);
  warn_if_edges_ignored(topo, graph, err);
  if (!(a.temperature > 0.0f) || !(a.scale > 0.0f)) {
    throw InputError("--temperature and --scale must be > 0");
  }

  CacheState cache;
  if (!a.cache.empty()) {
    cache = load_cache(a.cache, config_hash(model.config), model.config.n_layers,
                       model.config.d_model);
    if (cache.topology != topo) {
      throw InputError("cache '" + a.cache + "' was built for topology " +
                       std::string(to_string(cache.topology)));
    }
  } else {
    cache = encode(topo, graph, model, encoder_options(a.enc));
  }

  GenerateOptions opts;
  opts.max_new = a.max_new;
  opts.knobs = {a.temperature, a.scale};
  opts.stop_on_eot = !a.ignore_eot;
  const std::vector<TokenId> query = tokenize(a.query);
  const GenerationResult res =
      generate(cache, graph, query, model.config, model.weights, opts);

  nlohmann::ordered_json j;
  j["schema"] = kGenerateSchema;
  j["topology"] = to_string(topo);
  j["query"] = a.query;
  j["output_tokens"] = res.tokens;
  j["output_text"] = detokenize(res.tokens);
  j["cache"] = {{"L", cache.L}, {"rounds", cache.rounds}, {"query_start", cache.query_start}};
  const RunMetrics& m = res.metrics;
  j["metrics"] = {{"ttft_ns", m.ttft_ns},
                  {"score_count", m.score_count},
                  {"prefill_score_count", m.prefill_score_count},
                  {"decode_score_count", m.decode_score_count},
                  {"peak_block_tokens", m.peak_block_tokens},
                  {"kv_entries_total", m.kv_entries_total},
                  {"max_position_index", m.max_position_index}};
  emit(dump(j), a.out, out);
  return kExitOk;
}

struct PrefillArgs {
  ModelArgs model;
  GraphArgs graph;
  EncodeArgs enc;
  std::string out;
};

int cmd_prefill(const PrefillArgs& a, std::ostream& out, std::ostream& err) {
  const ModelBundle model = load_model(a.model, ModelConfig{});
  const SegmentGraph graph = load_graph(a.graph);
  const Topology topo = parse_topology(a.enc.topology);
  warn_if_edges_ignored(topo, graph, err);
  const CacheState cache = encode(topo, graph, model, encoder_options(a.enc));
  save_cache(a.out, cache, config_hash(model.config));
  nlohmann::ordered_json j;
  j["schema"] = "gkv.prefill.v1";
  j["topology"] = to_string(topo);
  j["cache"] = a.out;
  j["blocks"] = cache.store.size();
  j["L"] = cache.L;
  j["query_start"] = cache.query_start;
  j["prefill_score_count"] = cache.stats.score_count;
  out << dump(j);
  return kExitOk;
}

struct InitWeightsArgs {
  std::optional<std::uint64_t> seed;
  ModelConfig config;
  std::string out;
};

int cmd_init_weights(const InitWeightsArgs& a, std::ostream& out) {
  a.config.validate();
  const std::uint64_t seed = a.seed ? *a.seed : default_seed();
  save_weights(a.out, a.config, random_weights(a.config, seed));
  out << "wrote " << a.out << " (config hash " << std::hex
      << config_hash(a.config) << std::dec << ")\n";
  return kExitOk;
}

struct BuildGraphArgs {
  std::string input;
  std::size_t m = 0;
  bool full = false;
  std::optional<SegmentId> star_center;
  std::size_t synth_leaves = 0;
  std::size_t words = 100;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_build_graph(const BuildGraphArgs& a, std::ostream& out) {
  SegmentGraph g;
  if (a.synth_leaves > 0) {
    g = synth_star(a.synth_leaves, a.words, a.seed ? *a.seed : default_seed());
  } else {
    if (a.input.empty()) throw InputError("build-graph needs --input or --synth-star");
    const SegmentGraph in = read_graph_file(a.input);
    const int modes = (a.m > 0) + a.full + a.star_center.has_value();
    if (modes != 1) throw InputError("choose exactly one of --m, --full, --star");
    if (a.m > 0) {
      if (in.scores().empty()) throw InputError("--m needs \"scores\" in '" + a.input + "'");
      g = build_bipartite_topm(in.segments(), in.scores(), a.m);
    } else if (a.full) {
      g = build_full(in.segments());
    } else {
      std::vector<Segment> leaves;
      std::optional<Segment> center;
      for (const auto& s : in.segments()) {
        if (s.id == *a.star_center) {
          center = s;
        } else {
          leaves.push_back(s);
        }
      }
      if (!center) throw InputError("--star center " + std::to_string(*a.star_center) + " not in graph");
      g = build_star(*center, leaves);
    }
  }
  emit(dump(graph_to_json(g)), a.out, out);
  return kExitOk;
}

struct BenchMemoryArgs {
  ModelArgs model;
  std::string neighbors = "1,2,4,8";
  std::string words = "500,1000";
  std::string topologies = "sequential,graphkv";
  std::uint64_t budget = 0;
  bool analytic_only = false;
  unsigned workers = 1;
  std::string out;
};

int cmd_bench_memory(const BenchMemoryArgs& a, std::ostream& out) {
  const ModelBundle model = load_model(a.model, bench_model_config());
  MemoryBenchOptions o;
  o.neighbors = parse_list<std::size_t>(a.neighbors, "--neighbors");
  o.words = parse_list<std::size_t>(a.words, "--words");
  o.topologies.clear();
  std::istringstream in(a.topologies);
  for (std::string t; std::getline(in, t, ',');) o.topologies.push_back(parse_topology(t));
  if (a.budget > 0) o.budget_tokens = a.budget;
  o.analytic_only = a.analytic_only;
  o.seed = a.model.seed ? *a.model.seed : default_seed();
  o.workers = a.workers;
  emit(memory_csv(run_memory_bench(model, o)), a.out, out);
  return kExitOk;
}

struct BenchTtftArgs {
  ModelArgs model;
  std::string words = "100,200,400,800";
  std::size_t neighbors = 10;
  unsigned runs = 5;
  std::string topologies = "sequential,graphkv-cached";
  std::string out;
};

int cmd_bench_ttft(const BenchTtftArgs& a, std::ostream& out) {
  const ModelBundle model = load_model(a.model, bench_model_config());
  TtftBenchOptions o;
  o.words = parse_list<std::size_t>(a.words, "--words");
  o.neighbors = a.neighbors;
  if (a.runs < 5) throw InputError("--runs must be >= 5 (medians of at least 5 runs)");
  o.runs = a.runs;
  o.topologies.clear();
  std::istringstream in(a.topologies);
  for (std::string t; std::getline(in, t, ',');) o.topologies.push_back(t);
  o.seed = a.model.seed ? *a.model.seed : default_seed();
  emit(ttft_csv(run_ttft_bench(model, o)), a.out, out);
  return kExitOk;
}

struct VerifyArgs {
  std::optional<std::uint64_t> seed;
  unsigned workers = 2;
  std::string json_out;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const VerifyReport report = run_verify(a.seed ? *a.seed : default_seed(), a.workers);
  out << report.to_text();
  if (!a.json_out.empty()) write_text_file(a.json_out, dump(report.to_json()));
  return report.all_passed() ? kExitOk : kExitInternal;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"gkv: segment-graph KV cache inference engine"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Encode a graph and greedily answer a query");
  add_model_options(g, gen.model);
  add_graph_options(g, gen.graph);
  add_encode_options(g, gen.enc);
  g->add_option("--query", gen.query, "Query text")->required();
  g->add_option("--max-new", gen.max_new, "Maximum generated tokens");
  g->add_option("--temperature", gen.temperature, "Decode-time softmax temperature");
  g->add_option("--scale", gen.scale, "Decode-time attention logit scale");
  g->add_flag("--ignore-eot", gen.ignore_eot, "Do not stop on the end-of-text token");
  g->add_option("--cache", gen.cache, "Use a cache written by `prefill`");
  g->add_option("--out", gen.out, "Write JSON here instead of stdout");

  PrefillArgs pre;
  auto* p = app.add_subcommand("prefill", "Encode a graph and write the cache file");
  add_model_options(p, pre.model);
  add_graph_options(p, pre.graph);
  add_encode_options(p, pre.enc);
  p->add_option("--out", pre.out, "Cache file (GKVC)")->required();

  InitWeightsArgs iw;
  auto* w = app.add_subcommand("init-weights", "Write seeded random weights");
  w->add_option("--seed", iw.seed, "Generator seed (default GKV_SEED or 42)");
  w->add_option("--layers", iw.config.n_layers);
  w->add_option("--heads", iw.config.n_heads);
  w->add_option("--d-model", iw.config.d_model);
  w->add_option("--d-head", iw.config.d_head);
  w->add_option("--d-ff", iw.config.d_ff);
  w->add_option("--max-positions", iw.config.max_positions);
  w->add_option("--theta", iw.config.theta_base);
  w->add_option("--out", iw.out, "Weight file (GKVW)")->required();

  BuildGraphArgs bg;
  auto* b = app.add_subcommand("build-graph", "Build a topology JSON from segments/scores");
  b->add_option("--input", bg.input, "Graph JSON with segments (and scores for --m)");
  b->add_option("--m", bg.m, "Bipartite top-m");
  b->add_flag("--full", bg.full, "Full topology");
  b->add_option("--star", bg.star_center, "Star with this center id");
  b->add_option("--synth-star", bg.synth_leaves, "Synthetic star with this many leaves");
  b->add_option("--words", bg.words, "Words per node for --synth-star");
  b->add_option("--seed", bg.seed);
  b->add_option("--out", bg.out);

  BenchMemoryArgs bm;
  auto* mem = app.add_subcommand("bench-memory", "Peak memory vs. number of neighbors (CSV)");
  add_model_options(mem, bm.model);
  mem->add_option("--neighbors", bm.neighbors, "Comma-separated neighbor counts");
  mem->add_option("--words", bm.words, "Comma-separated words per node");
  mem->add_option("--topologies", bm.topologies, "Comma-separated topologies");
  mem->add_option("--budget-tokens", bm.budget, "Stop a sweep past this peak-block budget");
  mem->add_flag("--analytic-only", bm.analytic_only, "Cost model only, no execution");
  mem->add_option("--workers", bm.workers);
  mem->add_option("--out", bm.out);

  BenchTtftArgs bt;
  auto* ttft = app.add_subcommand("bench-ttft", "Time to first token vs. words per node (CSV)");
  add_model_options(ttft, bt.model);
  ttft->add_option("--words", bt.words, "Comma-separated words per node");
  ttft->add_option("--neighbors", bt.neighbors);
  ttft->add_option("--runs", bt.runs, "Runs per point (median reported)");
  ttft->add_option("--topologies", bt.topologies,
                   "sequential, parallel-cached, graphkv-cached");
  ttft->add_option("--out", bt.out);

  VerifyArgs va;
  auto* v = app.add_subcommand("verify", "Run the oracle-equivalence suite");
  v->add_option("--seed", va.seed);
  v->add_option("--workers", va.workers);
  v->add_option("--json", va.json_out, "Also write a JSON report here");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }

  try {
    if (*g) return cmd_generate(gen, out, err);
    if (*p) return cmd_prefill(pre, out, err);
    if (*w) return cmd_init_weights(iw, out);
    if (*b) return cmd_build_graph(bg, out);
    if (*mem) return cmd_bench_memory(bm, out);
    if (*ttft) return cmd_bench_ttft(bt, out);
    if (*v) return cmd_verify(va, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitBadInput;
}

}  // namespace gkv::cli
