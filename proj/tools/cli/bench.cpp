#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "gkv/decoder.hpp"
#include "gkv/encoders.hpp"
#include "gkv/errors.hpp"
#include "gkv/oracle.hpp"
#include "gkv/weights_io.hpp"

namespace gkv::cli {

ModelConfig bench_model_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_model = 4;
  c.d_head = 4;
  c.d_ff = 8;
  return c;
}

bool reset_peak_rss() {
  std::ofstream f("/proc/self/clear_refs");
  if (!f) return false;
  f << "5";
  f.flush();
  return static_cast<bool>(f);
}

std::optional<std::uint64_t> peak_rss_bytes() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream in(line.substr(6));
      std::uint64_t kb = 0;
      if (in >> kb) return kb * 1024;
    }
  }
  return std::nullopt;
}

std::uint64_t median(std::vector<std::uint64_t> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

namespace {

CacheState encode_with(Topology topology, const SegmentGraph& graph,
                       const ModelBundle& model, unsigned workers) {
  EncoderOptions opts;
  opts.workers = workers;
  switch (topology) {
    case Topology::kSequential:
      return encode_sequential(graph, model.config, model.weights, opts);
    case Topology::kParallel:
      return encode_parallel(graph, model.config, model.weights, opts);
    case Topology::kGraphKV:
      return encode_graphkv(graph, model.config, model.weights, opts);
  }
  throw InvariantError("unhandled topology");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<MemoryRow> run_memory_bench(const ModelBundle& model,
                                        const MemoryBenchOptions& options) {
  const auto query = tokenize(options.query);
  std::vector<MemoryRow> rows;
  for (Topology topo : options.topologies) {
    for (std::size_t words : options.words) {
      for (std::size_t n : options.neighbors) {
        const SegmentGraph graph = synth_star(n, words, options.seed);
        const CostPrediction predicted =
            cost_model(GraphShape::of(graph), topo, query.size(), 1);
        if (options.budget_tokens &&
            predicted.peak_block_tokens > *options.budget_tokens) {
          break;
        }
        MemoryRow row;
        row.topology = topo;
        row.neighbors = n;
        row.words = words;
        row.model_peak_tokens = predicted.peak_block_tokens;
        row.kv_entries = predicted.kv_entries;
        if (!options.analytic_only) {
          const bool reset = reset_peak_rss();
          GenerateOptions gen;
          gen.max_new = 1;
          gen.stop_on_eot = false;
          const CacheState cache = encode_with(topo, graph, model, options.workers);
          const GenerationResult res =
              generate(cache, graph, query, model.config, model.weights, gen);
          if (res.metrics.peak_block_tokens != predicted.peak_block_tokens ||
              res.metrics.kv_entries_total != predicted.kv_entries) {
            throw InvariantError("memory bench: measured counters disagree with "
                                 "the cost model");
          }
          const auto peak = peak_rss_bytes();
          if (reset && peak) row.peak_bytes = static_cast<std::int64_t>(*peak);
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::string memory_csv(const std::vector<MemoryRow>& rows) {
  std::ostringstream out;
  out << "schema,topology,neighbors,words,peak_bytes,model_peak_tokens,kv_entries\n";
  for (const auto& r : rows) {
    out << kMemorySchema << ',' << to_string(r.topology) << ',' << r.neighbors
        << ',' << r.words << ',' << r.peak_bytes << ',' << r.model_peak_tokens
        << ',' << r.kv_entries << '\n';
  }
  return out.str();
}

std::vector<MemoryRow> parse_memory_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) ||
      line != "schema,topology,neighbors,words,peak_bytes,model_peak_tokens,kv_entries") {
    throw InputError("memory csv: unexpected header");
  }
  std::vector<MemoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7 || f[0] != kMemorySchema) {
      throw InputError("memory csv: schema mismatch in row '" + line + "'");
    }
    MemoryRow r;
    r.topology = parse_topology(f[1]);
    r.neighbors = std::stoull(f[2]);
    r.words = std::stoull(f[3]);
    r.peak_bytes = std::stoll(f[4]);
    r.model_peak_tokens = std::stoull(f[5]);
    r.kv_entries = std::stoull(f[6]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<TtftRow> run_ttft_bench(const ModelBundle& model,
                                    const TtftBenchOptions& options) {
  using Clock = std::chrono::steady_clock;
  if (options.runs < 1) throw InputError("ttft bench: runs must be >= 1");
  const auto query = tokenize(options.query);
  const std::uint64_t hash = config_hash(model.config);
  GenerateOptions gen;
  gen.max_new = 1;
  gen.stop_on_eot = false;

  std::vector<TtftRow> rows;
  for (const std::string& name : options.topologies) {
    for (std::size_t words : options.words) {
      const SegmentGraph graph = synth_star(options.neighbors, words, options.seed);
      TtftRow row;
      row.topology = name;
      row.neighbors = options.neighbors;
      row.words = words;
      if (name == "sequential") {
        for (unsigned r = 0; r < options.runs; ++r) {
          const auto t0 = Clock::now();
          const CacheState cache =
              encode_with(Topology::kSequential, graph, model, options.workers);
          const auto prefill = Clock::now() - t0;
          const GenerationResult res =
              generate(cache, graph, query, model.config, model.weights, gen);
          row.runs_ns.push_back(
              static_cast<std::uint64_t>(
                  std::chrono::duration_cast<std::chrono::nanoseconds>(prefill).count()) +
              res.metrics.ttft_ns);
        }
      } else if (name == "graphkv-cached" || name == "parallel-cached") {
        const Topology topo =
            name == "graphkv-cached" ? Topology::kGraphKV : Topology::kParallel;
        const auto path = std::filesystem::temp_directory_path() /
                          ("gkv_ttft_" + std::to_string(::getpid()) + "_" +
                           name + "_" + std::to_string(words) + ".gkvc");
        save_cache(path.string(), encode_with(topo, graph, model, options.workers),
                   hash);
        const CacheState cache = load_cache(path.string(), hash,
                                            model.config.n_layers,
                                            model.config.d_model);
        std::filesystem::remove(path);
        for (unsigned r = 0; r < options.runs; ++r) {
          const GenerationResult res =
              generate(cache, graph, query, model.config, model.weights, gen);
          row.runs_ns.push_back(res.metrics.ttft_ns);
        }
      } else {
        throw InputError("ttft bench: unknown topology '" + name +
                         "' (expected sequential|parallel-cached|graphkv-cached)");
      }
      row.median_ns = median(row.runs_ns);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string ttft_csv(const std::vector<TtftRow>& rows) {
  std::ostringstream out;
  out << "schema,topology,neighbors,words_per_node,ttft_ns_median,ttft_ns_runs\n";
  for (const auto& r : rows) {
    out << kTtftSchema << ',' << r.topology << ',' << r.neighbors << ','
        << r.words << ',' << r.median_ns << ',';
    for (std::size_t i = 0; i < r.runs_ns.size(); ++i) {
      if (i) out << ';';
      out << r.runs_ns[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace gkv::cli
