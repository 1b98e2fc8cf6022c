#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gkv/kv_cache.hpp"
#include "gkv/model.hpp"

namespace gkv::cli {

struct ModelBundle {
  ModelConfig config;
  Weights weights;
};

// Config used by the benchmark suite when no weight file is given: small
// enough that an 11-node, 800-word sequential prefill stays in seconds.
ModelConfig bench_model_config();

inline constexpr const char* kMemorySchema = "gkv.bench_memory.v1";
inline constexpr const char* kTtftSchema = "gkv.bench_ttft.v1";

// --- memory vs. neighbor count --------------------------------------------

struct MemoryBenchOptions {
  std::vector<std::size_t> neighbors{1, 2, 4, 8};
  std::vector<std::size_t> words{500, 1000};
  std::vector<Topology> topologies{Topology::kSequential, Topology::kGraphKV};
  // A topology stops sweeping a words setting once its model_peak_tokens
  // would exceed this budget.
  std::optional<std::uint64_t> budget_tokens;
  bool analytic_only = false;
  std::uint64_t seed = 42;
  std::string query = "which ideas do these papers share?";
  unsigned workers = 1;
};

struct MemoryRow {
  Topology topology = Topology::kSequential;
  std::size_t neighbors = 0;
  std::size_t words = 0;
  std::int64_t peak_bytes = -1;  // resident high-water mark; -1 if unmeasured
  std::uint64_t model_peak_tokens = 0;
  std::uint64_t kv_entries = 0;

  bool operator==(const MemoryRow&) const = default;
};

std::vector<MemoryRow> run_memory_bench(const ModelBundle& model,
                                        const MemoryBenchOptions& options);
std::string memory_csv(const std::vector<MemoryRow>& rows);
// Throws InputError on a schema or column mismatch.
std::vector<MemoryRow> parse_memory_csv(const std::string& csv);

// --- time to first token ----------------------------------------------------

struct TtftBenchOptions {
  std::vector<std::size_t> words{100, 200, 400, 800};
  std::size_t neighbors = 10;
  unsigned runs = 5;
  // "sequential" (prefill inside the timed region), "parallel-cached" and
  // "graphkv-cached" (cache prefilled, written to disk and reloaded first).
  std::vector<std::string> topologies{"sequential", "graphkv-cached"};
  std::uint64_t seed = 42;
  std::string query = "which ideas do these papers share?";
  unsigned workers = 1;
};

struct TtftRow {
  std::string topology;
  std::size_t neighbors = 0;
  std::size_t words = 0;
  std::uint64_t median_ns = 0;
  std::vector<std::uint64_t> runs_ns;
};

std::vector<TtftRow> run_ttft_bench(const ModelBundle& model,
                                    const TtftBenchOptions& options);
std::string ttft_csv(const std::vector<TtftRow>& rows);

std::uint64_t median(std::vector<std::uint64_t> values);

// Resets the kernel's resident high-water mark for this process; false when
// the platform does not allow it.
bool reset_peak_rss();
std::optional<std::uint64_t> peak_rss_bytes();

}  // namespace gkv::cli
