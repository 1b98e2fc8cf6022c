#include <filesystem>

#include <gtest/gtest.h>

#include "gkv/encoders.hpp"
#include "gkv/kv_cache.hpp"
#include "gkv/weights_io.hpp"
#include "test_util.hpp"

namespace gkv {
namespace {

KVBlock block(SegmentId id, std::uint32_t round, std::uint64_t start, std::uint64_t len) {
  KVBlock b;
  b.segment_id = id;
  b.round = round;
  b.position_start = start;
  b.length = len;
  b.layers.resize(1);
  b.layers[0].keys.assign(len * 2, static_cast<float>(id));
  b.layers[0].values.assign(len * 2, static_cast<float>(round));
  return b;
}

TEST(Topology, NamesRoundTrip) {
  for (Topology t : {Topology::kSequential, Topology::kParallel, Topology::kGraphKV}) {
    EXPECT_EQ(parse_topology(to_string(t)), t);
  }
  EXPECT_THROW(parse_topology("full"), InputError);
}

TEST(PEPlan, SharedRangesAndQueryStart) {
  std::mt19937_64 rng(1);
  const SegmentGraph g = test::random_star(rng, 4, 3, 9);
  const PEPlan p = plan_positions(g);
  EXPECT_EQ(p.L, g.max_length());
  EXPECT_EQ(p.rounds_used, 1u);
  for (SegmentId id : g.ids()) EXPECT_EQ(p.start(id, 0), 0u);
  EXPECT_EQ(p.start(0, 1), p.L);
  EXPECT_EQ(p.query_start, 2 * p.L);
  EXPECT_THROW(p.start(1, 1), InputError);

  const PEPlan shifted = plan_positions(g, 20, 3, 5);
  EXPECT_EQ(shifted.L, 20u);
  EXPECT_EQ(shifted.start(0, 3), 65u);
  EXPECT_EQ(shifted.query_start, 85u);

  const PEPlan flat = plan_positions(g.without_edges());
  EXPECT_EQ(flat.rounds_used, 0u);
  EXPECT_EQ(flat.query_start, flat.L);
  EXPECT_THROW(plan_positions(g, 2), InputError);
}

TEST(KVStore, PutGetLatestAndOrdering) {
  KVStore s;
  s.put(block(5, 0, 0, 3));
  s.put(block(2, 0, 0, 4));
  s.put(block(5, 1, 4, 3));
  EXPECT_THROW(s.put(block(5, 1, 4, 3)), InputError);
  EXPECT_TRUE(s.contains(5, 1));
  EXPECT_THROW(s.get(2, 1), InputError);
  EXPECT_EQ(s.latest(5, 7).round, 1u);
  EXPECT_EQ(s.latest(5, 0).round, 0u);
  EXPECT_EQ(s.latest(2, 3).round, 0u);
  const auto all = s.all();
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0]->segment_id, 2u);
  EXPECT_EQ(all[2]->round, 1u);
  EXPECT_TRUE(s.get_blocks({}).empty());
  EXPECT_EQ(s.get_blocks([](const KVBlock& b) { return b.round == 0; }).size(), 2u);
  EXPECT_EQ(s.total_tokens(), 10u);
  EXPECT_EQ(total_length(all), 10u);
}

TEST(KVBlock, AppendRequiresContiguousTail) {
  KVBlock a = block(1, 0, 10, 2);
  a.append(block(1, 0, 12, 3));
  EXPECT_EQ(a.length, 5u);
  EXPECT_EQ(a.position_end(), 15u);
  EXPECT_EQ(a.layers[0].keys.size(), 10u);
  EXPECT_THROW(a.append(block(1, 0, 20, 1)), InvariantError);
}

class CacheFile : public ::testing::Test {
 protected:
  ModelConfig config = test::tiny_config();
  Weights weights = random_weights(config, 21);
  CacheState cache() {
    std::mt19937_64 rng(21);
    return encode_graphkv(test::random_star(rng, 3, 4, 10), config, weights);
  }
};

TEST_F(CacheFile, RoundTripIsBitwise) {
  const CacheState c = cache();
  const auto hash = config_hash(config);
  const auto bytes = serialize_cache(c, hash);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GKVC");
  const CacheState back = deserialize_cache(bytes, hash, config.n_layers, config.d_model);
  EXPECT_EQ(back, c);
}

TEST_F(CacheFile, RejectsMismatchAndDamage) {
  const CacheState c = cache();
  const auto hash = config_hash(config);
  const auto bytes = serialize_cache(c, hash);
  EXPECT_THROW(deserialize_cache(bytes, hash + 1, config.n_layers, config.d_model), FormatError);
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(deserialize_cache(bad, hash, config.n_layers, config.d_model), FormatError);
  bad.assign(bytes.begin(), bytes.end() - 1);
  EXPECT_THROW(deserialize_cache(bad, hash, config.n_layers, config.d_model), FormatError);
  bad = bytes;
  bad.push_back(1);
  EXPECT_THROW(deserialize_cache(bad, hash, config.n_layers, config.d_model), FormatError);
}

TEST_F(CacheFile, SaveLoad) {
  const auto path = std::filesystem::temp_directory_path() / "gkv_cache_test.gkvc";
  const CacheState c = cache();
  save_cache(path.string(), c, config_hash(config));
  EXPECT_EQ(load_cache(path.string(), config_hash(config), config.n_layers, config.d_model), c);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace gkv
