#include <gtest/gtest.h>

#include "gkv/decoder.hpp"
#include "gkv/encoders.hpp"
#include "gkv/kv_cache.hpp"
#include "gkv/oracle.hpp"
#include "gkv/weights_io.hpp"
#include "test_util.hpp"

namespace gkv {
namespace {

class Decoder : public ::testing::Test {
 protected:
  ModelConfig config = test::tiny_config();
  Weights weights = random_weights(config, 31);
  std::mt19937_64 rng{31};
  std::vector<TokenId> query = tokenize("which?");
};

TEST_F(Decoder, VisibleSetPerTopology) {
  const SegmentGraph g = test::random_star(rng, 3, 4, 9);
  const auto seq = visible_set(encode_sequential(g, std::vector<SegmentId>{2, 0, 3, 1},
                                                 config, weights), g);
  ASSERT_EQ(seq.size(), 4u);
  EXPECT_EQ(seq[0]->segment_id, 2u);
  EXPECT_EQ(seq[3]->segment_id, 1u);

  const CacheState gk = encode_graphkv(g, config, weights);
  const auto vis = visible_set(gk, g);
  ASSERT_EQ(vis.size(), 4u);
  EXPECT_EQ(vis[0]->segment_id, 0u);
  EXPECT_EQ(vis[0]->round, 1u);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(vis[i]->round, 0u);

  CacheState missing = encode_parallel(g.without_edges(), config, weights);
  EXPECT_THROW(visible_set(CacheState{Topology::kGraphKV, 1, missing.L, 0, missing.store, {}}, g),
               InputError);
}

TEST_F(Decoder, GraphKVGenerationMatchesReference) {
  for (int trial = 0; trial < 3; ++trial) {
    const Weights w = random_weights(config, 40 + trial);
    const SegmentGraph g = test::random_star(rng, 2 + trial, 3, 10);
    const CacheState c = encode_graphkv(g, config, w);
    GenerateOptions o;
    o.max_new = 6;
    o.stop_on_eot = false;
    const auto res = generate(c, g, query, config, w, o);
    const auto ref = reference_generate(graphkv_layout(g, plan_positions(g)), query, 6,
                                        config, w, false);
    EXPECT_EQ(res.tokens, ref);
    EXPECT_EQ(res.tokens.size(), 6u);
  }
}

TEST_F(Decoder, SequentialGenerationMatchesReference) {
  const SegmentGraph g = test::random_star(rng, 2, 3, 10);
  const CacheState c = encode_sequential(g, config, weights);
  GenerateOptions o;
  o.max_new = 5;
  o.stop_on_eot = false;
  const auto ids = g.ids();
  EXPECT_EQ(generate(c, g, query, config, weights, o).tokens,
            reference_generate(sequential_layout(g, ids), query, 5, config, weights, false));
}

TEST_F(Decoder, MetricsMatchCostModel) {
  const SegmentGraph g = test::random_star(rng, 4, 3, 10);
  for (Topology topo : {Topology::kSequential, Topology::kParallel, Topology::kGraphKV}) {
    CacheState c = topo == Topology::kSequential ? encode_sequential(g, config, weights)
                 : topo == Topology::kParallel   ? encode_parallel(g, config, weights)
                                                 : encode_graphkv(g, config, weights);
    GenerateOptions o;
    o.max_new = 4;
    o.stop_on_eot = false;
    const RunMetrics m = generate(c, g, query, config, weights, o).metrics;
    const CostPrediction p = cost_model(GraphShape::of(g), topo, query.size(), 4);
    EXPECT_EQ(m.score_count, p.score_count);
    EXPECT_EQ(m.prefill_score_count, p.prefill_score_count);
    EXPECT_EQ(m.decode_score_count, p.decode_score_count);
    EXPECT_EQ(m.peak_block_tokens, p.peak_block_tokens);
    EXPECT_EQ(m.kv_entries_total, p.kv_entries);
    EXPECT_EQ(m.max_position_index, p.max_position_index);
    EXPECT_GT(m.ttft_ns, 0u);
  }
}

TEST_F(Decoder, StopsOnEotWithoutEmittingIt) {
  const SegmentGraph g = test::random_star(rng, 1, 3, 5);
  const std::size_t d = config.d_model, vocab = config.vocab_size;
  // First read the query's final hidden state through an identity head...
  Weights probe = weights;
  std::fill(probe.lm_head.data().begin(), probe.lm_head.data().end(), 0.0f);
  for (std::size_t r = 0; r < d; ++r) probe.lm_head[r * vocab + r] = 1.0f;
  const CacheState c = encode_parallel(g, config, weights);
  GenerateOptions o;
  o.max_new = 1;
  o.keep_logits = true;
  const auto hidden = generate(c, g, query, config, probe, o).step_logits.at(0);
  // ...then point the EOT column along it so EOT is the first argmax.
  Weights w = probe;
  std::fill(w.lm_head.data().begin(), w.lm_head.data().end(), 0.0f);
  for (std::size_t r = 0; r < d; ++r) w.lm_head[r * vocab + kEotToken] = hidden[r];

  const auto stopped = generate(c, g, query, config, w);
  EXPECT_TRUE(stopped.tokens.empty());
  GenerateOptions keep;
  keep.max_new = 3;
  keep.stop_on_eot = false;
  const auto forced = generate(c, g, query, config, w, keep);
  ASSERT_EQ(forced.tokens.size(), 3u);
  EXPECT_EQ(forced.tokens[0], kEotToken);
}

TEST_F(Decoder, CacheRoundTripDecodesBitwise) {
  const SegmentGraph g = test::random_star(rng, 3, 5, 12);
  const CacheState c = encode_graphkv(g, config, weights);
  const auto bytes = serialize_cache(c, config_hash(config));
  const CacheState back = deserialize_cache(bytes, config_hash(config), config.n_layers,
                                            config.d_model);
  GenerateOptions o;
  o.max_new = 5;
  o.keep_logits = true;
  o.stop_on_eot = false;
  const auto a = generate(c, g, query, config, weights, o);
  const auto b = generate(back, g, query, config, weights, o);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.step_logits, b.step_logits);
}

TEST_F(Decoder, KnobsApplyAtDecodeOnly) {
  const SegmentGraph g = test::random_star(rng, 3, 5, 12);
  const CacheState c = encode_graphkv(g, config, weights);
  GenerateOptions o;
  o.max_new = 1;
  o.keep_logits = true;
  const auto plain = generate(c, g, query, config, weights, o);
  o.knobs = {2.0f, 1.0f};
  const auto warm = generate(c, g, query, config, weights, o);
  EXPECT_NE(plain.step_logits, warm.step_logits);
  o.knobs = {1.0f, 0.5f};
  const auto scaled = generate(c, g, query, config, weights, o);
  EXPECT_LT(relative_error(scaled.step_logits[0], warm.step_logits[0]), kOracleTolerance);
}

TEST_F(Decoder, RejectsEmptyQueryAndOverflow) {
  const SegmentGraph g = test::random_star(rng, 1, 3, 5);
  const CacheState c = encode_parallel(g, config, weights);
  EXPECT_THROW(generate(c, g, std::vector<TokenId>{}, config, weights), InputError);
  GenerateOptions o;
  o.query_start = config.max_positions - 2;
  o.max_new = 10;
  o.stop_on_eot = false;
  EXPECT_THROW(generate(c, g, query, config, weights, o), InputError);
}

}  // namespace
}  // namespace gkv
