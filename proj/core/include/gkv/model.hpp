#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gkv/kv_block.hpp"
#include "gkv/tensor.hpp"
#include "gkv/tokenizer.hpp"

namespace gkv {

struct ModelConfig {
  std::uint32_t n_layers = 2;
  std::uint32_t n_heads = 2;
  std::uint32_t d_model = 16;
  std::uint32_t d_head = 8;
  std::uint32_t d_ff = 32;
  std::uint32_t vocab_size = kByteVocabSize;
  // Positions must stay strictly below this bound.
  std::uint32_t max_positions = 1u << 20;
  float theta_base = 10000.0f;
  float epsilon = 1e-5f;

  // Throws InputError when d_model != n_heads * d_head, d_head is odd or a
  // count is zero.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  Tensor attn_norm;  // [d_model]
  Tensor wq;         // [d_model x d_model]
  Tensor wk;         // [d_model x d_model]
  Tensor wv;         // [d_model x d_model]
  Tensor wo;         // [d_model x d_model]
  Tensor ffn_norm;   // [d_model]
  Tensor w_gate;     // [d_model x d_ff]
  Tensor w_up;       // [d_model x d_ff]
  Tensor w_down;     // [d_ff x d_model]

  bool operator==(const LayerWeights&) const = default;
};

struct Weights {
  Tensor tok_embed;  // [vocab_size x d_model]
  std::vector<LayerWeights> layers;
  Tensor final_norm;  // [d_model]
  Tensor lm_head;     // [d_model x vocab_size]

  bool operator==(const Weights&) const = default;
};

// Visits every weight tensor in the canonical order used by the weight file
// and by random_weights:
//   tok_embed, then per layer {attn_norm, wq, wk, wv, wo, ffn_norm, w_gate,
//   w_up, w_down}, then final_norm, lm_head.
void for_each_tensor(Weights& w, const std::function<void(Tensor&)>& fn);
void for_each_tensor(const Weights& w,
                     const std::function<void(const Tensor&)>& fn);

// Weights with every tensor shaped for `config` and filled with zeros.
Weights empty_weights(const ModelConfig& config);

// Throws FormatError on any shape disagreement or non-finite value.
void validate_weights(const ModelConfig& config, const Weights& weights);

// Deterministic weights. The generator is std::mt19937_64 seeded with `seed`;
// each projection/embedding value takes one 64-bit draw x and becomes
//   ((x >> 40) * 2^-24 * 2 - 1) / sqrt(d_model),
// i.e. uniform in [-1/sqrt(d_model), 1/sqrt(d_model)). Tensors are filled in
// for_each_tensor order; norm gains are set to 1 and consume no draws.
Weights random_weights(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------

// Softmax knobs; the logits of every attention row become
// scale * (q.k / sqrt(d_head)) / temperature.
struct AttentionKnobs {
  float temperature = 1.0f;
  float scale = 1.0f;
};

enum class EncodeMode {
  kPrefill,     // K/V only
  kAllLogits,   // K/V plus next-token logits for every block position
  kLastLogits,  // K/V plus logits for the final block position
};

// Optional probe capturing the layer-0, head-0 attention probabilities of
// every block token (one row per token, keys in visible-then-causal order).
struct AttentionTrace {
  std::vector<std::vector<float>> rows;
};

struct EncodeResult {
  KVBlock block;               // segment_id/round are left 0 for the caller
  std::vector<float> logits;   // logit_rows x vocab_size
  std::size_t logit_rows = 0;
  std::uint64_t score_count = 0;  // (query, key) pairs scored, counted once
                                  // per pair regardless of layers and heads

  std::span<const float> logits_row(std::size_t r, std::size_t vocab) const {
    return std::span<const float>(logits).subspan(r * vocab, vocab);
  }
};

// Encodes `tokens` at positions start_position.. against the already-cached
// `visible` blocks. Token i attends to every visible row (in list order)
// followed by block tokens 0..i.
//
// Throws InputError for empty input, token ids >= vocab_size, or positions
// reaching config.max_positions.
EncodeResult encode_block(std::span<const TokenId> tokens,
                          std::uint64_t start_position,
                          std::span<const KVBlock* const> visible,
                          const ModelConfig& config, const Weights& weights,
                          EncodeMode mode = EncodeMode::kPrefill,
                          AttentionKnobs knobs = {},
                          AttentionTrace* trace = nullptr);

// Index of the largest logit; ties go to the lowest id.
TokenId argmax(std::span<const float> logits);

}  // namespace gkv
