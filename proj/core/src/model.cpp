#include "gkv/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "gkv/errors.hpp"

namespace gkv {

void ModelConfig::validate() const {
  if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_head == 0 ||
      d_ff == 0 || vocab_size == 0 || max_positions == 0) {
    throw InputError("model config: all counts must be >= 1");
  }
  if (d_model != n_heads * d_head) {
    throw InputError("model config: d_model must equal n_heads * d_head");
  }
  if (d_head % 2 != 0) throw InputError("model config: d_head must be even");
  if (!(theta_base > 0.0f) || !(epsilon >= 0.0f)) {
    throw InputError("model config: theta_base must be > 0, epsilon >= 0");
  }
}

void for_each_tensor(Weights& w, const std::function<void(Tensor&)>& fn) {
  fn(w.tok_embed);
  for (auto& l : w.layers) {
    for (Tensor* t : {&l.attn_norm, &l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_norm,
                      &l.w_gate, &l.w_up, &l.w_down}) {
      fn(*t);
    }
  }
  fn(w.final_norm);
  fn(w.lm_head);
}

void for_each_tensor(const Weights& w,
                     const std::function<void(const Tensor&)>& fn) {
  for_each_tensor(const_cast<Weights&>(w),
                  [&](Tensor& t) { fn(static_cast<const Tensor&>(t)); });
}

Weights empty_weights(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  Weights w;
  w.tok_embed = Tensor({c.vocab_size, d});
  w.layers.resize(c.n_layers);
  for (auto& l : w.layers) {
    l.attn_norm = Tensor({d});
    l.wq = Tensor({d, d});
    l.wk = Tensor({d, d});
    l.wv = Tensor({d, d});
    l.wo = Tensor({d, d});
    l.ffn_norm = Tensor({d});
    l.w_gate = Tensor({d, c.d_ff});
    l.w_up = Tensor({d, c.d_ff});
    l.w_down = Tensor({c.d_ff, d});
  }
  w.final_norm = Tensor({d});
  w.lm_head = Tensor({d, c.vocab_size});
  return w;
}

void validate_weights(const ModelConfig& config, const Weights& weights) {
  const Weights expected = empty_weights(config);
  if (weights.layers.size() != expected.layers.size()) {
    throw FormatError("weights: shape inconsistency (layer count)");
  }
  std::vector<std::vector<std::size_t>> shapes;
  for_each_tensor(expected,
                  [&](const Tensor& t) { shapes.push_back(t.shape()); });
  std::size_t i = 0;
  for_each_tensor(weights, [&](const Tensor& t) {
    if (t.shape() != shapes[i++]) {
      throw FormatError("weights: shape inconsistency (tensor " +
                        std::to_string(i - 1) + ")");
    }
    for (float v : t.data()) {
      if (!std::isfinite(v)) throw FormatError("weights: non-finite value");
    }
  });
}

Weights random_weights(const ModelConfig& config, std::uint64_t seed) {
  Weights w = empty_weights(config);
  std::mt19937_64 rng(seed);
  const float bound = 1.0f / std::sqrt(static_cast<float>(config.d_model));
  auto fill = [&](Tensor& t) {
    for (float& v : t.data()) {
      const double u = static_cast<double>(rng() >> 40) * 0x1.0p-24;
      v = static_cast<float>(u * 2.0 - 1.0) * bound;
    }
  };
  auto ones = [](Tensor& t) {
    for (float& v : t.data()) v = 1.0f;
  };
  fill(w.tok_embed);
  for (auto& l : w.layers) {
    ones(l.attn_norm);
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    ones(l.ffn_norm);
    fill(l.w_gate);
    fill(l.w_up);
    fill(l.w_down);
  }
  ones(w.final_norm);
  fill(w.lm_head);
  return w;
}

// ---------------------------------------------------------------------------

namespace {

void rmsnorm_rows(std::span<const float> x, const Tensor& gain, float eps,
                  std::span<float> out, std::size_t rows, std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    rmsnorm_into(x.subspan(r * d, d), gain.data(), eps, out.subspan(r * d, d));
  }
}

}  // namespace

EncodeResult encode_block(std::span<const TokenId> tokens,
                          std::uint64_t start_position,
                          std::span<const KVBlock* const> visible,
                          const ModelConfig& config, const Weights& weights,
                          EncodeMode mode, AttentionKnobs knobs,
                          AttentionTrace* trace) {
  if (tokens.empty()) throw InputError("encode_block: empty token list");
  const std::size_t t = tokens.size();
  if (start_position + t > config.max_positions) {
    throw InputError("position overflow: block ends at " +
                     std::to_string(start_position + t) + " > max_positions " +
                     std::to_string(config.max_positions));
  }
  for (TokenId id : tokens) {
    if (id >= config.vocab_size) {
      throw InputError("token id " + std::to_string(id) +
                       " out of range for vocab_size " +
                       std::to_string(config.vocab_size));
    }
  }
  const std::size_t d = config.d_model;
  const std::size_t dh = config.d_head;
  const std::size_t nh = config.n_heads;
  const std::size_t ff = config.d_ff;
  for (const KVBlock* b : visible) {
    if (b->layers.size() != config.n_layers) {
      throw InputError("encode_block: visible block has wrong layer count");
    }
  }
  const std::uint64_t visible_rows = total_length(visible);
  const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

  EncodeResult result;
  result.block.position_start = start_position;
  result.block.length = t;
  result.block.layers.resize(config.n_layers);

  std::vector<float> x(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    auto row = weights.tok_embed.row(tokens[i]);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
  }

  std::vector<float> xn(t * d), q(t * d), attn(t * d), proj(t * d);
  std::vector<float> gate(t * ff), up(t * ff);
  std::vector<float> scores(visible_rows + t);
  if (trace) trace->rows.clear();

  for (std::size_t layer = 0; layer < config.n_layers; ++layer) {
    const LayerWeights& lw = weights.layers[layer];
    LayerKV& kv = result.block.layers[layer];
    kv.keys.assign(t * d, 0.0f);
    kv.values.assign(t * d, 0.0f);

    rmsnorm_rows(x, lw.attn_norm, config.epsilon, xn, t, d);
    matmul_into(xn, lw.wq.data(), q, t, d, d);
    matmul_into(xn, lw.wk.data(), kv.keys, t, d, d);
    matmul_into(xn, lw.wv.data(), kv.values, t, d, d);
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t pos = start_position + i;
      for (std::size_t h = 0; h < nh; ++h) {
        const std::size_t off = i * d + h * dh;
        rope_rotate_inplace(std::span(q).subspan(off, dh), pos,
                            config.theta_base);
        rope_rotate_inplace(std::span(kv.keys).subspan(off, dh), pos,
                            config.theta_base);
      }
    }

    std::fill(attn.begin(), attn.end(), 0.0f);
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t row_len = visible_rows + i + 1;
      if (layer == 0) result.score_count += row_len;
      for (std::size_t h = 0; h < nh; ++h) {
        std::span<const float> qh(q.data() + i * d + h * dh, dh);
        std::size_t s = 0;
        for (const KVBlock* b : visible) {
          const float* keys = b->layers[layer].keys.data();
          for (std::size_t r = 0; r < b->length; ++r) {
            scores[s++] = dot(qh, {keys + r * d + h * dh, dh}) * inv_sqrt_dh;
          }
        }
        for (std::size_t r = 0; r <= i; ++r) {
          scores[s++] =
              dot(qh, {kv.keys.data() + r * d + h * dh, dh}) * inv_sqrt_dh;
        }
        std::span<float> row(scores.data(), row_len);
        softmax_inplace(row, knobs.temperature, knobs.scale);
        if (trace && layer == 0 && h == 0) {
          trace->rows.emplace_back(row.begin(), row.end());
        }

        float* out = attn.data() + i * d + h * dh;
        s = 0;
        for (const KVBlock* b : visible) {
          const float* vals = b->layers[layer].values.data();
          for (std::size_t r = 0; r < b->length; ++r) {
            const float p = scores[s++];
            const float* v = vals + r * d + h * dh;
            for (std::size_t e = 0; e < dh; ++e) out[e] += p * v[e];
          }
        }
        for (std::size_t r = 0; r <= i; ++r) {
          const float p = scores[s++];
          const float* v = kv.values.data() + r * d + h * dh;
          for (std::size_t e = 0; e < dh; ++e) out[e] += p * v[e];
        }
      }
    }
    matmul_into(attn, lw.wo.data(), proj, t, d, d);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];

    rmsnorm_rows(x, lw.ffn_norm, config.epsilon, xn, t, d);
    matmul_into(xn, lw.w_gate.data(), gate, t, d, ff);
    matmul_into(xn, lw.w_up.data(), up, t, d, ff);
    swiglu_inplace(gate, up);
    matmul_into(gate, lw.w_down.data(), proj, t, ff, d);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];

    require_finite(kv.keys, "encode_block keys");
    require_finite(kv.values, "encode_block values");
  }
  require_finite(x, "encode_block hidden state");

  if (mode != EncodeMode::kPrefill) {
    const std::size_t first = mode == EncodeMode::kLastLogits ? t - 1 : 0;
    const std::size_t rows = t - first;
    const std::size_t vocab = config.vocab_size;
    std::span<const float> xs = std::span<const float>(x).subspan(first * d);
    std::span<float> xns = std::span<float>(xn).subspan(0, rows * d);
    rmsnorm_rows(xs, weights.final_norm, config.epsilon, xns, rows, d);
    result.logits.resize(rows * vocab);
    matmul_into(xns, weights.lm_head.data(), result.logits, rows, d, vocab);
    result.logit_rows = rows;
    require_finite(result.logits, "encode_block logits");
  }
  return result;
}

TokenId argmax(std::span<const float> logits) {
  if (logits.empty()) throw InvariantError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace gkv
