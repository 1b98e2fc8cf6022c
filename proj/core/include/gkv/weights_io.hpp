#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gkv/model.hpp"

namespace gkv {

// Weight file layout (all little-endian):
//
//   offset  size  field
//   0       4     magic "GKVW"
//   4       4     version (u32) = kWeightsVersion
//   8       4     n_layers (u32)
//   12      4     n_heads (u32)
//   16      4     d_model (u32)
//   20      4     d_head (u32)
//   24      4     d_ff (u32)
//   28      4     vocab_size (u32)
//   32      4     max_positions (u32)
//   36      4     theta_base (f32)
//   40      4     epsilon (f32)
//   44      ...   tensors in for_each_tensor order, each as raw fp32 values
//
// Tensor shapes are implied by the config; the file must end exactly after
// the last tensor.
inline constexpr std::uint32_t kWeightsVersion = 1;
inline constexpr std::size_t kWeightsHeaderSize = 44;

// The 44 header bytes for `config`.
std::vector<std::uint8_t> weights_header_bytes(const ModelConfig& config);

// 64-bit FNV-1a over weights_header_bytes(config). Cache files record it so a
// cache cannot be replayed against a differently shaped model.
std::uint64_t config_hash(const ModelConfig& config);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

void save_weights(const std::string& path, const ModelConfig& config,
                  const Weights& weights);

// Throws FormatError with "bad magic", "version mismatch", "truncated" or
// "shape inconsistency" in the message.
std::pair<ModelConfig, Weights> load_weights(const std::string& path);

std::vector<std::uint8_t> serialize_weights(const ModelConfig& config,
                                            const Weights& weights);
std::pair<ModelConfig, Weights> deserialize_weights(
    std::span<const std::uint8_t> bytes);

}  // namespace gkv
