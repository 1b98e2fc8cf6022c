#include "gkv/weights_io.hpp"

#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "gkv/errors.hpp"

namespace gkv {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path,
                                    const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(what + ": cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes,
                const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(what + ": cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError(what + ": write failed for '" + path + "'");
}

}  // namespace detail

namespace {

void write_header(detail::ByteWriter& w, const ModelConfig& c) {
  w.raw("GKVW");
  w.u32(kWeightsVersion);
  w.u32(c.n_layers);
  w.u32(c.n_heads);
  w.u32(c.d_model);
  w.u32(c.d_head);
  w.u32(c.d_ff);
  w.u32(c.vocab_size);
  w.u32(c.max_positions);
  w.f32(c.theta_base);
  w.f32(c.epsilon);
}

}  // namespace

std::vector<std::uint8_t> weights_header_bytes(const ModelConfig& config) {
  detail::ByteWriter w;
  write_header(w, config);
  return w.bytes();
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t config_hash(const ModelConfig& config) {
  return fnv1a64(weights_header_bytes(config));
}

std::vector<std::uint8_t> serialize_weights(const ModelConfig& config,
                                            const Weights& weights) {
  validate_weights(config, weights);
  detail::ByteWriter w;
  write_header(w, config);
  for_each_tensor(weights, [&](const Tensor& t) { w.f32s(t.data()); });
  return w.bytes();
}

std::pair<ModelConfig, Weights> deserialize_weights(
    std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "weights");
  if (bytes.size() < 4 || r.raw(4) != "GKVW") {
    throw FormatError("weights: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion) {
    throw FormatError("weights: version mismatch (file " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kWeightsVersion) + ")");
  }
  ModelConfig c;
  c.n_layers = r.u32();
  c.n_heads = r.u32();
  c.d_model = r.u32();
  c.d_head = r.u32();
  c.d_ff = r.u32();
  c.vocab_size = r.u32();
  c.max_positions = r.u32();
  c.theta_base = r.f32();
  c.epsilon = r.f32();
  try {
    c.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("weights: shape inconsistency: ") + e.what());
  }
  Weights w = empty_weights(c);
  for_each_tensor(w, [&](Tensor& t) { r.f32s(t.data()); });
  if (r.remaining() != 0) {
    throw FormatError("weights: shape inconsistency (" +
                      std::to_string(r.remaining()) +
                      " trailing bytes after last tensor)");
  }
  validate_weights(c, w);
  return {c, std::move(w)};
}

void save_weights(const std::string& path, const ModelConfig& config,
                  const Weights& weights) {
  detail::write_file(path, serialize_weights(config, weights), "weights");
}

std::pair<ModelConfig, Weights> load_weights(const std::string& path) {
  const auto bytes = detail::read_file(path, "weights");
  return deserialize_weights(bytes);
}

}  // namespace gkv
