#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gkv/errors.hpp"

namespace gkv {

// Raised when a kernel would produce (or is handed) NaN/Inf.
class NumericError : public InvariantError {
 public:
  using InvariantError::InvariantError;
};

// Dense fp32 tensor, row-major. product(shape) == data.size() always holds.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<float> values);
  static Tensor vector(std::initializer_list<float> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  // Row view of a rank-2 tensor.
  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

// Throws NumericError naming `what` if any value is NaN/Inf.
void require_finite(std::span<const float> values, const char* what);

// ---------------------------------------------------------------------------
// Tensor-level kernels.

// c[i][j] = sum_p a[i][p] * b[p][j]. Accumulation runs over p in ascending
// order for every (i, j), in a single fp32 accumulator, so results do not
// depend on how rows are scheduled across threads.
Tensor matmul(const Tensor& a, const Tensor& b);

// Each row r becomes softmax(scale * r / temperature).
Tensor softmax_rows(const Tensor& m, float temperature = 1.0f,
                    float scale = 1.0f);

// x * gain / sqrt(mean(x^2) + epsilon).
Tensor rmsnorm(const Tensor& x, const Tensor& gain, float epsilon);

// Rotates consecutive pairs (v[2i], v[2i+1]) by
// position / theta_base^(2i / d_head).
Tensor rope_rotate(const Tensor& vec, std::size_t position,
                   float theta_base = 10000.0f);

// ---------------------------------------------------------------------------
// Span kernels used on the hot path. Same arithmetic as the Tensor versions.

// out[m x n] = a[m x k] * b[k x n]; out is overwritten.
void matmul_into(std::span<const float> a, std::span<const float> b,
                 std::span<float> out, std::size_t m, std::size_t k,
                 std::size_t n);

void softmax_inplace(std::span<float> row, float temperature = 1.0f,
                     float scale = 1.0f);

void rmsnorm_into(std::span<const float> x, std::span<const float> gain,
                  float epsilon, std::span<float> out);

void rope_rotate_inplace(std::span<float> vec, std::size_t position,
                         float theta_base);

inline float dot(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// SiLU(gate) * up, elementwise into gate.
void swiglu_inplace(std::span<float> gate, std::span<const float> up);

}  // namespace gkv
