#include "gkv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace gkv {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape does not match data length");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return Tensor({values.size()}, std::vector<float>(values));
}

std::span<float> Tensor::row(std::size_t r) {
  if (rank() != 2 || r >= shape_[0]) throw std::out_of_range("tensor row");
  return std::span<float>(data_).subspan(r * shape_[1], shape_[1]);
}

std::span<const float> Tensor::row(std::size_t r) const {
  if (rank() != 2 || r >= shape_[0]) throw std::out_of_range("tensor row");
  return std::span<const float>(data_).subspan(r * shape_[1], shape_[1]);
}

void require_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value");
    }
  }
}

// ---------------------------------------------------------------------------

void matmul_into(std::span<const float> a, std::span<const float> b,
                 std::span<float> out, std::size_t m, std::size_t k,
                 std::size_t n) {
  // i-p-j order: out row i accumulates a[i][p] * b[p][:] for p = 0..k-1.
  // Every out[i][j] therefore sums its k terms in ascending p.
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m * n),
            0.0f);
  for (std::size_t i = 0; i < m; ++i) {
    float* orow = out.data() + i * n;
    const float* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void softmax_inplace(std::span<float> row, float temperature, float scale) {
  if (!(temperature > 0.0f) || !(scale > 0.0f)) {
    throw std::invalid_argument("softmax: temperature and scale must be > 0");
  }
  if (row.empty()) return;
  require_finite(row, "softmax input");
  const float factor = scale / temperature;
  float mx = row[0] * factor;
  for (float& v : row) {
    v *= factor;
    mx = std::max(mx, v);
  }
  float sum = 0.0f;
  for (float& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const float inv = 1.0f / sum;
  for (float& v : row) v *= inv;
}

void rmsnorm_into(std::span<const float> x, std::span<const float> gain,
                  float epsilon, std::span<float> out) {
  if (x.size() != gain.size() || out.size() != x.size()) {
    throw std::invalid_argument("rmsnorm: length mismatch");
  }
  float ss = 0.0f;
  for (float v : x) ss += v * v;
  const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + epsilon);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

void rope_rotate_inplace(std::span<float> vec, std::size_t position,
                         float theta_base) {
  const std::size_t d = vec.size();
  if (d % 2 != 0) throw std::invalid_argument("rope: d_head must be even");
  if (position == 0) return;
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double inv_freq =
        std::pow(static_cast<double>(theta_base),
                 -static_cast<double>(2 * i) / static_cast<double>(d));
    const double angle = static_cast<double>(position) * inv_freq;
    const float c = static_cast<float>(std::cos(angle));
    const float s = static_cast<float>(std::sin(angle));
    const float x0 = vec[2 * i];
    const float x1 = vec[2 * i + 1];
    vec[2 * i] = x0 * c - x1 * s;
    vec[2 * i + 1] = x0 * s + x1 * c;
  }
}

void swiglu_inplace(std::span<float> gate, std::span<const float> up) {
  for (std::size_t i = 0; i < gate.size(); ++i) {
    const float g = gate[i];
    gate[i] = g / (1.0f + std::exp(-g)) * up[i];
  }
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch");
  }
  Tensor out({a.dim(0), b.dim(1)});
  matmul_into(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
  require_finite(out.data(), "matmul");
  return out;
}

Tensor softmax_rows(const Tensor& m, float temperature, float scale) {
  if (m.rank() == 0) throw std::invalid_argument("softmax: empty shape");
  Tensor out = m;
  const std::size_t cols = m.shape().back();
  if (cols == 0) return out;
  for (std::size_t r = 0; r < out.size() / cols; ++r) {
    softmax_inplace(out.data().subspan(r * cols, cols), temperature, scale);
  }
  require_finite(out.data(), "softmax");
  return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, float epsilon) {
  if (x.rank() != 1 || gain.rank() != 1 || x.size() != gain.size()) {
    throw std::invalid_argument("rmsnorm: length mismatch");
  }
  require_finite(x.data(), "rmsnorm input");
  Tensor out(x.shape());
  rmsnorm_into(x.data(), gain.data(), epsilon, out.data());
  require_finite(out.data(), "rmsnorm");
  return out;
}

Tensor rope_rotate(const Tensor& vec, std::size_t position, float theta_base) {
  if (vec.rank() != 1) throw std::invalid_argument("rope: expected a vector");
  Tensor out = vec;
  rope_rotate_inplace(out.data(), position, theta_base);
  require_finite(out.data(), "rope");
  return out;
}

}  // namespace gkv
