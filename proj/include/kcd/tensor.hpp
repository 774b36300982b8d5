#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kcd/error.hpp"
#include "kcd/matrix.hpp"

namespace kcd {

enum class Dtype { F32, F64 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

inline std::string to_string(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

// A batch x channels x height x width activation map, stored row-major.
// Values are held as f64; `dtype` records the on-disk precision, and f32
// tensors only ever hold f32-representable values so save/load round-trips
// are byte exact.
struct ActivationTensor {
  std::vector<double> data;
  std::size_t b = 0, c = 0, h = 0, w = 0;
  Dtype dtype = Dtype::F64;

  ActivationTensor() = default;
  ActivationTensor(std::size_t b_, std::size_t c_, std::size_t h_, std::size_t w_,
                   Dtype dt = Dtype::F64)
      : data(b_ * c_ * h_ * w_, 0.0), b(b_), c(c_), h(h_), w(w_), dtype(dt) {
    if (b_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
      fail(ErrorCategory::ShapeMismatch, "tensor dims must all be >= 1");
  }

  std::size_t size() const noexcept { return b * c * h * w; }
  std::size_t spatial() const noexcept { return h * w; }

  double& at(std::size_t bi, std::size_t ci, std::size_t hi, std::size_t wi) {
    return data[((bi * c + ci) * h + hi) * w + wi];
  }
  double at(std::size_t bi, std::size_t ci, std::size_t hi, std::size_t wi) const {
    return data[((bi * c + ci) * h + hi) * w + wi];
  }

  // Contiguous h*w slice of one (sample, channel) pair.
  std::span<double> channel(std::size_t bi, std::size_t ci) {
    return {data.data() + (bi * c + ci) * spatial(), spatial()};
  }
  std::span<const double> channel(std::size_t bi, std::size_t ci) const {
    return {data.data() + (bi * c + ci) * spatial(), spatial()};
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Snaps stored values to the declared storage precision.
  void quantize_to_dtype() {
    if (dtype == Dtype::F32)
      for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }
};

// Per-channel global averages: one row per sample, one column per channel.
struct PooledActivations {
  Matrix data;  // b x c
  std::pair<std::size_t, std::size_t> source_shape{1, 1};

  std::size_t samples() const noexcept { return data.rows(); }
  std::size_t channels() const noexcept { return data.cols(); }
};

// Mean over the spatial positions of each channel, accumulated in f64.
// With h = w = 1 the result is bit-identical to the source values.
inline PooledActivations global_average_pool(const ActivationTensor& t) {
  PooledActivations out;
  out.source_shape = {t.h, t.w};
  out.data = Matrix(t.b, t.c);
  const double denom = static_cast<double>(t.spatial());
  for (std::size_t bi = 0; bi < t.b; ++bi) {
    for (std::size_t ci = 0; ci < t.c; ++ci) {
      double acc = 0.0;
      for (double v : t.channel(bi, ci)) acc += v;
      out.data(bi, ci) = acc / denom;
    }
  }
  return out;
}

// Wraps a b x c matrix as an h=w=1 tensor so pooled-equivalent features can
// enter the tensor pipeline directly.
inline ActivationTensor tensor_from_matrix(const Matrix& m, Dtype dtype = Dtype::F64) {
  ActivationTensor t(m.rows(), m.cols(), 1, 1, dtype);
  t.data = m.data();
  t.quantize_to_dtype();
  return t;
}

}  // namespace kcd
