#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lookupffn/common.hpp"

namespace lffn {

/// Row-major 2-D array of doubles; the universal tensor for inputs,
/// parameters, and gradients. Verification paths run entirely in 64-bit;
/// benchmark kernels keep their own float32 buffers.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {
    detail::note_buffer_alloc();
  }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
  std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }

  static DenseMatrix zeros(std::size_t r, std::size_t c) { return DenseMatrix(r, c); }

  static DenseMatrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng,
                              double stddev = 1.0) {
    DenseMatrix m(r, c);
    fill_gaussian(m.data, rng, stddev);
    return m;
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Module boundaries validate finiteness on entry and exit; `stage` names the
/// operation for the error message.
inline void require_finite(std::span<const double> v, const char* stage) {
  if (!all_finite(v)) throw NumericError(std::string("non-finite values in ") + stage);
}

inline void require_finite(const DenseMatrix& m, const char* stage) {
  require_finite(std::span<const double>(m.data), stage);
}

inline void require_shape(const DenseMatrix& m, std::size_t rows, std::size_t cols,
                          const char* what) {
  if (m.rows != rows || m.cols != cols)
    throw SizeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                    std::to_string(m.cols));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw SizeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// || a - b ||_2 / max(|| b ||_2, 1e-300)
inline double l2_rel_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw SizeError("l2_rel_diff: length mismatch");
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_diff(std::span<const double> a, std::span<const double> b,
                           double floor = 1.0) {
  if (a.size() != b.size()) throw SizeError("max_rel_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    m = std::max(m, std::abs(a[i] - b[i]) / denom);
  }
  return m;
}

}  // namespace lffn
