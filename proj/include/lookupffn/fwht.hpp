#pragma once

#include <bit>
#include <cstddef>
#include <span>
#include <vector>

#include "lookupffn/common.hpp"
#include "lookupffn/matrix.hpp"

namespace lffn {

/// Power-of-two transform order.
struct HadamardOrder {
  std::size_t n = 1;
  std::size_t log2n = 0;

  static HadamardOrder of(std::size_t n) {
    if (!is_power_of_two(n))
      throw SizeError("Hadamard order must be a power of two, got " + std::to_string(n));
    return HadamardOrder{n, log2_exact(n)};
  }
};

/// In-place unnormalized Walsh-Hadamard transform (Sylvester ordering),
/// v <- H v with H[i][j] = (-1)^popcount(i & j). Theta(n log n) additions.
/// The caller guarantees n is a power of two.
template <typename Real, bool Count = false>
void fwht_kernel(Real* v, std::size_t n) {
  for (std::size_t half = 1; half < n; half <<= 1) {
    for (std::size_t block = 0; block < n; block += half << 1) {
      for (std::size_t j = block; j < block + half; ++j) {
        Real x = v[j];
        Real y = v[j + half];
        v[j] = x + y;
        v[j + half] = x - y;
        if constexpr (Count) flop_counter().hash += 2;
      }
    }
  }
}

/// Validated entry point for a single vector.
void fwht_inplace(std::span<double> v, const HadamardOrder& order);
void fwht_inplace(std::span<double> v);

/// Applies the transform independently to each row of m (cols must be a
/// power of two).
void fwht_rows(DenseMatrix& m);

/// Dense O(n^2) oracle: materializes H and multiplies.
std::vector<double> naive_hadamard_matmul(std::span<const double> v, const HadamardOrder& order);
std::vector<double> naive_hadamard_matmul(std::span<const double> v);

/// H entry without materializing the matrix.
inline double hadamard_entry(std::size_t i, std::size_t j) {
  return (std::popcount(i & j) & 1) ? -1.0 : 1.0;
}

}  // namespace lffn
