#include "lookupffn/fwht.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lffn {

FlopCounter& flop_counter() {
  thread_local FlopCounter counter;
  return counter;
}

namespace detail {
bool& alloc_guard_active() {
  thread_local bool active = false;
  return active;
}
std::uint64_t& alloc_guard_hits() {
  thread_local std::uint64_t hits = 0;
  return hits;
}
}  // namespace detail

void fwht_inplace(std::span<double> v, const HadamardOrder& order) {
  if (v.size() != order.n)
    throw SizeError("fwht_inplace: vector length " + std::to_string(v.size()) +
                    " does not match order " + std::to_string(order.n));
  fwht_kernel(v.data(), v.size());
}

void fwht_inplace(std::span<double> v) { fwht_inplace(v, HadamardOrder::of(v.size())); }

void fwht_rows(DenseMatrix& m) {
  const HadamardOrder order = HadamardOrder::of(m.cols);
  (void)order;
#pragma omp parallel for if (m.rows > 64)
  for (long i = 0; i < static_cast<long>(m.rows); ++i) fwht_kernel(m.row(i), m.cols);
}

std::vector<double> naive_hadamard_matmul(std::span<const double> v, const HadamardOrder& order) {
  if (v.size() != order.n)
    throw SizeError("naive_hadamard_matmul: vector length " + std::to_string(v.size()) +
                    " does not match order " + std::to_string(order.n));
  std::vector<double> out(order.n, 0.0);
  for (std::size_t i = 0; i < order.n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < order.n; ++j) acc += hadamard_entry(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> naive_hadamard_matmul(std::span<const double> v) {
  return naive_hadamard_matmul(v, HadamardOrder::of(v.size()));
}

}  // namespace lffn
