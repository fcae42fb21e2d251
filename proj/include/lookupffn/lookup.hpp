#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lookupffn/matrix.hpp"
#include "lookupffn/projection.hpp"

namespace lffn {

/// Numerator shape of the lookup layer.
///   softmax      exp<z,S_i> / prod_j (exp z_j + exp -z_j)
///   scaled       additionally multiplies the numerator by <z,S_i>
///   sigmoid_tau1 the softmax form restricted to tau = 1 (reduces to a
///                sigmoid-activated unit sum)
///   gelu_tau1    the scaled form restricted to tau = 1 (reduces to the fast
///                GELU approximation)
enum class LookupVariant : std::uint8_t { softmax = 0, scaled = 1, sigmoid_tau1 = 2, gelu_tau1 = 3 };

const char* lookup_variant_name(LookupVariant v);
LookupVariant lookup_variant_from_name(const std::string& name);

struct LookupConfig {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t tables = 1;         // h
  std::size_t code_bits = 1;      // tau
  LookupVariant variant = LookupVariant::softmax;
  std::size_t neighbor_count = 1;  // |N(z_k)|, 1 = keep only the largest numerator

  std::size_t code_width() const { return tables * code_bits; }
  std::size_t table_rows() const { return std::size_t{1} << code_bits; }
  bool scaled_numerator() const {
    return variant == LookupVariant::scaled || variant == LookupVariant::gelu_tau1;
  }
  void validate() const;
};

/// The learnable table stack T, shape h x 2^tau x d_out. Forward never writes
/// it; the only sanctioned mutation is an optimizer step on its gradient.
struct HashTables {
  std::size_t tables = 0;
  std::size_t code_bits = 0;
  std::size_t d_out = 0;
  std::vector<double> data;

  std::size_t rows_per_table() const { return std::size_t{1} << code_bits; }
  std::size_t size() const { return data.size(); }

  double* row(std::size_t k, std::uint32_t code) {
    return data.data() + (k * rows_per_table() + code) * d_out;
  }
  const double* row(std::size_t k, std::uint32_t code) const {
    return data.data() + (k * rows_per_table() + code) * d_out;
  }

  /// Gaussian entries with std 1/sqrt(h) so the h-table sum has unit-order
  /// variance.
  static HashTables init(const LookupConfig& cfg, std::uint64_t seed);
  static HashTables zeros_like(const LookupConfig& cfg);

  /// FNV-1a over the raw bytes; used by the no-rehash write instrumentation.
  std::uint64_t checksum() const;
};

/// Soft hash codes z_k: one length-tau real vector per (row, table),
/// produced by a single projection of width h*tau.
struct SoftCodes {
  std::size_t n = 0;
  std::size_t tables = 0;
  std::size_t code_bits = 0;
  std::vector<double> z;  // n x h x tau

  std::span<const double> at(std::size_t i, std::size_t k) const {
    return {z.data() + (i * tables + k) * code_bits, code_bits};
  }
};

/// Hard codes g(z_k) = decimal(sign(z_k)) plus the |z_j| cache.
/// Bit convention: coordinate j maps to bit j (LSB); sign(0) counts as +1.
struct SignCodes {
  std::size_t n = 0;
  std::size_t tables = 0;
  std::size_t code_bits = 0;
  std::vector<std::uint32_t> codes;  // n x h
  std::vector<double> abs_z;         // n x h x tau

  std::uint32_t at(std::size_t i, std::size_t k) const { return codes[i * tables + k]; }
};

SignCodes compute_codes(const SoftCodes& soft);

/// Single-vector code under the same bit convention.
std::uint32_t sign_code(std::span<const double> z);

/// log sum_{i=0}^{2^tau - 1} exp<z, S_i> = sum_j (|z_j| + log1p(exp(-2|z_j|))),
/// evaluated in the overflow-safe form.
double log_denominator(std::span<const double> z);

/// <z, S_code> where S_code[j] = +1 if bit j of code is set, else -1.
double code_dot(std::span<const double> z, std::uint32_t code);

/// Codes ordered by non-increasing <z, S_i>, generated by flipping subsets of
/// coordinates in order of increasing flipped |z_j| mass. Exact top-`count`
/// enumeration; the first element is always sign_code(z).
std::vector<std::uint32_t> neighbor_codes(std::span<const double> z, std::size_t count);

/// Everything backward needs: projection activations, soft codes, and the
/// selected neighbor codes with their weights.
struct LookupCache {
  DenseMatrix x;
  ProjectionCache proj;
  SoftCodes soft;
  SignCodes sign;
  std::size_t neighbor_count = 0;
  std::vector<std::uint32_t> codes;  // n x h x nc
  std::vector<double> weights;       // n x h x nc  softmax weight w
  std::vector<double> dots;          // n x h x nc  <z, S_i>
};

/// Hash + gather forward. y[i] = sum_k sum_{c in N(z_k)} w(c) [* <z,S_c>] T[k][c].
DenseMatrix lookup_forward(const DenseMatrix& x, const Projection& proj, const HashTables& tables,
                           const LookupConfig& cfg, LookupCache* cache = nullptr);

namespace detail {
/// Forward with the FLOP audit counters enabled.
DenseMatrix lookup_forward_counted(const DenseMatrix& x, const Projection& proj,
                                   const HashTables& tables, const LookupConfig& cfg,
                                   LookupCache* cache = nullptr);
}  // namespace detail

struct LookupGrads {
  DenseMatrix grad_x;
  std::vector<double> grad_proj;
  std::vector<double> grad_tables;
};

/// Exact gradients of the forward expression at the fixed neighbor selection
/// (straight-through on the discrete code choice; the denominator is
/// differentiated as written).
LookupGrads lookup_backward(const DenseMatrix& grad_y, const LookupCache& cache,
                            const Projection& proj, const HashTables& tables,
                            const LookupConfig& cfg);

// ---------------------------------------------------------------------------
// tau = 1 reference constructions
// ---------------------------------------------------------------------------

double gelu_exact(double u);

/// z_k = 0.851 <x, W_k>;  y = sum_k 1.175 z_k exp(z_k) V_k / (exp z_k + exp -z_k).
/// Validates the scaled variant at tau = 1 and bounds its deviation from
/// exact GELU.
DenseMatrix gelu_tau1_reference(const DenseMatrix& x, const DenseMatrix& w, const DenseMatrix& v);

/// max_{u in [-6,6]} |1.175 * 0.851 u * sigmoid(2 * 0.851 u) - gelu_exact(u)|
/// over a uniform grid.
double gelu_tau1_grid_deviation(std::size_t grid_points = 10000);

}  // namespace lffn
