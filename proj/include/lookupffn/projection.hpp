#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lookupffn/common.hpp"
#include "lookupffn/fwht.hpp"
#include "lookupffn/matrix.hpp"

namespace lffn {

enum class ProjKind : std::uint8_t { dense = 0, bh = 1, acdc = 2, signflip = 3 };

const char* proj_kind_name(ProjKind kind);
ProjKind proj_kind_from_name(const std::string& name);

/// Shape and hyper-parameters of a projection. Structured kinds operate at an
/// internal width D = smallest power of two >= max(d_in, d_out): rows are
/// zero-padded to D on the way in and truncated to d_out on the way out.
struct ProjectionSpec {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  ProjKind kind = ProjKind::dense;

  std::size_t stages = 4;  // bh: number of (block-diagonal, Hadamard) stages m
  std::size_t block = 0;   // bh: block size b; 0 means one full DxD block
  std::size_t depth = 1;   // acdc: depth k

  std::size_t transform_width() const { return next_power_of_two(std::max(d_in, d_out)); }
  void validate() const;

  static ProjectionSpec dense(std::size_t d_in, std::size_t d_out);
  static ProjectionSpec bh(std::size_t d_in, std::size_t d_out, std::size_t m, std::size_t b);
  static ProjectionSpec acdc(std::size_t d_in, std::size_t d_out, std::size_t k);
  static ProjectionSpec signflip(std::size_t d_in, std::size_t d_out);
};

/// Per-row activations saved by forward for the exact backward pass.
struct ProjectionCache {
  std::vector<DenseMatrix> stage_in;
};

/// A structured (or dense) linear map applied to row vectors, with exact
/// vector-Jacobian products for inputs and parameters.
///
/// Parameter layout of params() by kind:
///   dense:    d_in x d_out row-major matrix W, y = x W
///   bh:       m stages, each D/b blocks of b x b (row-major); a stage applies
///             the block-diagonal multiply then the Hadamard transform
///   acdc:     per depth, diagonal A_i (D) then diagonal D_i (D); a depth
///             applies diag(A_i), H, diag(D_i), H
///   signflip: no learnable parameters; three fixed sign vectors chain
///             (diag(s_i), H) three times
class Projection {
 public:
  Projection() = default;

  /// Deterministic initialization: scales are chosen so the composed operator
  /// maps unit-variance rows to approximately unit-variance rows.
  static Projection init(const ProjectionSpec& spec, std::uint64_t seed);

  /// Wraps an existing parameter blob (used by checkpoint loading).
  static Projection from_blob(const ProjectionSpec& spec, std::vector<double> blob);

  const ProjectionSpec& spec() const { return spec_; }

  /// Learnable parameters as one flat span (empty for signflip).
  std::span<double> params();
  std::span<const double> params() const;
  std::size_t param_count() const;

  /// Full parameter blob including non-learnable sign vectors (checkpoint
  /// serialization order).
  const std::vector<double>& blob() const { return blob_; }
  std::vector<double>& blob() { return blob_; }
  std::size_t blob_size() const { return blob_.size(); }

  DenseMatrix forward(const DenseMatrix& x, ProjectionCache* cache = nullptr) const;

  /// Same computation with the FLOP audit counters enabled (hash channel).
  DenseMatrix forward_counted(const DenseMatrix& x, ProjectionCache* cache = nullptr) const;

  /// Returns grad_x and accumulates parameter gradients into grad_params
  /// (length param_count(), may be empty for signflip).
  DenseMatrix backward(const DenseMatrix& grad_out, const DenseMatrix& x,
                       const ProjectionCache& cache, std::span<double> grad_params) const;

 private:
  template <bool Count>
  DenseMatrix forward_impl(const DenseMatrix& x, ProjectionCache* cache) const;

  ProjectionSpec spec_;
  std::vector<double> blob_;
};

namespace detail {

/// out[g*b + c] = sum_r in[g*b + r] * blocks[g][r*b + c]  (row vector times
/// block-diagonal matrix).
template <typename Real, bool Count = false>
void block_diag_apply(const Real* in, Real* out, const Real* blocks, std::size_t D,
                      std::size_t b) {
  const std::size_t groups = D / b;
  for (std::size_t g = 0; g < groups; ++g) {
    const Real* blk = blocks + g * b * b;
    const Real* src = in + g * b;
    Real* dst = out + g * b;
    for (std::size_t c = 0; c < b; ++c) dst[c] = Real(0);
    for (std::size_t r = 0; r < b; ++r) {
      const Real s = src[r];
      const Real* brow = blk + r * b;
      for (std::size_t c = 0; c < b; ++c) {
        dst[c] += s * brow[c];
        if constexpr (Count) flop_counter().hash += 2;
      }
    }
  }
}

/// Transposed apply for input gradients: out[g*b + r] = sum_c blocks[g][r*b+c] * in[g*b+c].
template <typename Real>
void block_diag_apply_transposed(const Real* in, Real* out, const Real* blocks, std::size_t D,
                                 std::size_t b) {
  const std::size_t groups = D / b;
  for (std::size_t g = 0; g < groups; ++g) {
    const Real* blk = blocks + g * b * b;
    const Real* src = in + g * b;
    Real* dst = out + g * b;
    for (std::size_t r = 0; r < b; ++r) {
      Real acc = Real(0);
      const Real* brow = blk + r * b;
      for (std::size_t c = 0; c < b; ++c) acc += brow[c] * src[c];
      dst[r] = acc;
    }
  }
}

}  // namespace detail

}  // namespace lffn
