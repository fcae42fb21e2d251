#pragma once

#include <cstdint>
#include <vector>

#include "lookupffn/lookup.hpp"
#include "lookupffn/projection.hpp"

namespace lffn {

/// Per-token floating-op counts in MFLOP, split by pipeline stage.
/// Conventions: one multiply-accumulate = 2 FLOP, a Hadamard butterfly add
/// costs 1 FLOP, and the transcendental weight math is charged at
/// kWeightFlopsPerCoord per soft-code coordinate under "other".
struct FlopReport {
  double hash_mflop = 0.0;
  double gather_mflop = 0.0;
  double other_mflop = 0.0;

  double total_mflop() const { return hash_mflop + gather_mflop + other_mflop; }
};

inline constexpr double kWeightFlopsPerCoord = 6.0;

/// 2 d_in t + 2 t d_out, activation not counted (matches the GEMM-only
/// accounting of the reference totals).
FlopReport vanilla_flops(std::size_t d_in, std::size_t hidden, std::size_t d_out);

/// Raw per-row operation count and learnable parameter count of a projection.
struct ProjCost {
  double flops = 0.0;
  std::size_t params = 0;
};
ProjCost projection_cost(const ProjectionSpec& spec);

/// Grouped linear (group size b) followed by a free channel permutation at
/// width D; the block-diagonal half of a BH1 stage has identical counts.
ProjCost grouped_shuffle_cost(std::size_t D, std::size_t b);

/// Full lookup layer: hash = projection cost, gather = 2 h nc d_out,
/// other = kWeightFlopsPerCoord h tau. The projection spec must map
/// cfg.d_in to h*tau.
FlopReport lookup_flops(const LookupConfig& cfg, const ProjectionSpec& proj);

// ---------------------------------------------------------------------------
// Runtime audit: instrumented kernels tally actually-executed multiply/adds;
// the totals must agree with the analytic model.
// ---------------------------------------------------------------------------

struct AuditReport {
  FlopReport measured;
  FlopReport analytic;
  double max_rel_dev() const;
};

AuditReport audit_vanilla_forward(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                  std::size_t rows, std::uint64_t seed);
AuditReport audit_lookup_forward(const LookupConfig& cfg, const ProjectionSpec& proj,
                                 std::size_t rows, std::uint64_t seed);

/// Measured addition count of one transform of order n (expected: n log2 n).
double audit_fwht_adds(std::size_t n);

/// Gather-stage table reads issued for each input row (must be h * nc for
/// every row, independent of the data).
std::vector<std::uint64_t> lookup_reads_per_row(const LookupConfig& cfg,
                                                const ProjectionSpec& proj, std::size_t rows,
                                                std::uint64_t seed);

/// Throws AuditError naming the stage when measured and analytic disagree
/// beyond rel_tol on any channel.
void require_audit(const AuditReport& report, double rel_tol, const char* stage);

}  // namespace lffn
