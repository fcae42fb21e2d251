#include "lookupffn/flops.hpp"

#include <cmath>

#include "lookupffn/ffn.hpp"

namespace lffn {

FlopReport vanilla_flops(std::size_t d_in, std::size_t hidden, std::size_t d_out) {
  if (d_in == 0 || hidden == 0 || d_out == 0)
    throw SizeError("vanilla_flops: sizes must be positive");
  FlopReport r;
  r.other_mflop = (2.0 * double(d_in) * double(hidden) + 2.0 * double(hidden) * double(d_out)) / 1e6;
  return r;
}

ProjCost projection_cost(const ProjectionSpec& spec) {
  spec.validate();
  const double D = double(spec.transform_width());
  const double logD = double(log2_exact(spec.transform_width()));
  ProjCost c;
  switch (spec.kind) {
    case ProjKind::dense:
      c.flops = 2.0 * double(spec.d_in) * double(spec.d_out);
      c.params = spec.d_in * spec.d_out;
      break;
    case ProjKind::bh: {
      const double b = double(spec.block == 0 ? spec.transform_width() : spec.block);
      c.flops = double(spec.stages) * (2.0 * D * b + D * logD);
      c.params = spec.stages * spec.transform_width() *
                 (spec.block == 0 ? spec.transform_width() : spec.block);
      break;
    }
    case ProjKind::acdc:
      c.flops = double(spec.depth) * (2.0 * D + 2.0 * D * logD);
      c.params = 2 * spec.depth * spec.transform_width();
      break;
    case ProjKind::signflip:
      c.flops = 3.0 * D + 3.0 * D * logD;
      c.params = 0;
      break;
  }
  return c;
}

ProjCost grouped_shuffle_cost(std::size_t D, std::size_t b) {
  if (b == 0 || D % b != 0) throw SizeError("grouped_shuffle_cost: b must divide D");
  return {2.0 * double(D) * double(b), D * b};
}

FlopReport lookup_flops(const LookupConfig& cfg, const ProjectionSpec& proj) {
  cfg.validate();
  if (proj.d_in != cfg.d_in || proj.d_out != cfg.code_width())
    throw SizeError("lookup_flops: projection spec must map d_in to h*tau");
  FlopReport r;
  r.hash_mflop = projection_cost(proj).flops / 1e6;
  r.gather_mflop = 2.0 * double(cfg.tables) * double(cfg.neighbor_count) * double(cfg.d_out) / 1e6;
  r.other_mflop = kWeightFlopsPerCoord * double(cfg.tables) * double(cfg.code_bits) / 1e6;
  return r;
}

// ---------------------------------------------------------------------------
// Runtime audit
// ---------------------------------------------------------------------------

namespace {
double rel_dev(double measured, double analytic) {
  if (analytic == 0.0 && measured == 0.0) return 0.0;
  return std::abs(measured - analytic) / std::max(std::abs(analytic), 1e-30);
}
}  // namespace

double AuditReport::max_rel_dev() const {
  double m = rel_dev(measured.hash_mflop, analytic.hash_mflop);
  m = std::max(m, rel_dev(measured.gather_mflop, analytic.gather_mflop));
  m = std::max(m, rel_dev(measured.other_mflop, analytic.other_mflop));
  return m;
}

AuditReport audit_vanilla_forward(std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                  std::size_t rows, std::uint64_t seed) {
  auto rng = make_rng(seed);
  const DenseMatrix x = DenseMatrix::gaussian(rows, d_in, rng);
  const FFNParams p = FFNParams::init(d_in, hidden, d_out, Activation::gelu, seed + 1);
  flop_counter().reset();
  (void)detail::ffn_forward_counted(x, p);
  AuditReport r;
  r.measured.other_mflop = flop_counter().other / double(rows) / 1e6;
  flop_counter().reset();
  r.analytic = vanilla_flops(d_in, hidden, d_out);
  return r;
}

AuditReport audit_lookup_forward(const LookupConfig& cfg, const ProjectionSpec& proj,
                                 std::size_t rows, std::uint64_t seed) {
  auto rng = make_rng(seed);
  const DenseMatrix x = DenseMatrix::gaussian(rows, cfg.d_in, rng);
  const Projection p = Projection::init(proj, seed + 1);
  const HashTables t = HashTables::init(cfg, seed + 2);
  flop_counter().reset();
  (void)detail::lookup_forward_counted(x, p, t, cfg);
  AuditReport r;
  r.measured.hash_mflop = flop_counter().hash / double(rows) / 1e6;
  r.measured.gather_mflop = flop_counter().gather / double(rows) / 1e6;
  r.measured.other_mflop = flop_counter().other / double(rows) / 1e6;
  flop_counter().reset();
  r.analytic = lookup_flops(cfg, proj);
  return r;
}

double audit_fwht_adds(std::size_t n) {
  std::vector<double> v(n, 0.0);
  auto rng = make_rng(7);
  fill_gaussian(v, rng);
  flop_counter().reset();
  fwht_kernel<double, true>(v.data(), n);
  const double adds = flop_counter().hash;
  flop_counter().reset();
  return adds;
}

std::vector<std::uint64_t> lookup_reads_per_row(const LookupConfig& cfg,
                                                const ProjectionSpec& proj, std::size_t rows,
                                                std::uint64_t seed) {
  auto rng = make_rng(seed);
  const Projection p = Projection::init(proj, seed + 1);
  const HashTables t = HashTables::init(cfg, seed + 2);
  std::vector<std::uint64_t> reads(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    const DenseMatrix x = DenseMatrix::gaussian(1, cfg.d_in, rng);
    flop_counter().reset();
    (void)detail::lookup_forward_counted(x, p, t, cfg);
    reads[i] = flop_counter().table_reads;
  }
  flop_counter().reset();
  return reads;
}

void require_audit(const AuditReport& report, double rel_tol, const char* stage) {
  const double dev = report.max_rel_dev();
  if (dev > rel_tol)
    throw AuditError(std::string("flop audit failed at ") + stage + ": measured deviates " +
                     std::to_string(dev * 100.0) + "% from analytic (tolerance " +
                     std::to_string(rel_tol * 100.0) + "%)");
}

}  // namespace lffn
