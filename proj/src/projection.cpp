#include "lookupffn/projection.hpp"

#include <algorithm>
#include <cstring>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lffn {

const char* proj_kind_name(ProjKind kind) {
  switch (kind) {
    case ProjKind::dense: return "dense";
    case ProjKind::bh: return "bh";
    case ProjKind::acdc: return "acdc";
    case ProjKind::signflip: return "signflip";
  }
  return "?";
}

ProjKind proj_kind_from_name(const std::string& name) {
  if (name == "dense") return ProjKind::dense;
  if (name == "bh") return ProjKind::bh;
  if (name == "acdc") return ProjKind::acdc;
  if (name == "signflip") return ProjKind::signflip;
  throw UsageError("unknown projection kind: " + name);
}

void ProjectionSpec::validate() const {
  if (d_in == 0 || d_out == 0) throw SizeError("projection: d_in and d_out must be positive");
  const std::size_t D = transform_width();
  if (kind == ProjKind::bh) {
    const std::size_t b = block == 0 ? D : block;
    if (stages == 0) throw SizeError("bh projection: stage count must be >= 1");
    if (b > D || D % b != 0)
      throw SizeError("bh projection: block size " + std::to_string(b) +
                      " must divide transform width " + std::to_string(D));
  }
  if (kind == ProjKind::acdc && depth == 0) throw SizeError("acdc projection: depth must be >= 1");
}

ProjectionSpec ProjectionSpec::dense(std::size_t d_in, std::size_t d_out) {
  return {.d_in = d_in, .d_out = d_out, .kind = ProjKind::dense};
}
ProjectionSpec ProjectionSpec::bh(std::size_t d_in, std::size_t d_out, std::size_t m,
                                  std::size_t b) {
  return {.d_in = d_in, .d_out = d_out, .kind = ProjKind::bh, .stages = m, .block = b};
}
ProjectionSpec ProjectionSpec::acdc(std::size_t d_in, std::size_t d_out, std::size_t k) {
  return {.d_in = d_in, .d_out = d_out, .kind = ProjKind::acdc, .depth = k};
}
ProjectionSpec ProjectionSpec::signflip(std::size_t d_in, std::size_t d_out) {
  return {.d_in = d_in, .d_out = d_out, .kind = ProjKind::signflip};
}

namespace {

/// Haar-ish random orthogonal b x b matrix via modified Gram-Schmidt on a
/// Gaussian draw (row-major, written into out).
void fill_orthogonal(double* out, std::size_t b, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  for (std::size_t i = 0; i < b * b; ++i) out[i] = dist(rng);
  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (std::size_t r = 0; r < b; ++r) dot += out[r * b + c] * out[r * b + prev];
      for (std::size_t r = 0; r < b; ++r) out[r * b + c] -= dot * out[r * b + prev];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < b; ++r) norm += out[r * b + c] * out[r * b + c];
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      // Degenerate draw; fall back to a basis column.
      for (std::size_t r = 0; r < b; ++r) out[r * b + c] = (r == c) ? 1.0 : 0.0;
      continue;
    }
    for (std::size_t r = 0; r < b; ++r) out[r * b + c] /= norm;
  }
}

std::size_t blob_size_for(const ProjectionSpec& spec) {
  const std::size_t D = spec.transform_width();
  switch (spec.kind) {
    case ProjKind::dense: return spec.d_in * spec.d_out;
    case ProjKind::bh: {
      const std::size_t b = spec.block == 0 ? D : spec.block;
      return spec.stages * (D / b) * b * b;
    }
    case ProjKind::acdc: return 2 * spec.depth * D;
    case ProjKind::signflip: return 3 * D;
  }
  return 0;
}

}  // namespace

Projection Projection::init(const ProjectionSpec& spec, std::uint64_t seed) {
  spec.validate();
  Projection p;
  p.spec_ = spec;
  p.blob_.assign(blob_size_for(spec), 0.0);
  auto rng = make_rng(seed);
  const std::size_t D = spec.transform_width();
  switch (spec.kind) {
    case ProjKind::dense:
      fill_gaussian(p.blob_, rng, 1.0 / std::sqrt(double(spec.d_in)));
      break;
    case ProjKind::bh: {
      // Blocks are random orthogonal scaled 1/sqrt(D): each (B, H) stage then
      // preserves norms exactly, which keeps the composed output at unit
      // variance and keeps plain gradient descent well conditioned even for
      // deep full-block stacks.
      const std::size_t b = spec.block == 0 ? D : spec.block;
      const double scale = 1.0 / std::sqrt(double(D));
      for (std::size_t blk = 0; blk < p.blob_.size() / (b * b); ++blk) {
        double* out = p.blob_.data() + blk * b * b;
        fill_orthogonal(out, b, rng);
        for (std::size_t i = 0; i < b * b; ++i) out[i] *= scale;
      }
      break;
    }
    case ProjKind::acdc: {
      // Random signs scaled 1/sqrt(D); each (diag, H) pair then preserves
      // variance, for any depth.
      fill_signs(p.blob_, rng);
      const double scale = 1.0 / std::sqrt(double(D));
      for (double& v : p.blob_) v *= scale;
      break;
    }
    case ProjKind::signflip:
      fill_signs(p.blob_, rng);
      break;
  }
  return p;
}

Projection Projection::from_blob(const ProjectionSpec& spec, std::vector<double> blob) {
  spec.validate();
  if (blob.size() != blob_size_for(spec))
    throw SizeError("projection blob: expected " + std::to_string(blob_size_for(spec)) +
                    " values, got " + std::to_string(blob.size()));
  Projection p;
  p.spec_ = spec;
  p.blob_ = std::move(blob);
  return p;
}

std::span<double> Projection::params() {
  if (spec_.kind == ProjKind::signflip) return {};
  return {blob_.data(), blob_.size()};
}

std::span<const double> Projection::params() const {
  if (spec_.kind == ProjKind::signflip) return {};
  return {blob_.data(), blob_.size()};
}

std::size_t Projection::param_count() const {
  return spec_.kind == ProjKind::signflip ? 0 : blob_.size();
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

template <bool Count>
DenseMatrix Projection::forward_impl(const DenseMatrix& x, ProjectionCache* cache) const {
  if (x.cols != spec_.d_in)
    throw SizeError("projection forward: input has " + std::to_string(x.cols) +
                    " cols, spec d_in is " + std::to_string(spec_.d_in));
  require_finite(x, "projection forward input");

  const std::size_t n = x.rows;
  const std::size_t D = spec_.transform_width();
  DenseMatrix y(n, spec_.d_out);

  if (spec_.kind == ProjKind::dense) {
    if (cache) {
      cache->stage_in.assign(1, x);
    }
    const double* w = blob_.data();  // d_in x d_out
#pragma omp parallel for if (n > 8 && !Count)
    for (long i = 0; i < static_cast<long>(n); ++i) {
      const double* xi = x.row(i);
      double* yi = y.row(i);
      for (std::size_t k = 0; k < spec_.d_in; ++k) {
        const double s = xi[k];
        const double* wrow = w + k * spec_.d_out;
        for (std::size_t j = 0; j < spec_.d_out; ++j) {
          yi[j] += s * wrow[j];
          if constexpr (Count) flop_counter().hash += 2;
        }
      }
    }
    require_finite(y, "projection forward output");
    return y;
  }

  // Structured kinds: pad to D, run stages, truncate.
  const std::size_t cache_slots = spec_.kind == ProjKind::bh    ? spec_.stages
                                  : spec_.kind == ProjKind::acdc ? 2 * spec_.depth
                                                                  : 0;
  if (cache) {
    cache->stage_in.assign(cache_slots, DenseMatrix(n, D));
  }

#pragma omp parallel if (n > 8 && !Count)
  {
    std::vector<double> buf(D), tmp(D);
#pragma omp for
    for (long i = 0; i < static_cast<long>(n); ++i) {
      std::fill(buf.begin(), buf.end(), 0.0);
      std::copy(x.row(i), x.row(i) + spec_.d_in, buf.begin());

      switch (spec_.kind) {
        case ProjKind::bh: {
          const std::size_t b = spec_.block == 0 ? D : spec_.block;
          const std::size_t stage_size = (D / b) * b * b;
          for (std::size_t s = 0; s < spec_.stages; ++s) {
            if (cache) std::copy(buf.begin(), buf.end(), cache->stage_in[s].row(i));
            detail::block_diag_apply<double, Count>(buf.data(), tmp.data(),
                                                    blob_.data() + s * stage_size, D, b);
            std::swap(buf, tmp);
            fwht_kernel<double, Count>(buf.data(), D);
          }
          break;
        }
        case ProjKind::acdc: {
          for (std::size_t s = 0; s < spec_.depth; ++s) {
            const double* a = blob_.data() + 2 * s * D;
            const double* d = a + D;
            if (cache) std::copy(buf.begin(), buf.end(), cache->stage_in[2 * s].row(i));
            for (std::size_t j = 0; j < D; ++j) {
              buf[j] *= a[j];
              if constexpr (Count) flop_counter().hash += 1;
            }
            fwht_kernel<double, Count>(buf.data(), D);
            if (cache) std::copy(buf.begin(), buf.end(), cache->stage_in[2 * s + 1].row(i));
            for (std::size_t j = 0; j < D; ++j) {
              buf[j] *= d[j];
              if constexpr (Count) flop_counter().hash += 1;
            }
            fwht_kernel<double, Count>(buf.data(), D);
          }
          break;
        }
        case ProjKind::signflip: {
          for (std::size_t s = 0; s < 3; ++s) {
            const double* sv = blob_.data() + s * D;
            for (std::size_t j = 0; j < D; ++j) {
              buf[j] *= sv[j];
              if constexpr (Count) flop_counter().hash += 1;
            }
            fwht_kernel<double, Count>(buf.data(), D);
          }
          break;
        }
        case ProjKind::dense: break;  // handled above
      }
      std::copy(buf.begin(), buf.begin() + spec_.d_out, y.row(i));
    }
  }
  require_finite(y, "projection forward output");
  return y;
}

DenseMatrix Projection::forward(const DenseMatrix& x, ProjectionCache* cache) const {
  return forward_impl<false>(x, cache);
}

DenseMatrix Projection::forward_counted(const DenseMatrix& x, ProjectionCache* cache) const {
  return forward_impl<true>(x, cache);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

DenseMatrix Projection::backward(const DenseMatrix& grad_out, const DenseMatrix& x,
                                 const ProjectionCache& cache,
                                 std::span<double> grad_params) const {
  if (grad_out.cols != spec_.d_out || grad_out.rows != x.rows)
    throw SizeError("projection backward: grad_out shape mismatch");
  if (grad_params.size() != param_count())
    throw SizeError("projection backward: grad_params has wrong length");
  require_finite(grad_out, "projection backward input");

  const std::size_t n = x.rows;
  const std::size_t D = spec_.transform_width();
  DenseMatrix grad_x(n, spec_.d_in);

  if (spec_.kind == ProjKind::dense) {
    const double* w = blob_.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = grad_out.row(i);
      const double* xi = x.row(i);
      double* gxi = grad_x.row(i);
      for (std::size_t k = 0; k < spec_.d_in; ++k) {
        const double* wrow = w + k * spec_.d_out;
        double* gwrow = grad_params.data() + k * spec_.d_out;
        double acc = 0.0;
        const double xv = xi[k];
        for (std::size_t j = 0; j < spec_.d_out; ++j) {
          acc += gi[j] * wrow[j];
          gwrow[j] += xv * gi[j];
        }
        gxi[k] = acc;
      }
    }
    require_finite(grad_x, "projection backward output");
    return grad_x;
  }

  // Structured kinds. Gradient accumulation over rows is sequential so the
  // verification path is deterministic.
  std::vector<double> g(D), tmp(D);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    std::copy(grad_out.row(i), grad_out.row(i) + spec_.d_out, g.begin());

    switch (spec_.kind) {
      case ProjKind::bh: {
        const std::size_t b = spec_.block == 0 ? D : spec_.block;
        const std::size_t groups = D / b;
        const std::size_t stage_size = groups * b * b;
        if (cache.stage_in.size() != spec_.stages)
          throw UsageError("projection backward: cache missing (forward must be called with one)");
        for (std::size_t s = spec_.stages; s-- > 0;) {
          fwht_kernel(g.data(), D);
          const double* in = cache.stage_in[s].row(i);
          double* gblk = grad_params.data() + s * stage_size;
          for (std::size_t grp = 0; grp < groups; ++grp) {
            const double* src = in + grp * b;
            const double* gdst = g.data() + grp * b;
            double* gb = gblk + grp * b * b;
            for (std::size_t r = 0; r < b; ++r) {
              const double sv = src[r];
              double* gbrow = gb + r * b;
              for (std::size_t c = 0; c < b; ++c) gbrow[c] += sv * gdst[c];
            }
          }
          detail::block_diag_apply_transposed(g.data(), tmp.data(),
                                              blob_.data() + s * stage_size, D, b);
          std::swap(g, tmp);
        }
        break;
      }
      case ProjKind::acdc: {
        if (cache.stage_in.size() != 2 * spec_.depth)
          throw UsageError("projection backward: cache missing (forward must be called with one)");
        for (std::size_t s = spec_.depth; s-- > 0;) {
          const double* a = blob_.data() + 2 * s * D;
          const double* d = a + D;
          double* ga = grad_params.data() + 2 * s * D;
          double* gd = ga + D;
          const double* pre_a = cache.stage_in[2 * s].row(i);
          const double* pre_d = cache.stage_in[2 * s + 1].row(i);
          fwht_kernel(g.data(), D);
          for (std::size_t j = 0; j < D; ++j) {
            gd[j] += pre_d[j] * g[j];
            g[j] *= d[j];
          }
          fwht_kernel(g.data(), D);
          for (std::size_t j = 0; j < D; ++j) {
            ga[j] += pre_a[j] * g[j];
            g[j] *= a[j];
          }
        }
        break;
      }
      case ProjKind::signflip: {
        for (std::size_t s = 3; s-- > 0;) {
          const double* sv = blob_.data() + s * D;
          fwht_kernel(g.data(), D);
          for (std::size_t j = 0; j < D; ++j) g[j] *= sv[j];
        }
        break;
      }
      case ProjKind::dense: break;
    }
    std::copy(g.begin(), g.begin() + spec_.d_in, grad_x.row(i));
  }
  require_finite(grad_x, "projection backward output");
  return grad_x;
}

}  // namespace lffn
