#include "lookupffn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lffn {

namespace {

using clock_type = std::chrono::steady_clock;

double ms_since(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

std::vector<float> to_float(std::span<const double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = float(v[i]);
  return out;
}

void set_threads(int threads) {
#if defined(_OPENMP)
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

struct TimingStats {
  double mean = 0.0, median = 0.0, stddev = 0.0;
};

TimingStats summarize(std::vector<double> samples) {
  TimingStats s;
  const std::size_t n = samples.size();
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / double(n);
  std::sort(samples.begin(), samples.end());
  s.median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  double sq = 0.0;
  for (double v : samples) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / double(n));
  return s;
}

float gelu_f32(float u) { return 0.5f * u * (1.0f + std::erf(u / std::sqrt(2.0f))); }

float sigmoid_f32(float u) { return 1.0f / (1.0f + std::exp(-u)); }

// Row-tiled float32 forward of y = act(x W^T) V.
void dense_ffn_f32(const float* x, std::size_t rows, std::size_t d_in, std::size_t hidden,
                   std::size_t d_out, Activation act, const float* w, const float* v,
                   float* scores_tile, std::size_t tile, float* y) {
  std::fill(y, y + rows * d_out, 0.0f);
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    const std::size_t r1 = std::min(rows, r0 + tile);
#pragma omp parallel for
    for (long i = long(r0); i < long(r1); ++i) {
      const float* xi = x + std::size_t(i) * d_in;
      float* si = scores_tile + (std::size_t(i) - r0) * hidden;
      for (std::size_t u = 0; u < hidden; ++u) {
        const float* wu = w + u * d_in;
        float acc = 0.0f;
        for (std::size_t k = 0; k < d_in; ++k) acc += xi[k] * wu[k];
        si[u] = acc;
      }
      switch (act) {
        case Activation::gelu:
          for (std::size_t u = 0; u < hidden; ++u) si[u] = gelu_f32(si[u]);
          break;
        case Activation::sigmoid:
          for (std::size_t u = 0; u < hidden; ++u) si[u] = sigmoid_f32(si[u]);
          break;
        case Activation::softmax_units: {
          float mx = si[0];
          for (std::size_t u = 1; u < hidden; ++u) mx = std::max(mx, si[u]);
          float sum = 0.0f;
          for (std::size_t u = 0; u < hidden; ++u) {
            si[u] = std::exp(si[u] - mx);
            sum += si[u];
          }
          for (std::size_t u = 0; u < hidden; ++u) si[u] /= sum;
          break;
        }
      }
      float* yi = y + std::size_t(i) * d_out;
      for (std::size_t u = 0; u < hidden; ++u) {
        const float a = si[u];
        const float* vu = v + u * d_out;
        for (std::size_t j = 0; j < d_out; ++j) yi[j] += a * vu[j];
      }
    }
  }
}

struct LookupWorkspaceF32 {
  // parameters
  std::vector<float> proj_blob;
  std::vector<float> tables;
  // per-batch scratch
  std::vector<float> z;        // rows x h*tau
  std::vector<std::uint32_t> codes;  // rows x h
  std::vector<float> weights;        // rows x h
  std::vector<float> row_buf, row_tmp;
  std::vector<std::uint32_t> order;  // sorted-gather permutation per table tile
};

/// Hash stage: project a row tile to soft codes (structured kinds in f32).
void lookup_hash_f32(const float* x, std::size_t r0, std::size_t r1, const ProjectionSpec& spec,
                     const float* blob, float* z, std::size_t code_width, std::size_t d_in,
                     float* buf, float* tmp) {
  const std::size_t D = spec.transform_width();
  for (std::size_t i = r0; i < r1; ++i) {
    const float* xi = x + i * d_in;
    float* zi = z + i * code_width;
    if (spec.kind == ProjKind::dense) {
      for (std::size_t j = 0; j < code_width; ++j) zi[j] = 0.0f;
      for (std::size_t k = 0; k < d_in; ++k) {
        const float s = xi[k];
        const float* wrow = blob + k * code_width;
        for (std::size_t j = 0; j < code_width; ++j) zi[j] += s * wrow[j];
      }
      continue;
    }
    std::fill(buf, buf + D, 0.0f);
    std::copy(xi, xi + d_in, buf);
    if (spec.kind == ProjKind::bh) {
      const std::size_t b = spec.block == 0 ? D : spec.block;
      const std::size_t stage_size = (D / b) * b * b;
      for (std::size_t s = 0; s < spec.stages; ++s) {
        detail::block_diag_apply(buf, tmp, blob + s * stage_size, D, b);
        std::swap(buf, tmp);
        fwht_kernel(buf, D);
      }
    } else if (spec.kind == ProjKind::acdc) {
      for (std::size_t s = 0; s < spec.depth; ++s) {
        const float* a = blob + 2 * s * D;
        const float* d = a + D;
        for (std::size_t j = 0; j < D; ++j) buf[j] *= a[j];
        fwht_kernel(buf, D);
        for (std::size_t j = 0; j < D; ++j) buf[j] *= d[j];
        fwht_kernel(buf, D);
      }
    } else {  // signflip
      for (std::size_t s = 0; s < 3; ++s) {
        const float* sv = blob + s * D;
        for (std::size_t j = 0; j < D; ++j) buf[j] *= sv[j];
        fwht_kernel(buf, D);
      }
    }
    std::copy(buf, buf + code_width, zi);
  }
}

/// Weight stage: top-1 codes and their softmax weights.
void lookup_weights_f32(const float* z, std::size_t r0, std::size_t r1, std::size_t h,
                        std::size_t tau, bool scaled, std::uint32_t* codes, float* weights) {
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t k = 0; k < h; ++k) {
      const float* zk = z + (i * h + k) * tau;
      std::uint32_t code = 0;
      float w = 1.0f;
      float sum_abs = 0.0f;
      for (std::size_t j = 0; j < tau; ++j) {
        const float a = std::fabs(zk[j]);
        if (zk[j] >= 0.0f) code |= (std::uint32_t{1} << j);
        sum_abs += a;
        w /= 1.0f + std::exp(-2.0f * a);
      }
      codes[i * h + k] = code;
      weights[i * h + k] = scaled ? w * sum_abs : w;
    }
  }
}

void lookup_gather_f32(const float* tables, std::size_t h, std::size_t rows_per_table,
                       std::size_t d_out, const std::uint32_t* codes, const float* weights,
                       std::size_t r0, std::size_t r1, float* y) {
  for (std::size_t i = r0; i < r1; ++i) {
    float* yi = y + i * d_out;
    std::fill(yi, yi + d_out, 0.0f);
    for (std::size_t k = 0; k < h; ++k) {
      const float w = weights[i * h + k];
      const float* trow = tables + (k * rows_per_table + codes[i * h + k]) * d_out;
      for (std::size_t j = 0; j < d_out; ++j) yi[j] += w * trow[j];
    }
  }
}

/// Cache-blocking variant: within the tile, process one table at a time with
/// its gathers sorted by table row index, so hot table rows stay resident.
void lookup_gather_sorted_f32(const float* tables, std::size_t h, std::size_t rows_per_table,
                              std::size_t d_out, const std::uint32_t* codes, const float* weights,
                              std::size_t r0, std::size_t r1, std::uint32_t* order, float* y) {
  for (std::size_t i = r0; i < r1; ++i) std::fill(y + i * d_out, y + (i + 1) * d_out, 0.0f);
  const std::size_t tile = r1 - r0;
  for (std::size_t k = 0; k < h; ++k) {
    for (std::size_t i = 0; i < tile; ++i) order[i] = std::uint32_t(r0 + i);
    std::sort(order, order + tile, [&](std::uint32_t a, std::uint32_t b) {
      return codes[a * h + k] < codes[b * h + k];
    });
    const float* tbl = tables + k * rows_per_table * d_out;
    for (std::size_t s = 0; s < tile; ++s) {
      const std::uint32_t i = order[s];
      const float w = weights[i * h + k];
      const float* trow = tbl + codes[i * h + k] * d_out;
      float* yi = y + i * d_out;
      for (std::size_t j = 0; j < d_out; ++j) yi[j] += w * trow[j];
    }
  }
}

}  // namespace

BenchResult bench_dense_ffn(const BenchSpec& spec, std::size_t d_in, std::size_t hidden,
                            std::size_t d_out, Activation act, std::uint64_t seed) {
  spec.validate();
  set_threads(spec.threads);

  auto rng = make_rng(seed);
  const FFNParams p = FFNParams::init(d_in, hidden, d_out, act, seed + 1);
  const DenseMatrix x64 = DenseMatrix::gaussian(spec.rows, d_in, rng);

  const std::vector<float> x = to_float(x64.data);
  const std::vector<float> w = to_float(p.w);
  const std::vector<float> v = to_float(p.v);
  const std::size_t tile = std::min<std::size_t>(spec.rows, 64);
  std::vector<float> scores(tile * hidden);
  std::vector<float> y(spec.rows * d_out);

  BenchResult res;
  res.label = "dense-ffn";
  res.rows = spec.rows;
  res.mflop_per_token = vanilla_flops(d_in, hidden, d_out).total_mflop();

  std::vector<double> samples;
  const std::uint64_t allocs_before = detail::alloc_guard_hits();
  {
    detail::AllocGuard guard;
    for (std::size_t it = 0; it < spec.warmup + spec.reps; ++it) {
      const auto t0 = clock_type::now();
      dense_ffn_f32(x.data(), spec.rows, d_in, hidden, d_out, act, w.data(), v.data(),
                    scores.data(), tile, y.data());
      const double ms = ms_since(t0);
      if (it >= spec.warmup) samples.push_back(ms);
    }
  }
  res.timed_allocs = detail::alloc_guard_hits() - allocs_before;

  const TimingStats stats = summarize(samples);
  res.mean_ms = stats.mean;
  res.median_ms = stats.median;
  res.stddev_ms = stats.stddev;
  res.gflops = res.mflop_per_token * double(spec.rows) / (res.median_ms * 1e3 + 1e-30);
  return res;
}

BenchResult bench_lookup_ffn(const BenchSpec& spec, const LookupConfig& cfg,
                             const ProjectionSpec& proj, std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  if (cfg.neighbor_count != 1)
    throw UsageError("bench: the float32 inference kernel implements the top-1 default");
  if (proj.d_in != cfg.d_in || proj.d_out != cfg.code_width())
    throw SizeError("bench: projection spec must map d_in to h*tau");
  set_threads(spec.threads);

  auto rng = make_rng(seed);
  const Projection p = Projection::init(proj, seed + 1);
  const HashTables t = HashTables::init(cfg, seed + 2);
  const DenseMatrix x64 = DenseMatrix::gaussian(spec.rows, cfg.d_in, rng);

  LookupWorkspaceF32 ws;
  ws.proj_blob = to_float(p.blob());
  ws.tables = to_float(t.data);
  ws.z.resize(spec.rows * cfg.code_width());
  ws.codes.resize(spec.rows * cfg.tables);
  ws.weights.resize(spec.rows * cfg.tables);
  const std::size_t D = proj.transform_width();
  ws.row_buf.resize(D);
  ws.row_tmp.resize(D);
  const std::vector<float> x = to_float(x64.data);
  std::vector<float> y(spec.rows * cfg.d_out);
  const std::size_t tile = std::min<std::size_t>(spec.rows, 256);
  ws.order.resize(tile);

  BenchResult res;
  res.label = spec.sorted_gather ? "lookup-ffn-sorted" : "lookup-ffn";
  res.rows = spec.rows;
  res.mflop_per_token = lookup_flops(cfg, proj).total_mflop();

  std::vector<double> samples;
  double hash_total = 0.0, gather_total = 0.0, other_total = 0.0;
  std::size_t timed_iters = 0;
  const std::uint64_t allocs_before = detail::alloc_guard_hits();
  {
    detail::AllocGuard guard;
    for (std::size_t it = 0; it < spec.warmup + spec.reps; ++it) {
      const bool timed = it >= spec.warmup;
      const auto t0 = clock_type::now();
      double hash_ms = 0.0, gather_ms = 0.0, other_ms = 0.0;
      for (std::size_t r0 = 0; r0 < spec.rows; r0 += tile) {
        const std::size_t r1 = std::min(spec.rows, r0 + tile);
        const auto h0 = clock_type::now();
        lookup_hash_f32(x.data(), r0, r1, proj, ws.proj_blob.data(), ws.z.data(),
                        cfg.code_width(), cfg.d_in, ws.row_buf.data(), ws.row_tmp.data());
        const auto h1 = clock_type::now();
        lookup_weights_f32(ws.z.data(), r0, r1, cfg.tables, cfg.code_bits,
                           cfg.scaled_numerator(), ws.codes.data(), ws.weights.data());
        const auto h2 = clock_type::now();
        if (spec.sorted_gather)
          lookup_gather_sorted_f32(ws.tables.data(), cfg.tables, cfg.table_rows(), cfg.d_out,
                                   ws.codes.data(), ws.weights.data(), r0, r1, ws.order.data(),
                                   y.data());
        else
          lookup_gather_f32(ws.tables.data(), cfg.tables, cfg.table_rows(), cfg.d_out,
                            ws.codes.data(), ws.weights.data(), r0, r1, y.data());
        const auto h3 = clock_type::now();
        hash_ms += std::chrono::duration<double, std::milli>(h1 - h0).count();
        other_ms += std::chrono::duration<double, std::milli>(h2 - h1).count();
        gather_ms += std::chrono::duration<double, std::milli>(h3 - h2).count();
      }
      const double ms = ms_since(t0);
      if (timed) {
        samples.push_back(ms);
        hash_total += hash_ms;
        gather_total += gather_ms;
        other_total += other_ms;
        ++timed_iters;
      }
    }
  }
  res.timed_allocs = detail::alloc_guard_hits() - allocs_before;

  const TimingStats stats = summarize(samples);
  res.mean_ms = stats.mean;
  res.median_ms = stats.median;
  res.stddev_ms = stats.stddev;
  res.hash_ms = hash_total / double(timed_iters);
  res.gather_ms = gather_total / double(timed_iters);
  res.other_ms = other_total / double(timed_iters);
  res.gflops = res.mflop_per_token * double(spec.rows) / (res.median_ms * 1e3 + 1e-30);
  return res;
}

}  // namespace lffn
