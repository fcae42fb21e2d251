#include "lookupffn/lookup.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace lffn {

const char* lookup_variant_name(LookupVariant v) {
  switch (v) {
    case LookupVariant::softmax: return "softmax";
    case LookupVariant::scaled: return "scaled";
    case LookupVariant::sigmoid_tau1: return "sigmoid-tau1";
    case LookupVariant::gelu_tau1: return "gelu-tau1";
  }
  return "?";
}

LookupVariant lookup_variant_from_name(const std::string& name) {
  if (name == "softmax") return LookupVariant::softmax;
  if (name == "scaled") return LookupVariant::scaled;
  if (name == "sigmoid-tau1") return LookupVariant::sigmoid_tau1;
  if (name == "gelu-tau1") return LookupVariant::gelu_tau1;
  throw UsageError("unknown lookup variant: " + name);
}

void LookupConfig::validate() const {
  if (d_in == 0 || d_out == 0) throw SizeError("lookup config: d_in and d_out must be positive");
  if (tables == 0) throw SizeError("lookup config: table count must be >= 1");
  if (code_bits < 1 || code_bits > 24)
    throw SizeError("lookup config: code bits must be in [1, 24]");
  if (neighbor_count < 1 || neighbor_count > table_rows())
    throw SizeError("lookup config: neighbor count must be in [1, 2^tau]");
  if ((variant == LookupVariant::sigmoid_tau1 || variant == LookupVariant::gelu_tau1) &&
      code_bits != 1)
    throw SizeError("lookup config: tau-1 variants require code_bits == 1");
}

HashTables HashTables::init(const LookupConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  HashTables t;
  t.tables = cfg.tables;
  t.code_bits = cfg.code_bits;
  t.d_out = cfg.d_out;
  t.data.assign(cfg.tables * cfg.table_rows() * cfg.d_out, 0.0);
  auto rng = make_rng(seed);
  fill_gaussian(t.data, rng, 1.0 / std::sqrt(double(cfg.tables)));
  return t;
}

HashTables HashTables::zeros_like(const LookupConfig& cfg) {
  HashTables t;
  t.tables = cfg.tables;
  t.code_bits = cfg.code_bits;
  t.d_out = cfg.d_out;
  t.data.assign(cfg.tables * cfg.table_rows() * cfg.d_out, 0.0);
  return t;
}

std::uint64_t HashTables::checksum() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  const unsigned char* bytes = reinterpret_cast<const unsigned char*>(data.data());
  for (std::size_t i = 0; i < data.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Codes and weights
// ---------------------------------------------------------------------------

std::uint32_t sign_code(std::span<const double> z) {
  std::uint32_t code = 0;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (z[j] >= 0.0) code |= (std::uint32_t{1} << j);
  return code;
}

SignCodes compute_codes(const SoftCodes& soft) {
  require_finite(std::span<const double>(soft.z), "compute_codes input");
  SignCodes out;
  out.n = soft.n;
  out.tables = soft.tables;
  out.code_bits = soft.code_bits;
  out.codes.resize(soft.n * soft.tables);
  out.abs_z.resize(soft.z.size());
  for (std::size_t ik = 0; ik < soft.n * soft.tables; ++ik) {
    const double* z = soft.z.data() + ik * soft.code_bits;
    double* az = out.abs_z.data() + ik * soft.code_bits;
    std::uint32_t code = 0;
    for (std::size_t j = 0; j < soft.code_bits; ++j) {
      if (z[j] >= 0.0) code |= (std::uint32_t{1} << j);
      az[j] = std::abs(z[j]);
    }
    out.codes[ik] = code;
  }
  return out;
}

double log_denominator(std::span<const double> z) {
  double acc = 0.0;
  for (double v : z) {
    const double a = std::abs(v);
    acc += a + std::log1p(std::exp(-2.0 * a));
  }
  return acc;
}

double code_dot(std::span<const double> z, std::uint32_t code) {
  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j)
    acc += (code >> j) & 1u ? z[j] : -z[j];
  return acc;
}

std::vector<std::uint32_t> neighbor_codes(std::span<const double> z, std::size_t count) {
  const std::size_t tau = z.size();
  if (tau == 0 || tau > 24) throw SizeError("neighbor_codes: tau must be in [1, 24]");
  const std::size_t total = std::size_t{1} << tau;
  if (count > total)
    throw SizeError("neighbor_codes: count " + std::to_string(count) + " exceeds 2^tau = " +
                    std::to_string(total));

  std::vector<std::uint32_t> out;
  out.reserve(count);
  const std::uint32_t base = sign_code(z);
  out.push_back(base);
  if (count == 1) return out;

  // Enumerate flip subsets in nondecreasing sum of flipped |z_j|:
  // <z, S_i> = sum|z_j| - 2 * (flipped mass), so this is exactly
  // non-increasing inner-product order. Classic k-smallest-subset-sums
  // frontier: a subset is extended by appending the next coordinate or by
  // replacing its last coordinate with the next one.
  std::vector<std::pair<double, std::uint32_t>> mag(tau);  // (|z_j|, j), ascending
  for (std::size_t j = 0; j < tau; ++j) mag[j] = {std::abs(z[j]), std::uint32_t(j)};
  std::sort(mag.begin(), mag.end());

  struct Node {
    double cost;
    std::uint32_t mask;  // over sorted positions
    std::uint32_t last;  // highest set sorted position
    bool operator>(const Node& o) const { return cost > o.cost; }
  };
  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> frontier;
  frontier.push({mag[0].first, 1u, 0u});

  while (out.size() < count && !frontier.empty()) {
    const Node node = frontier.top();
    frontier.pop();
    std::uint32_t code = base;
    for (std::size_t p = 0; p < tau; ++p)
      if ((node.mask >> p) & 1u) code ^= (std::uint32_t{1} << mag[p].second);
    out.push_back(code);
    if (node.last + 1 < tau) {
      frontier.push({node.cost + mag[node.last + 1].first, node.mask | (1u << (node.last + 1)),
                     node.last + 1});
      frontier.push({node.cost - mag[node.last].first + mag[node.last + 1].first,
                     (node.mask ^ (1u << node.last)) | (1u << (node.last + 1)), node.last + 1});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

void check_shapes(const DenseMatrix& x, const Projection& proj, const HashTables& tables,
                  const LookupConfig& cfg) {
  cfg.validate();
  if (x.cols != cfg.d_in) throw SizeError("lookup forward: input width mismatch");
  if (proj.spec().d_in != cfg.d_in || proj.spec().d_out != cfg.code_width())
    throw SizeError("lookup forward: projection must map d_in to h*tau");
  if (tables.tables != cfg.tables || tables.code_bits != cfg.code_bits ||
      tables.d_out != cfg.d_out)
    throw SizeError("lookup forward: table stack shape mismatch");
}

/// Top-1 weight as the documented product form prod_j 1/(1 + exp(-2|z_j|)).
double top1_weight(std::span<const double> abs_z) {
  double w = 1.0;
  for (double a : abs_z) w /= 1.0 + std::exp(-2.0 * a);
  return w;
}

template <bool Count>
DenseMatrix forward_impl(const DenseMatrix& x, const Projection& proj, const HashTables& tables,
                         const LookupConfig& cfg, LookupCache* cache) {
  check_shapes(x, proj, tables, cfg);

  const std::size_t n = x.rows;
  const std::size_t h = cfg.tables;
  const std::size_t tau = cfg.code_bits;
  const std::size_t nc = cfg.neighbor_count;
  const bool scaled = cfg.scaled_numerator();

  ProjectionCache* proj_cache = cache ? &cache->proj : nullptr;
  DenseMatrix p = Count ? proj.forward_counted(x, proj_cache) : proj.forward(x, proj_cache);
  require_finite(p, "hash stage");

  SoftCodes soft;
  soft.n = n;
  soft.tables = h;
  soft.code_bits = tau;
  soft.z = std::move(p.data);
  SignCodes sign = compute_codes(soft);

  if (cache) {
    cache->x = x;
    cache->neighbor_count = nc;
    cache->codes.assign(n * h * nc, 0);
    cache->weights.assign(n * h * nc, 0.0);
    cache->dots.assign(n * h * nc, 0.0);
  }

  DenseMatrix y(n, cfg.d_out);
  std::vector<std::uint32_t> local_codes;
  for (std::size_t i = 0; i < n; ++i) {
    double* yi = y.row(i);
    for (std::size_t k = 0; k < h; ++k) {
      const std::size_t ik = i * h + k;
      const std::span<const double> z = soft.at(i, k);
      const std::span<const double> abs_z{sign.abs_z.data() + ik * tau, tau};

      if constexpr (Count) flop_counter().other += 6.0 * double(tau);

      std::uint32_t top = sign.codes[ik];
      const std::uint32_t* codes = &top;
      std::size_t count = 1;
      if (nc > 1) {
        local_codes = neighbor_codes(z, nc);
        codes = local_codes.data();
        count = local_codes.size();
      }

      double logden = 0.0;
      double sum_abs = 0.0;
      if (nc > 1) {
        logden = log_denominator(z);
      } else {
        for (double a : abs_z) sum_abs += a;
      }

      for (std::size_t c = 0; c < count; ++c) {
        const std::uint32_t code = codes[c];
        const double dot = (nc == 1) ? sum_abs : code_dot(z, code);
        const double w = (nc == 1) ? top1_weight(abs_z) : std::exp(dot - logden);
        const double coeff = scaled ? w * dot : w;
        const double* trow = tables.row(k, code);
        for (std::size_t j = 0; j < cfg.d_out; ++j) {
          yi[j] += coeff * trow[j];
          if constexpr (Count) flop_counter().gather += 2;
        }
        if constexpr (Count) flop_counter().table_reads += 1;
        if (cache) {
          const std::size_t slot = ik * nc + c;
          cache->codes[slot] = code;
          cache->weights[slot] = w;
          cache->dots[slot] = dot;
        }
      }
    }
  }
  require_finite(y, "gather stage");
  if (cache) {
    cache->soft = std::move(soft);
    cache->sign = std::move(sign);
  }
  return y;
}

}  // namespace

DenseMatrix lookup_forward(const DenseMatrix& x, const Projection& proj, const HashTables& tables,
                           const LookupConfig& cfg, LookupCache* cache) {
  return forward_impl<false>(x, proj, tables, cfg, cache);
}

namespace detail {
DenseMatrix lookup_forward_counted(const DenseMatrix& x, const Projection& proj,
                                   const HashTables& tables, const LookupConfig& cfg,
                                   LookupCache* cache) {
  return forward_impl<true>(x, proj, tables, cfg, cache);
}
}  // namespace detail

LookupGrads lookup_backward(const DenseMatrix& grad_y, const LookupCache& cache,
                            const Projection& proj, const HashTables& tables,
                            const LookupConfig& cfg) {
  if (cache.codes.empty() && cache.soft.n == 0)
    throw UsageError("lookup backward: cache missing (forward must be called with one)");
  check_shapes(cache.x, proj, tables, cfg);
  const std::size_t n = cache.x.rows;
  if (grad_y.rows != n || grad_y.cols != cfg.d_out)
    throw SizeError("lookup backward: grad_y shape mismatch");
  require_finite(grad_y, "lookup backward input");

  const std::size_t h = cfg.tables;
  const std::size_t tau = cfg.code_bits;
  const std::size_t nc = cache.neighbor_count;
  const bool scaled = cfg.scaled_numerator();

  LookupGrads grads;
  grads.grad_tables.assign(tables.size(), 0.0);
  grads.grad_proj.assign(proj.param_count(), 0.0);

  DenseMatrix grad_z(n, cfg.code_width());
  for (std::size_t i = 0; i < n; ++i) {
    const double* gy = grad_y.row(i);
    for (std::size_t k = 0; k < h; ++k) {
      const std::size_t ik = i * h + k;
      const std::span<const double> z = cache.soft.at(i, k);
      double* gz = grad_z.row(i) + k * tau;
      for (std::size_t c = 0; c < nc; ++c) {
        const std::size_t slot = ik * nc + c;
        const std::uint32_t code = cache.codes[slot];
        const double w = cache.weights[slot];
        const double dot = cache.dots[slot];
        const double coeff = scaled ? w * dot : w;

        const double* trow = tables.row(k, code);
        double* gtrow = grads.grad_tables.data() + (k * tables.rows_per_table() + code) * cfg.d_out;
        double gdott = 0.0;
        for (std::size_t j = 0; j < cfg.d_out; ++j) {
          gdott += gy[j] * trow[j];
          gtrow[j] += coeff * gy[j];
        }

        for (std::size_t j = 0; j < tau; ++j) {
          const double s = ((code >> j) & 1u) ? 1.0 : -1.0;
          const double th = std::tanh(z[j]);
          const double dcoeff = scaled ? w * (s * (1.0 + dot) - dot * th) : w * (s - th);
          gz[j] += gdott * dcoeff;
        }
      }
    }
  }

  grads.grad_x = proj.backward(grad_z, cache.x, cache.proj, grads.grad_proj);
  require_finite(std::span<const double>(grads.grad_tables), "lookup backward tables");
  return grads;
}

// ---------------------------------------------------------------------------
// tau = 1 references
// ---------------------------------------------------------------------------

double gelu_exact(double u) { return 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0))); }

namespace {
double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
}  // namespace

DenseMatrix gelu_tau1_reference(const DenseMatrix& x, const DenseMatrix& w, const DenseMatrix& v) {
  if (w.cols != x.cols) throw SizeError("gelu_tau1_reference: W width mismatch");
  if (v.rows != w.rows) throw SizeError("gelu_tau1_reference: V row count mismatch");
  DenseMatrix y(x.rows, v.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t k = 0; k < w.rows; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) dot += x.at(i, j) * w.at(k, j);
      const double z = 0.851 * dot;
      // exp(z) / (exp(z) + exp(-z)) = sigmoid(2z)
      const double gate = 1.175 * z * sigmoid(2.0 * z);
      for (std::size_t j = 0; j < v.cols; ++j) y.at(i, j) += gate * v.at(k, j);
    }
  }
  return y;
}

double gelu_tau1_grid_deviation(std::size_t grid_points) {
  double worst = 0.0;
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double u = -6.0 + 12.0 * double(i) / double(grid_points - 1);
    const double approx = 1.175 * (0.851 * u) * sigmoid(2.0 * 0.851 * u);
    worst = std::max(worst, std::abs(approx - gelu_exact(u)));
  }
  return worst;
}

}  // namespace lffn
