#include "lookupffn/lsh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lffn {

LshEnsemble LshEnsemble::build(const DenseMatrix& w, std::size_t tables, std::size_t bits,
                               std::uint64_t seed) {
  if (tables == 0 || bits == 0 || bits > 24) throw SizeError("lsh build: bad table/bit counts");
  LshEnsemble e;
  e.tables = tables;
  e.bits = bits;
  e.dim = w.cols;
  e.projections.resize(tables * w.cols * bits);
  auto rng = make_rng(seed);
  fill_gaussian(e.projections, rng);

  e.buckets.assign(tables, std::vector<std::vector<std::uint32_t>>(std::size_t{1} << bits));
  for (std::size_t k = 0; k < tables; ++k)
    for (std::size_t i = 0; i < w.rows; ++i)
      e.buckets[k][e.hash(k, w.row_span(i))].push_back(std::uint32_t(i));
  return e;
}

std::uint32_t LshEnsemble::hash(std::size_t table, std::span<const double> x) const {
  if (x.size() != dim) throw SizeError("lsh hash: dimension mismatch");
  const double* proj = projections.data() + table * dim * bits;
  std::uint32_t code = 0;
  for (std::size_t j = 0; j < bits; ++j) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) acc += x[c] * proj[c * bits + j];
    if (acc >= 0.0) code |= (std::uint32_t{1} << j);
  }
  return code;
}

namespace {

/// Indices of the x largest inner products <q, W_i>, exact brute force.
std::vector<std::uint32_t> brute_force_top(const DenseMatrix& w, std::span<const double> q,
                                           std::size_t x) {
  std::vector<std::pair<double, std::uint32_t>> scored(w.rows);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = 0.0;
    const double* wi = w.row(i);
    for (std::size_t c = 0; c < w.cols; ++c) acc += q[c] * wi[c];
    scored[i] = {acc, std::uint32_t(i)};
  }
  std::partial_sort(scored.begin(), scored.begin() + std::min(x, scored.size()), scored.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::uint32_t> out;
  out.reserve(x);
  for (std::size_t i = 0; i < std::min(x, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

std::vector<RecallPoint> lsh_recall_experiment(const DenseMatrix& w, const DenseMatrix& queries,
                                               std::span<const std::size_t> table_budgets,
                                               std::size_t bits,
                                               std::span<const std::size_t> top_x_values,
                                               std::uint64_t seed) {
  if (table_budgets.empty() || top_x_values.empty())
    throw SizeError("lsh recall: empty budget or top-x list");
  const std::size_t max_tables = *std::max_element(table_budgets.begin(), table_budgets.end());
  const LshEnsemble ensemble = LshEnsemble::build(w, max_tables, bits, seed);

  // Ground truth once per query.
  const std::size_t max_x = *std::max_element(top_x_values.begin(), top_x_values.end());
  std::vector<std::vector<std::uint32_t>> truth(queries.rows);
  for (std::size_t q = 0; q < queries.rows; ++q)
    truth[q] = brute_force_top(w, queries.row_span(q), max_x);

  std::vector<std::uint32_t> stamp(w.rows, 0);
  std::uint32_t epoch = 0;

  std::vector<RecallPoint> out;
  for (std::size_t budget : table_budgets) {
    std::vector<double> hits(top_x_values.size(), 0.0);
    for (std::size_t q = 0; q < queries.rows; ++q) {
      ++epoch;
      for (std::size_t k = 0; k < budget; ++k) {
        const std::uint32_t code = ensemble.hash(k, queries.row_span(q));
        for (std::uint32_t unit : ensemble.buckets[k][code]) stamp[unit] = epoch;
      }
      for (std::size_t xi = 0; xi < top_x_values.size(); ++xi) {
        const std::size_t x = top_x_values[xi];
        std::size_t found = 0;
        for (std::size_t r = 0; r < x; ++r)
          if (stamp[truth[q][r]] == epoch) ++found;
        hits[xi] += double(found) / double(x);
      }
    }
    for (std::size_t xi = 0; xi < top_x_values.size(); ++xi)
      out.push_back({budget, budget * bits, top_x_values[xi], hits[xi] / double(queries.rows)});
  }
  return out;
}

std::vector<std::size_t> retrieval_set_sizes(const LshEnsemble& ensemble,
                                             const DenseMatrix& queries) {
  std::vector<std::size_t> sizes(queries.rows, 0);
  std::vector<std::uint32_t> stamp;
  std::uint32_t epoch = 0;
  std::size_t unit_count = 0;
  for (const auto& table : ensemble.buckets)
    for (const auto& bucket : table) unit_count = std::max<std::size_t>(
        unit_count, bucket.empty() ? 0 : *std::max_element(bucket.begin(), bucket.end()) + 1);
  stamp.assign(unit_count, 0);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    ++epoch;
    std::size_t count = 0;
    for (std::size_t k = 0; k < ensemble.tables; ++k) {
      const std::uint32_t code = ensemble.hash(k, queries.row_span(q));
      for (std::uint32_t unit : ensemble.buckets[k][code])
        if (stamp[unit] != epoch) {
          stamp[unit] = epoch;
          ++count;
        }
    }
    sizes[q] = count;
  }
  return sizes;
}

BucketStats bucket_histogram(const LshEnsemble& ensemble, std::size_t unit_count) {
  BucketStats stats;
  for (const auto& table : ensemble.buckets) {
    std::size_t total = 0;
    for (const auto& bucket : table) {
      stats.sizes_desc.push_back(bucket.size());
      total += bucket.size();
    }
    if (total != unit_count)
      throw NumericError("bucket histogram: bucket lists do not partition the units");
  }
  std::sort(stats.sizes_desc.begin(), stats.sizes_desc.end(), std::greater<>());

  const double mean = double(unit_count) / double(std::size_t{1} << ensemble.bits);
  stats.max_mean_ratio = stats.sizes_desc.empty() ? 0.0 : double(stats.sizes_desc[0]) / mean;

  // Gini over all bucket occupancies (ascending order formula).
  const std::size_t n = stats.sizes_desc.size();
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double size = double(stats.sizes_desc[n - 1 - i]);  // ascending
    weighted += (2.0 * double(i + 1) - double(n) - 1.0) * size;
    total += size;
  }
  stats.gini = total > 0.0 ? weighted / (double(n) * total) : 0.0;
  return stats;
}

YosoTables YosoTables::build(const DenseMatrix& w, const DenseMatrix& v,
                             const LshEnsemble& ensemble) {
  if (v.rows != w.rows) throw SizeError("yoso build: W and V row counts differ");
  YosoTables t;
  t.tables = ensemble.tables;
  t.bits = ensemble.bits;
  t.d_out = v.cols;
  t.data.assign(ensemble.tables * (std::size_t{1} << ensemble.bits) * v.cols, 0.0);
  const double inv_l = 1.0 / double(ensemble.tables);
  for (std::size_t k = 0; k < ensemble.tables; ++k) {
    for (std::size_t code = 0; code < ensemble.buckets[k].size(); ++code) {
      double* row = t.data.data() + (k * (std::size_t{1} << ensemble.bits) + code) * v.cols;
      for (std::uint32_t unit : ensemble.buckets[k][code])
        for (std::size_t j = 0; j < v.cols; ++j) row[j] += inv_l * v.at(unit, j);
    }
  }
  return t;
}

YosoEstimate yoso_estimate(const DenseMatrix& queries, const DenseMatrix& w, const DenseMatrix& v,
                           const LshEnsemble& ensemble) {
  const YosoTables t = YosoTables::build(w, v, ensemble);
  YosoEstimate est;
  est.y_hat = DenseMatrix(queries.rows, v.cols);

  double sq_err = 0.0;
  std::vector<double> ref(v.cols);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    double* yq = est.y_hat.row(q);
    for (std::size_t k = 0; k < ensemble.tables; ++k) {
      const std::uint32_t code = ensemble.hash(k, queries.row_span(q));
      const double* row =
          t.data.data() + (k * (std::size_t{1} << ensemble.bits) + code) * v.cols;
      for (std::size_t j = 0; j < v.cols; ++j) yq[j] += row[j];
    }

    // Reference: sigma = hyperplane collision probability (1 - theta/pi)^tau.
    std::fill(ref.begin(), ref.end(), 0.0);
    double qnorm = 0.0;
    for (std::size_t c = 0; c < queries.cols; ++c) qnorm += queries.at(q, c) * queries.at(q, c);
    qnorm = std::sqrt(qnorm);
    for (std::size_t i = 0; i < w.rows; ++i) {
      double dot = 0.0, wnorm = 0.0;
      for (std::size_t c = 0; c < w.cols; ++c) {
        dot += queries.at(q, c) * w.at(i, c);
        wnorm += w.at(i, c) * w.at(i, c);
      }
      wnorm = std::sqrt(wnorm);
      const double cosine = std::clamp(dot / std::max(qnorm * wnorm, 1e-300), -1.0, 1.0);
      const double theta = std::acos(cosine);
      const double sigma = std::pow(1.0 - theta / M_PI, double(ensemble.bits));
      for (std::size_t j = 0; j < v.cols; ++j) ref[j] += sigma * v.at(i, j);
    }
    for (std::size_t j = 0; j < v.cols; ++j) {
      const double d = yq[j] - ref[j];
      sq_err += d * d;
    }
  }
  est.mse_vs_reference = sq_err / double(queries.rows * v.cols);
  return est;
}

}  // namespace lffn
