#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lookupffn/matrix.hpp"

namespace lffn {

/// Classic hyperplane LSH over the rows of a unit matrix W: L tables of
/// tau random Gaussian hyperplanes each, bucket lists partitioning {0..t-1}
/// within every table. Used for the retrieval diagnostics only; the lookup
/// layer never builds these.
struct LshEnsemble {
  std::size_t tables = 0;  // L
  std::size_t bits = 0;    // tau
  std::size_t dim = 0;
  std::vector<double> projections;                        // L x dim x tau
  std::vector<std::vector<std::vector<std::uint32_t>>> buckets;  // [L][2^tau] -> unit ids

  static LshEnsemble build(const DenseMatrix& w, std::size_t tables, std::size_t bits,
                           std::uint64_t seed);

  /// Sign-bit hash of x under table k (bit j = sign of hyperplane j, LSB
  /// first, sign(0) = +1).
  std::uint32_t hash(std::size_t table, std::span<const double> x) const;
};

struct RecallPoint {
  std::size_t tables_used = 0;
  std::size_t hash_functions = 0;  // tables_used * bits
  std::size_t top_x = 0;
  double recall = 0.0;
};

/// Fraction of brute-force top-x inner-product neighbors recovered by
/// union-of-buckets retrieval, for each table budget. Budgets are evaluated
/// as prefixes of one ensemble so recall is non-decreasing by construction.
std::vector<RecallPoint> lsh_recall_experiment(const DenseMatrix& w, const DenseMatrix& queries,
                                               std::span<const std::size_t> table_budgets,
                                               std::size_t bits,
                                               std::span<const std::size_t> top_x_values,
                                               std::uint64_t seed);

/// |S(q)| for each query: size of the union of buckets the query hashes to.
std::vector<std::size_t> retrieval_set_sizes(const LshEnsemble& ensemble, const DenseMatrix& queries);

struct BucketStats {
  std::vector<std::size_t> sizes_desc;  // all L * 2^tau bucket occupancies
  double max_mean_ratio = 0.0;          // max size / (t / 2^tau)
  double gini = 0.0;
};

BucketStats bucket_histogram(const LshEnsemble& ensemble, std::size_t unit_count);

/// Static-table estimator: T[k][j] = (1/L) sum_{f_k(W_i) = j} V_i,
/// y_hat = sum_k T[k][f_k(q)].
struct YosoTables {
  std::size_t tables = 0;
  std::size_t bits = 0;
  std::size_t d_out = 0;
  std::vector<double> data;  // L x 2^tau x d_out

  static YosoTables build(const DenseMatrix& w, const DenseMatrix& v, const LshEnsemble& ensemble);
};

struct YosoEstimate {
  DenseMatrix y_hat;
  /// Mean squared error against the collision-probability-weighted sum
  /// y_ref(q) = sum_i (1 - theta_i / pi)^tau V_i.
  double mse_vs_reference = 0.0;
};

YosoEstimate yoso_estimate(const DenseMatrix& queries, const DenseMatrix& w, const DenseMatrix& v,
                           const LshEnsemble& ensemble);

}  // namespace lffn
