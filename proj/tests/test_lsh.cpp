#include <doctest.h>

#include <numeric>
#include <random>

#include "lookupffn/lsh.hpp"

using namespace lffn;

namespace {

/// Rows with a shared component: w_i = rho * c + sqrt(1 - rho^2) * g_i.
DenseMatrix correlated_rows(std::size_t t, std::size_t d, double rho, std::mt19937_64& rng) {
  std::vector<double> shared(d);
  fill_gaussian(shared, rng);
  DenseMatrix w = DenseMatrix::gaussian(t, d, rng, std::sqrt(1.0 - rho * rho));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) w.at(i, j) += rho * shared[j];
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("lsh");

TEST_CASE("bucket lists partition the units") {
  std::mt19937_64 rng(1);
  const DenseMatrix w = DenseMatrix::gaussian(256, 32, rng);
  const LshEnsemble e = LshEnsemble::build(w, 4, 6, 2);
  for (const auto& table : e.buckets) {
    std::size_t total = 0;
    std::vector<bool> seen(w.rows, false);
    for (const auto& bucket : table)
      for (std::uint32_t unit : bucket) {
        CHECK(!seen[unit]);
        seen[unit] = true;
        ++total;
      }
    CHECK(total == w.rows);
  }
}

TEST_CASE("a large budget at tau = 1 recalls nearly everything") {
  std::mt19937_64 rng(3);
  const DenseMatrix w = DenseMatrix::gaussian(256, 32, rng);
  const DenseMatrix queries = DenseMatrix::gaussian(64, 32, rng);
  const std::vector<std::size_t> budgets = {32};
  const std::vector<std::size_t> top_x = {1, 8};
  const auto points = lsh_recall_experiment(w, queries, budgets, 1, top_x, 4);
  for (const auto& p : points) {
    CAPTURE(p.top_x);
    CHECK(p.recall > 0.99);
  }
}

TEST_CASE("recall grows with the budget and stays below 1 at small budgets") {
  std::mt19937_64 rng(5);
  const DenseMatrix w = DenseMatrix::gaussian(512, 64, rng);
  const DenseMatrix queries = DenseMatrix::gaussian(48, 64, rng);
  const std::vector<std::size_t> budgets = {1, 2, 4, 8, 16};
  const std::vector<std::size_t> top_x = {1, 8, 32};
  const auto points = lsh_recall_experiment(w, queries, budgets, 6, top_x, 6);

  for (std::size_t xi = 0; xi < top_x.size(); ++xi) {
    double prev = -1.0;
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
      const auto& p = points[bi * top_x.size() + xi];
      CHECK(p.recall >= prev);  // prefixes of one ensemble: monotone by construction
      prev = p.recall;
    }
    CHECK(points[xi].recall < 1.0);  // smallest budget misses neighbors
  }
}

TEST_CASE("one table of tau = 8 bits recalls the top neighbor poorly") {
  std::mt19937_64 rng(7);
  const DenseMatrix w = DenseMatrix::gaussian(2048, 128, rng);
  const DenseMatrix queries = DenseMatrix::gaussian(64, 128, rng);
  const std::vector<std::size_t> budgets = {1};
  const std::vector<std::size_t> top_x = {1};
  const auto points = lsh_recall_experiment(w, queries, budgets, 8, top_x, 8);
  CHECK(points[0].recall < 0.5);
}

TEST_CASE("hyperplane splits are near balanced on independent rows") {
  std::mt19937_64 rng(9);
  const std::size_t t = 4096;
  const DenseMatrix w = DenseMatrix::gaussian(t, 64, rng);
  const LshEnsemble e = LshEnsemble::build(w, 1, 1, 10);
  const BucketStats stats = bucket_histogram(e, t);
  REQUIRE(stats.sizes_desc.size() == 2);
  CHECK(stats.sizes_desc[0] + stats.sizes_desc[1] == t);
  CHECK(double(stats.sizes_desc[0]) / double(t) < 0.6);
  CHECK(double(stats.sizes_desc[0]) / double(t) >= 0.5);
}

TEST_CASE("correlated rows skew the buckets") {
  std::mt19937_64 rng(11);
  const std::size_t t = 2048;
  const DenseMatrix w = correlated_rows(t, 64, 0.7, rng);
  const LshEnsemble e = LshEnsemble::build(w, 4, 8, 12);
  const BucketStats stats = bucket_histogram(e, t);
  CHECK(stats.max_mean_ratio > 2.0);
  CHECK(stats.gini > 0.0);

  // The retrieval pathology this causes: query-dependent work.
  const DenseMatrix queries = DenseMatrix::gaussian(64, 64, rng);
  const auto sizes = retrieval_set_sizes(e, queries);
  const double mean = std::accumulate(sizes.begin(), sizes.end(), 0.0) / double(sizes.size());
  double var = 0.0;
  for (auto s : sizes) var += (double(s) - mean) * (double(s) - mean);
  CHECK(var > 0.0);
}

TEST_CASE("yoso estimate: duplicated unit vectors collapse to one bucket") {
  const std::size_t d = 16, t = 8;
  std::mt19937_64 rng(13);
  DenseMatrix x = DenseMatrix::gaussian(1, d, rng);
  DenseMatrix w(t, d);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) w.at(i, j) = x.at(0, j);
  const DenseMatrix v = DenseMatrix::gaussian(t, 4, rng);
  const LshEnsemble e = LshEnsemble::build(w, 1, 4, 14);
  const YosoEstimate est = yoso_estimate(x, w, v, e);
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = 0.0;
    for (std::size_t i = 0; i < t; ++i) expected += v.at(i, j);
    CHECK(est.y_hat.at(0, j) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("yoso estimator error decays as tables grow") {
  const std::size_t d = 32, t = 128, d_out = 8, n_queries = 16, seeds = 10;
  const std::vector<std::size_t> table_counts = {8, 32, 128, 512};
  std::vector<double> mse(table_counts.size(), 0.0);
  for (std::size_t s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(100 + s);
    const DenseMatrix w = DenseMatrix::gaussian(t, d, rng);
    const DenseMatrix v = DenseMatrix::gaussian(t, d_out, rng);
    const DenseMatrix queries = DenseMatrix::gaussian(n_queries, d, rng);
    for (std::size_t li = 0; li < table_counts.size(); ++li) {
      const LshEnsemble e = LshEnsemble::build(w, table_counts[li], 4, 1000 + s * 7 + li);
      mse[li] += yoso_estimate(queries, w, v, e).mse_vs_reference / double(seeds);
    }
  }
  for (std::size_t li = 1; li < table_counts.size(); ++li) CHECK(mse[li] < mse[li - 1]);
}

TEST_CASE("rebuilding after perturbing W changes the tables") {
  std::mt19937_64 rng(17);
  DenseMatrix w = DenseMatrix::gaussian(64, 16, rng);
  const DenseMatrix v = DenseMatrix::gaussian(64, 4, rng);
  const LshEnsemble e = LshEnsemble::build(w, 2, 4, 18);
  const YosoTables before = YosoTables::build(w, v, e);
  // Perturb one unit enough to move it across a hyperplane.
  for (std::size_t j = 0; j < 16; ++j) w.at(0, j) = -w.at(0, j);
  const LshEnsemble e2 = LshEnsemble::build(w, 2, 4, 18);  // same hyperplanes (same seed)
  const YosoTables after = YosoTables::build(w, v, e2);
  CHECK(before.data != after.data);
}

TEST_SUITE_END();
