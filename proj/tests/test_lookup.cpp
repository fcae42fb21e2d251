#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lookupffn/flops.hpp"
#include "lookupffn/lookup.hpp"
#include "lookupffn/train.hpp"
#include "oracles.hpp"

using namespace lffn;

namespace {

/// Test-only codebook: row i of S is the +/-1 pattern of integer i, LSB first.
std::vector<std::vector<double>> materialize_codebook(std::size_t tau) {
  std::vector<std::vector<double>> s(std::size_t{1} << tau, std::vector<double>(tau));
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < tau; ++j) s[i][j] = (i >> j) & 1u ? 1.0 : -1.0;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::vector<double> random_z(std::size_t tau, std::mt19937_64& rng, double stddev = 1.0) {
  std::vector<double> z(tau);
  fill_gaussian(z, rng, stddev);
  return z;
}

/// Dense reference for the full-softmax form: every code of every table
/// contributes through the explicitly materialized codebook.
DenseMatrix dense_codebook_oracle(const DenseMatrix& z_rows, const HashTables& tables,
                                  const LookupConfig& cfg) {
  const auto codebook = materialize_codebook(cfg.code_bits);
  DenseMatrix y(z_rows.rows, cfg.d_out);
  for (std::size_t i = 0; i < z_rows.rows; ++i) {
    for (std::size_t k = 0; k < cfg.tables; ++k) {
      std::span<const double> z{z_rows.row(i) + k * cfg.code_bits, cfg.code_bits};
      double denom = 0.0;
      for (const auto& s : codebook) denom += std::exp(dot(z, s));
      for (std::size_t c = 0; c < codebook.size(); ++c) {
        const double d = dot(z, codebook[c]);
        double num = std::exp(d);
        if (cfg.scaled_numerator()) num *= d;
        const double* trow = tables.row(k, std::uint32_t(c));
        for (std::size_t j = 0; j < cfg.d_out; ++j) y.at(i, j) += num / denom * trow[j];
      }
    }
  }
  return y;
}

/// A projection whose dense parameter matrix is given explicitly.
Projection dense_projection_from(const DenseMatrix& w) {
  ProjectionSpec spec = ProjectionSpec::dense(w.rows, w.cols);
  std::vector<double> blob(w.data);
  return Projection::from_blob(spec, std::move(blob));
}

}  // namespace

TEST_SUITE_BEGIN("lookup");

TEST_CASE("sign codes follow the LSB bit convention") {
  CHECK(sign_code(std::vector<double>{2.0, -1.0, 3.0}) == 5);
  CHECK(sign_code(std::vector<double>{-1.0, -2.0, -3.0}) == 0);
  CHECK(sign_code(std::vector<double>{0.0, -1.0}) == 1);  // sign(0) = +1
}

TEST_CASE("all-negative z attains the maximum at code 0") {
  const std::vector<double> z = {-0.7, -2.0, -0.1};
  const auto codebook = materialize_codebook(3);
  double sum_abs = 0.0;
  for (double v : z) sum_abs += std::abs(v);
  CHECK(dot(z, codebook[0]) == doctest::Approx(sum_abs).epsilon(1e-15));
  CHECK(sign_code(z) == 0);
}

TEST_CASE("compute_codes equals brute-force argmax over the codebook") {
  const std::size_t tau = 8;
  const auto codebook = materialize_codebook(tau);
  std::mt19937_64 rng(21);
  SoftCodes soft;
  soft.n = 100;
  soft.tables = 1;
  soft.code_bits = tau;
  soft.z.resize(100 * tau);
  fill_gaussian(soft.z, rng);
  const SignCodes codes = compute_codes(soft);
  for (std::size_t i = 0; i < 100; ++i) {
    std::span<const double> z{soft.z.data() + i * tau, tau};
    std::size_t best = 0;
    for (std::size_t c = 1; c < codebook.size(); ++c)
      if (dot(z, codebook[c]) > dot(z, codebook[best])) best = c;
    CHECK(codes.at(i, 0) == best);
  }
}

TEST_CASE("code identities hold exhaustively for tau <= 10") {
  std::mt19937_64 rng(22);
  for (std::size_t tau = 1; tau <= 10; ++tau) {
    const auto codebook = materialize_codebook(tau);
    for (int rep = 0; rep < 10; ++rep) {
      const auto z = random_z(tau, rng);
      double sum_abs = 0.0;
      for (double v : z) sum_abs += std::abs(v);
      const std::uint32_t g = sign_code(z);
      // <z, S_g> = sum |z_j|
      CHECK(dot(z, codebook[g]) == doctest::Approx(sum_abs).epsilon(1e-13));
      // g attains the max, its complement attains the min
      const std::uint32_t gmin = g ^ ((1u << tau) - 1u);
      for (std::size_t c = 0; c < codebook.size(); ++c) {
        CHECK(dot(z, codebook[c]) <= dot(z, codebook[g]) + 1e-12);
        CHECK(dot(z, codebook[c]) >= dot(z, codebook[gmin]) - 1e-12);
      }
    }
  }
}

TEST_CASE("log denominator: zero vector gives log 2^tau") {
  const std::vector<double> z(3, 0.0);
  CHECK(log_denominator(z) == doctest::Approx(std::log(8.0)).epsilon(1e-15));
}

TEST_CASE("log denominator matches the exhaustive sum at tau = 10") {
  std::mt19937_64 rng(23);
  const std::size_t tau = 10;
  const auto codebook = materialize_codebook(tau);
  for (int rep = 0; rep < 50; ++rep) {
    const auto z = random_z(tau, rng, 2.0);
    double sum = 0.0;
    for (const auto& s : codebook) sum += std::exp(dot(z, s));
    CHECK(std::abs(log_denominator(z) - std::log(sum)) / std::abs(std::log(sum)) < 1e-10);
  }
}

TEST_CASE("log denominator survives overflow-scale entries") {
  std::vector<double> z = {500.0, 1.0, -2.0};
  const double ld = log_denominator(z);
  CHECK(std::isfinite(ld));
  const double expected = (500.0 + std::log1p(std::exp(-1000.0))) +
                          (1.0 + std::log1p(std::exp(-2.0))) + (2.0 + std::log1p(std::exp(-4.0)));
  CHECK(ld == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("neighbor codes: count 1 is the top code") {
  std::mt19937_64 rng(24);
  const auto z = random_z(6, rng);
  const auto codes = neighbor_codes(z, 1);
  REQUIRE(codes.size() == 1);
  CHECK(codes[0] == sign_code(z));
}

TEST_CASE("neighbor codes flip the smallest-magnitude coordinates first") {
  const std::vector<double> z = {4.0, 3.0, 2.0, 1.0};
  const auto codes = neighbor_codes(z, 3);
  REQUIRE(codes.size() == 3);
  CHECK(codes[0] == 0b1111);
  CHECK(codes[1] == (0b1111 ^ 0b1000));  // flip coordinate 3 (|z| = 1)
  CHECK(codes[2] == (0b1111 ^ 0b0100));  // flip coordinate 2 (|z| = 2)
}

TEST_CASE("neighbor codes are the exact top-k of <z, S_i>") {
  std::mt19937_64 rng(25);
  const std::size_t tau = 8;
  const auto codebook = materialize_codebook(tau);
  for (int rep = 0; rep < 20; ++rep) {
    const auto z = random_z(tau, rng);
    const std::size_t count = 16;
    const auto codes = neighbor_codes(z, count);
    REQUIRE(codes.size() == count);

    std::vector<std::pair<double, std::uint32_t>> scored;
    for (std::size_t c = 0; c < codebook.size(); ++c)
      scored.push_back({dot(z, codebook[c]), std::uint32_t(c)});
    std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });

    // Non-increasing order and exact top-k membership.
    for (std::size_t i = 0; i < count; ++i) {
      const double got = code_dot(z, codes[i]);
      CHECK(got == doctest::Approx(scored[i].first).epsilon(1e-12));
      if (i > 0) CHECK(code_dot(z, codes[i - 1]) >= got - 1e-12);
    }
    std::vector<std::uint32_t> expected_set, got_set(codes);
    for (std::size_t i = 0; i < count; ++i) expected_set.push_back(scored[i].second);
    std::sort(expected_set.begin(), expected_set.end());
    std::sort(got_set.begin(), got_set.end());
    CHECK(expected_set == got_set);
  }
}

TEST_CASE("neighbor codes: full enumeration covers every code once") {
  std::mt19937_64 rng(26);
  const auto z = random_z(5, rng);
  auto codes = neighbor_codes(z, 32);
  std::sort(codes.begin(), codes.end());
  for (std::uint32_t c = 0; c < 32; ++c) CHECK(codes[c] == c);
  CHECK_THROWS_AS(neighbor_codes(z, 33), SizeError);
}

TEST_CASE("zero soft codes spread mass as 2^-tau per table") {
  LookupConfig cfg;
  cfg.d_in = 6;
  cfg.d_out = 5;
  cfg.tables = 3;
  cfg.code_bits = 4;
  DenseMatrix w(6, cfg.code_width());  // zero projection -> z = 0
  Projection proj = dense_projection_from(w);
  HashTables tables = HashTables::init(cfg, 31);
  std::mt19937_64 rng(30);
  const DenseMatrix x = DenseMatrix::gaussian(2, 6, rng);

  LookupCache cache;
  const DenseMatrix y = lookup_forward(x, proj, tables, cfg, &cache);
  const std::uint32_t all_plus = (1u << cfg.code_bits) - 1u;  // sign(0) = +1
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < cfg.tables; ++k) CHECK(cache.sign.at(i, k) == all_plus);
    for (std::size_t j = 0; j < cfg.d_out; ++j) {
      double expected = 0.0;
      for (std::size_t k = 0; k < cfg.tables; ++k) expected += tables.row(k, all_plus)[j] / 16.0;
      CHECK(y.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("tau = 1 with equal table rows halves the sum") {
  LookupConfig cfg;
  cfg.d_in = 4;
  cfg.d_out = 3;
  cfg.tables = 5;
  cfg.code_bits = 1;
  DenseMatrix w(4, cfg.code_width());
  Projection proj = dense_projection_from(w);
  HashTables tables = HashTables::zeros_like(cfg);
  const std::vector<double> v = {0.5, -1.0, 2.0};
  for (std::size_t k = 0; k < cfg.tables; ++k)
    for (std::uint32_t c = 0; c < 2; ++c) std::copy(v.begin(), v.end(), tables.row(k, c));
  DenseMatrix x(1, 4);
  x.at(0, 1) = 0.3;
  const DenseMatrix y = lookup_forward(x, proj, tables, cfg);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(y.at(0, j) == doctest::Approx(double(cfg.tables) * v[j] / 2.0).epsilon(1e-12));
}

TEST_CASE("full-neighbor forward equals the dense codebook oracle") {
  std::mt19937_64 rng(33);
  for (LookupVariant variant : {LookupVariant::softmax, LookupVariant::scaled}) {
    CAPTURE(lookup_variant_name(variant));
    LookupConfig cfg;
    cfg.d_in = 8;
    cfg.d_out = 6;
    cfg.tables = 2;
    cfg.code_bits = 3;
    cfg.variant = variant;
    cfg.neighbor_count = cfg.table_rows();
    ProjectionSpec ps = ProjectionSpec::bh(cfg.d_in, cfg.code_width(), 2, 4);
    Projection proj = Projection::init(ps, 34);
    HashTables tables = HashTables::init(cfg, 35);
    const DenseMatrix x = DenseMatrix::gaussian(16, cfg.d_in, rng);

    const DenseMatrix y = lookup_forward(x, proj, tables, cfg);
    const DenseMatrix z = proj.forward(x);
    const DenseMatrix expected = dense_codebook_oracle(z, tables, cfg);
    CHECK(max_rel_diff(y.data, expected.data, 1e-3) < 1e-10);
  }
}

TEST_CASE("sigmoid construction at tau = 1 matches the unit sum") {
  std::mt19937_64 rng(36);
  const std::size_t d = 7, units = 9, d_out = 4;
  const DenseMatrix w = DenseMatrix::gaussian(units, d, rng);
  const DenseMatrix v = DenseMatrix::gaussian(units, d_out, rng);

  LookupConfig cfg;
  cfg.d_in = d;
  cfg.d_out = d_out;
  cfg.tables = units;
  cfg.code_bits = 1;
  cfg.variant = LookupVariant::sigmoid_tau1;
  cfg.neighbor_count = 2;

  // z_k = 0.5 <x, W_k>; T[k][1] = V_k, T[k][0] = 0.
  DenseMatrix proj_w(d, units);
  for (std::size_t k = 0; k < units; ++k)
    for (std::size_t c = 0; c < d; ++c) proj_w.at(c, k) = 0.5 * w.at(k, c);
  Projection proj = dense_projection_from(proj_w);
  HashTables tables = HashTables::zeros_like(cfg);
  for (std::size_t k = 0; k < units; ++k)
    for (std::size_t j = 0; j < d_out; ++j) tables.row(k, 1)[j] = v.at(k, j);

  const DenseMatrix x = DenseMatrix::gaussian(12, d, rng);
  const DenseMatrix y = lookup_forward(x, proj, tables, cfg);

  DenseMatrix expected(12, d_out);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t k = 0; k < units; ++k) {
      double score = 0.0;
      for (std::size_t c = 0; c < d; ++c) score += x.at(i, c) * w.at(k, c);
      const double s = 1.0 / (1.0 + std::exp(-score));
      for (std::size_t j = 0; j < d_out; ++j) expected.at(i, j) += s * v.at(k, j);
    }
  CHECK(max_rel_diff(y.data, expected.data, 1e-3) < 1e-10);
}

TEST_CASE("scaled construction at tau = 1 matches the GELU approximation") {
  std::mt19937_64 rng(37);
  const std::size_t d = 6, units = 8, d_out = 5;
  const DenseMatrix w = DenseMatrix::gaussian(units, d, rng);
  const DenseMatrix v = DenseMatrix::gaussian(units, d_out, rng);

  LookupConfig cfg;
  cfg.d_in = d;
  cfg.d_out = d_out;
  cfg.tables = units;
  cfg.code_bits = 1;
  cfg.variant = LookupVariant::gelu_tau1;
  cfg.neighbor_count = 2;

  DenseMatrix proj_w(d, units);
  for (std::size_t k = 0; k < units; ++k)
    for (std::size_t c = 0; c < d; ++c) proj_w.at(c, k) = 0.851 * w.at(k, c);
  Projection proj = dense_projection_from(proj_w);
  HashTables tables = HashTables::zeros_like(cfg);
  for (std::size_t k = 0; k < units; ++k)
    for (std::size_t j = 0; j < d_out; ++j) tables.row(k, 1)[j] = 1.175 * v.at(k, j);

  const DenseMatrix x = DenseMatrix::gaussian(10, d, rng);
  const DenseMatrix y = lookup_forward(x, proj, tables, cfg);
  const DenseMatrix expected = gelu_tau1_reference(x, w, v);
  CHECK(max_rel_diff(y.data, expected.data, 1e-3) < 1e-10);

  // GELU(0) = 0 and the scaled numerator zeroes at z = 0.
  const DenseMatrix zeros(3, d);
  const DenseMatrix y0 = lookup_forward(zeros, proj, tables, cfg);
  for (double val : y0.data) CHECK(val == 0.0);
}

TEST_CASE("GELU approximation deviation on [-6, 6] is small and recorded") {
  const double dev = gelu_tau1_grid_deviation();
  MESSAGE("max |fast-GELU - exact GELU| on [-6,6]: ", dev);
  CHECK(dev < 0.05);  // sanity bound; exact value reported by the acceptance suite
  CHECK(dev > 0.0);   // the approximation is not exact
}

TEST_CASE("top-1 weight lies in (2^-tau, 1]") {
  std::mt19937_64 rng(38);
  for (std::size_t tau = 1; tau <= 10; ++tau) {
    for (int rep = 0; rep < 30; ++rep) {
      const auto z = random_z(tau, rng);
      double w = 1.0;
      for (double v : z) w /= 1.0 + std::exp(-2.0 * std::abs(v));
      CHECK(w > std::pow(2.0, -double(tau)));
      CHECK(w <= 1.0);
    }
  }
}

TEST_CASE("all-neighbor softmax weights sum to one") {
  std::mt19937_64 rng(39);
  LookupConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 4;
  cfg.tables = 3;
  cfg.code_bits = 5;
  cfg.neighbor_count = cfg.table_rows();
  ProjectionSpec ps = ProjectionSpec::dense(cfg.d_in, cfg.code_width());
  Projection proj = Projection::init(ps, 40);
  HashTables tables = HashTables::init(cfg, 41);
  const DenseMatrix x = DenseMatrix::gaussian(6, cfg.d_in, rng);
  LookupCache cache;
  (void)lookup_forward(x, proj, tables, cfg, &cache);
  for (std::size_t ik = 0; ik < 6 * cfg.tables; ++ik) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cfg.neighbor_count; ++c)
      sum += cache.weights[ik * cfg.neighbor_count + c];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("gradients: zero upstream gradient gives zero everywhere") {
  LookupConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 4;
  cfg.tables = 2;
  cfg.code_bits = 3;
  ProjectionSpec ps = ProjectionSpec::bh(cfg.d_in, cfg.code_width(), 2, 4);
  Projection proj = Projection::init(ps, 50);
  HashTables tables = HashTables::init(cfg, 51);
  std::mt19937_64 rng(52);
  const DenseMatrix x = DenseMatrix::gaussian(3, cfg.d_in, rng);
  LookupCache cache;
  (void)lookup_forward(x, proj, tables, cfg, &cache);
  const DenseMatrix zero(3, cfg.d_out);
  const LookupGrads grads = lookup_backward(zero, cache, proj, tables, cfg);
  for (double v : grads.grad_tables) CHECK(v == 0.0);
  for (double v : grads.grad_proj) CHECK(v == 0.0);
  for (double v : grads.grad_x.data) CHECK(v == 0.0);
}

TEST_CASE("backward matches finite differences") {
  GradCheckSpec spec;
  spec.target = GradCheckTarget::lookup;

  SUBCASE("top-1 softmax, boundary-excluded") {
    spec.tau = 4;
    const GradCheckReport r = grad_check(spec, 61, 1e-5);
    CAPTURE(r.worst_param);
    CAPTURE(r.max_rel_err);
    CHECK(r.passed);
  }
  SUBCASE("top-1 scaled, boundary-excluded") {
    spec.tau = 4;
    spec.variant = LookupVariant::scaled;
    const GradCheckReport r = grad_check(spec, 62, 1e-5);
    CAPTURE(r.worst_param);
    CAPTURE(r.max_rel_err);
    CHECK(r.passed);
  }
  SUBCASE("all neighbors, tau = 3, checked everywhere") {
    spec.tau = 3;
    spec.full_neighbors = true;
    const GradCheckReport r = grad_check(spec, 63, 1e-6);
    CAPTURE(r.worst_param);
    CAPTURE(r.max_rel_err);
    CHECK(r.passed);
    CHECK(r.excluded == 0);
  }
  SUBCASE("all neighbors, scaled variant") {
    spec.tau = 3;
    spec.full_neighbors = true;
    spec.variant = LookupVariant::scaled;
    const GradCheckReport r = grad_check(spec, 64, 1e-6);
    CAPTURE(r.worst_param);
    CAPTURE(r.max_rel_err);
    CHECK(r.passed);
    CHECK(r.excluded == 0);
  }
}

TEST_CASE("workload regularity: every row reads exactly h * nc table rows") {
  LookupConfig cfg;
  cfg.d_in = 16;
  cfg.d_out = 8;
  cfg.tables = 6;
  cfg.code_bits = 4;
  cfg.neighbor_count = 3;
  ProjectionSpec ps = ProjectionSpec::bh(cfg.d_in, cfg.code_width(), 2, 8);
  const auto reads = lookup_reads_per_row(cfg, ps, 32, 70);
  for (auto r : reads) CHECK(r == cfg.tables * cfg.neighbor_count);
}

TEST_CASE("forward and backward never write the tables") {
  LookupConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 4;
  cfg.tables = 2;
  cfg.code_bits = 3;
  ProjectionSpec ps = ProjectionSpec::bh(cfg.d_in, cfg.code_width(), 2, 4);
  Projection proj = Projection::init(ps, 80);
  HashTables tables = HashTables::init(cfg, 81);
  std::mt19937_64 rng(82);
  const DenseMatrix x = DenseMatrix::gaussian(5, cfg.d_in, rng);
  const std::uint64_t before = tables.checksum();
  LookupCache cache;
  const DenseMatrix y = lookup_forward(x, proj, tables, cfg, &cache);
  (void)lookup_backward(DenseMatrix(5, cfg.d_out), cache, proj, tables, cfg);
  CHECK(tables.checksum() == before);
  (void)y;
}

TEST_CASE("validation errors") {
  LookupConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 4;
  cfg.tables = 2;
  cfg.code_bits = 3;
  cfg.neighbor_count = 9;  // > 2^3
  CHECK_THROWS_AS(cfg.validate(), SizeError);
  cfg.neighbor_count = 1;
  cfg.code_bits = 0;
  CHECK_THROWS_AS(cfg.validate(), SizeError);
  cfg.code_bits = 3;

  ProjectionSpec ps = ProjectionSpec::dense(cfg.d_in, 5);  // wrong width
  Projection proj = Projection::init(ps, 1);
  HashTables tables = HashTables::init(cfg, 2);
  DenseMatrix x(2, cfg.d_in);
  CHECK_THROWS_AS(lookup_forward(x, proj, tables, cfg), SizeError);

  // backward without a forward cache
  LookupCache empty;
  empty.x = x;
  CHECK_THROWS_AS(lookup_backward(DenseMatrix(2, 4), empty, proj, tables, cfg), UsageError);
}

TEST_SUITE_END();
