#include <doctest.h>

#include <random>

#include "lookupffn/flops.hpp"
#include "lookupffn/projection.hpp"
#include "lookupffn/train.hpp"
#include "oracles.hpp"

using namespace lffn;

namespace {

Projection identity_blocks_bh(std::size_t D, std::size_t m) {
  ProjectionSpec spec = ProjectionSpec::bh(D, D, m, 0);
  Projection p = Projection::init(spec, 0);
  auto params = p.params();
  std::fill(params.begin(), params.end(), 0.0);
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t i = 0; i < D; ++i) params[s * D * D + i * D + i] = 1.0;
  return p;
}

/// Dense D x D matrix of one BH stage factor (block-diagonal expansion).
DenseMatrix expand_block_diag(std::span<const double> stage, std::size_t D, std::size_t b) {
  DenseMatrix m(D, D);
  for (std::size_t g = 0; g < D / b; ++g)
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < b; ++c) m.at(g * b + r, g * b + c) = stage[(g * b + r) * b + c];
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("projection");

TEST_CASE("bh with one identity stage reduces to a pure Hadamard") {
  Projection p = identity_blocks_bh(4, 1);
  DenseMatrix x(1, 4);
  x.at(0, 0) = 1.0;
  DenseMatrix y = p.forward(x);
  for (std::size_t j = 0; j < 4; ++j) CHECK(y.at(0, j) == 1.0);
}

TEST_CASE("bh forward matches the explicit dense stage product at D=1024") {
  const std::size_t D = 1024;
  const DenseMatrix h = oracles::dense_hadamard(D);
  std::mt19937_64 rng(42);

  for (std::size_t b : {std::size_t{64}, std::size_t{16}}) {
    CAPTURE(b);
    ProjectionSpec spec = ProjectionSpec::bh(D, D, 4, b);
    Projection p = Projection::init(spec, 5);

    // Oracle: R = (B1 H)(B2 H)(B3 H)(B4 H) via naive dense products.
    const std::size_t stage_size = (D / b) * b * b;
    DenseMatrix r_oracle;
    for (std::size_t s = 0; s < 4; ++s) {
      const DenseMatrix stage =
          expand_block_diag({p.params().data() + s * stage_size, stage_size}, D, b);
      r_oracle = s == 0 ? oracles::naive_matmul(stage, h)
                        : oracles::naive_matmul(oracles::naive_matmul(r_oracle, stage), h);
    }

    // Materialize R by pushing all basis vectors through the forward.
    const DenseMatrix r_fast =
        oracles::materialize_by_basis(D, [&](const DenseMatrix& m) { return p.forward(m); });
    CHECK(max_rel_diff(r_fast.data, r_oracle.data, 1.0) < 1e-10);

    // Random batch through both paths.
    const DenseMatrix x = DenseMatrix::gaussian(4, D, rng);
    const DenseMatrix y_fast = p.forward(x);
    const DenseMatrix y_oracle = oracles::naive_matmul(x, r_oracle);
    CHECK(max_rel_diff(y_fast.data, y_oracle.data, 1.0) < 1e-10);
  }
}

TEST_CASE("every structured forward equals its basis-materialized operator") {
  std::mt19937_64 rng(7);
  const std::vector<ProjectionSpec> specs = {
      ProjectionSpec::bh(64, 64, 2, 8),
      ProjectionSpec::bh(50, 120, 4, 16),  // non-power-of-two pad + truncate
      ProjectionSpec::acdc(64, 64, 3),
      ProjectionSpec::acdc(40, 100, 2),
      ProjectionSpec::signflip(64, 64),
      ProjectionSpec::dense(50, 70),
  };
  for (const auto& spec : specs) {
    CAPTURE(proj_kind_name(spec.kind));
    CAPTURE(spec.d_in);
    Projection p = Projection::init(spec, 99);
    const DenseMatrix r =
        oracles::materialize_by_basis(spec.d_in, [&](const DenseMatrix& m) { return p.forward(m); });
    const DenseMatrix x = DenseMatrix::gaussian(5, spec.d_in, rng);
    const DenseMatrix expected = oracles::naive_matmul(x, r);
    const DenseMatrix y = p.forward(x);
    CHECK(max_rel_diff(y.data, expected.data, 1.0) < 1e-10);
  }
}

TEST_CASE("acdc depth 1 with unit diagonals is H H = n I") {
  ProjectionSpec spec = ProjectionSpec::acdc(4, 4, 1);
  Projection p = Projection::init(spec, 0);
  auto params = p.params();
  std::fill(params.begin(), params.end(), 1.0);
  DenseMatrix x(1, 4);
  x.at(0, 0) = 1.0;
  DenseMatrix y = p.forward(x);
  CHECK(y.at(0, 0) == 4.0);
  for (std::size_t j = 1; j < 4; ++j) CHECK(y.at(0, j) == 0.0);
}

TEST_CASE("signflip with all-ones signs is three chained Hadamards") {
  ProjectionSpec spec = ProjectionSpec::signflip(8, 8);
  Projection p = Projection::init(spec, 3);
  std::fill(p.blob().begin(), p.blob().end(), 1.0);
  std::mt19937_64 rng(8);
  DenseMatrix x = DenseMatrix::gaussian(3, 8, rng);
  const DenseMatrix y = p.forward(x);
  // H H H v = n H v
  DenseMatrix expected = x;
  fwht_rows(expected);
  for (double& v : expected.data) v *= 8.0;
  CHECK(max_rel_diff(y.data, expected.data, 1.0) < 1e-12);
}

TEST_CASE("dense forward matches a hand-rolled triple loop") {
  std::mt19937_64 rng(4);
  ProjectionSpec spec = ProjectionSpec::dense(4, 3);
  Projection p = Projection::init(spec, 21);
  DenseMatrix x = DenseMatrix::gaussian(3, 4, rng);
  DenseMatrix w(4, 3);
  std::copy(p.params().begin(), p.params().end(), w.data.begin());
  const DenseMatrix expected = oracles::naive_matmul(x, w);
  const DenseMatrix y = p.forward(x);
  CHECK(max_rel_diff(y.data, expected.data, 1.0) < 1e-12);
}

TEST_CASE("zero upstream gradient produces zero gradients") {
  ProjectionSpec spec = ProjectionSpec::bh(16, 16, 2, 4);
  Projection p = Projection::init(spec, 1);
  std::mt19937_64 rng(2);
  DenseMatrix x = DenseMatrix::gaussian(3, 16, rng);
  ProjectionCache cache;
  (void)p.forward(x, &cache);
  std::vector<double> grad_params(p.param_count(), 0.0);
  DenseMatrix zero(3, 16);
  DenseMatrix grad_x = p.backward(zero, x, cache, grad_params);
  for (double v : grad_params) CHECK(v == 0.0);
  for (double v : grad_x.data) CHECK(v == 0.0);
}

TEST_CASE("bh backward with identity blocks is the transposed Hadamard") {
  // d_in = d_out = 3 inside D = 4 exercises pad/truncate as well.
  ProjectionSpec spec = ProjectionSpec::bh(3, 3, 1, 0);
  Projection q = Projection::init(spec, 0);
  std::fill(q.params().begin(), q.params().end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) q.params()[i * 4 + i] = 1.0;

  std::mt19937_64 rng(5);
  DenseMatrix x = DenseMatrix::gaussian(2, 3, rng);
  ProjectionCache cache;
  (void)q.forward(x, &cache);
  DenseMatrix g = DenseMatrix::gaussian(2, 3, rng);
  std::vector<double> grad_params(q.param_count(), 0.0);
  const DenseMatrix grad_x = q.backward(g, x, cache, grad_params);

  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> padded(4, 0.0);
    std::copy(g.row(i), g.row(i) + 3, padded.begin());
    fwht_inplace(padded);
    for (std::size_t j = 0; j < 3; ++j) CHECK(grad_x.at(i, j) == doctest::Approx(padded[j]));
  }
}

TEST_CASE("backward matches central finite differences") {
  GradCheckSpec spec;
  spec.d = 16;
  spec.d_out = 16;

  SUBCASE("bh m=4 b=4") {
    spec.target = GradCheckTarget::proj_bh;
    spec.bh_stages = 4;
    spec.bh_block = 4;
  }
  SUBCASE("bh m=1 full block") {
    spec.target = GradCheckTarget::proj_bh;
    spec.bh_stages = 1;
    spec.bh_block = 0;
  }
  SUBCASE("acdc depth 2") { spec.target = GradCheckTarget::proj_acdc; spec.acdc_depth = 2; }
  SUBCASE("dense") { spec.target = GradCheckTarget::proj_dense; }

  const GradCheckReport report = grad_check(spec, 31, 1e-6);
  CAPTURE(report.worst_param);
  CAPTURE(report.max_rel_err);
  CHECK(report.passed);
  CHECK(report.excluded == 0);
}

TEST_CASE("signflip input gradient matches finite differences") {
  ProjectionSpec spec = ProjectionSpec::signflip(12, 20);
  Projection p = Projection::init(spec, 77);
  std::mt19937_64 rng(78);
  DenseMatrix x = DenseMatrix::gaussian(2, 12, rng);
  DenseMatrix probe = DenseMatrix::gaussian(2, 20, rng);

  ProjectionCache cache;
  (void)p.forward(x, &cache);
  std::vector<double> none;
  const DenseMatrix grad_x = p.backward(probe, x, cache, none);

  auto loss = [&] {
    const DenseMatrix y = p.forward(x);
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l += y.data[i] * probe.data[i];
    return l;
  };
  const double eps = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data[i];
    x.data[i] = saved + eps;
    const double lp = loss();
    x.data[i] = saved - eps;
    const double lm = loss();
    x.data[i] = saved;
    const double fd = (lp - lm) / (2 * eps);
    CHECK(std::abs(fd - grad_x.data[i]) / std::max({std::abs(fd), std::abs(grad_x.data[i]), 1e-2}) <
          1e-6);
  }
}

TEST_CASE("initialization is deterministic in the seed") {
  ProjectionSpec spec = ProjectionSpec::bh(32, 32, 4, 8);
  Projection a = Projection::init(spec, 123);
  Projection b = Projection::init(spec, 123);
  Projection c = Projection::init(spec, 124);
  CHECK(a.blob() == b.blob());
  CHECK(a.blob() != c.blob());
}

TEST_CASE("bh init keeps output variance near one at D=1024") {
  ProjectionSpec spec = ProjectionSpec::bh(1024, 1024, 4, 64);
  Projection p = Projection::init(spec, 9);
  std::mt19937_64 rng(10);
  const DenseMatrix x = DenseMatrix::gaussian(1024, 1024, rng);
  const DenseMatrix y = p.forward(x);
  double sq = 0.0;
  for (double v : y.data) sq += v * v;
  const double std_out = std::sqrt(sq / double(y.size()));
  CHECK(std_out > 0.5);
  CHECK(std_out < 2.0);
}

TEST_CASE("acdc and signflip init keep output variance near one") {
  std::mt19937_64 rng(11);
  for (const auto& spec :
       {ProjectionSpec::acdc(256, 256, 4), ProjectionSpec::signflip(256, 256)}) {
    Projection p = Projection::init(spec, 12);
    const DenseMatrix x = DenseMatrix::gaussian(256, 256, rng);
    const DenseMatrix y = p.forward(x);
    double sq = 0.0;
    for (double v : y.data) sq += v * v;
    double scale = 1.0;
    if (spec.kind == ProjKind::signflip) scale = std::pow(256.0, 1.5);  // 3 unnormalized H
    const double std_out = std::sqrt(sq / double(y.size())) / scale;
    CHECK(std_out > 0.5);
    CHECK(std_out < 2.0);
  }
}

TEST_CASE("shape mismatches are size errors") {
  ProjectionSpec spec = ProjectionSpec::bh(16, 16, 2, 4);
  Projection p = Projection::init(spec, 1);
  DenseMatrix x(2, 15);
  CHECK_THROWS_AS(p.forward(x), SizeError);
  CHECK_THROWS_AS(ProjectionSpec::bh(16, 16, 2, 5).validate(), SizeError);
  CHECK_THROWS_AS(Projection::init(ProjectionSpec::bh(16, 16, 0, 4), 1), SizeError);
}

TEST_SUITE_END();
