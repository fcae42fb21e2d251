#include "lookupffn/ffn.hpp"

#include <cmath>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace lffn {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::gelu: return "gelu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax_units: return "softmax";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softmax") return Activation::softmax_units;
  throw UsageError("unknown activation: " + name);
}

FFNParams FFNParams::init(std::size_t d_in, std::size_t hidden, std::size_t d_out, Activation act,
                          std::uint64_t seed) {
  if (d_in == 0 || hidden == 0 || d_out == 0) throw SizeError("ffn init: sizes must be positive");
  FFNParams p;
  p.d_in = d_in;
  p.hidden = hidden;
  p.d_out = d_out;
  p.act = act;
  p.w.resize(hidden * d_in);
  p.v.resize(hidden * d_out);
  auto rng = make_rng(seed);
  fill_gaussian(p.w, rng, 1.0 / std::sqrt(double(d_in)));
  fill_gaussian(p.v, rng, 1.0 / std::sqrt(double(hidden)));
  return p;
}

namespace {

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0))); }

double gelu_grad(double u) {
  const double phi = std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
  const double Phi = 0.5 * (1.0 + std::erf(u / std::sqrt(2.0)));
  return Phi + u * phi;
}

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

template <bool Count>
DenseMatrix forward_impl(const DenseMatrix& x, const FFNParams& p, FFNCache* cache) {
  if (x.cols != p.d_in) throw SizeError("ffn forward: input width mismatch");
  require_finite(x, "ffn forward input");

  const std::size_t n = x.rows;
  DenseMatrix scores(n, p.hidden);
#pragma omp parallel for if (n > 8 && !Count)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const double* xi = x.row(i);
    double* si = scores.row(i);
    for (std::size_t u = 0; u < p.hidden; ++u) {
      const double* wu = p.w.data() + u * p.d_in;
      double acc = 0.0;
      for (std::size_t k = 0; k < p.d_in; ++k) {
        acc += xi[k] * wu[k];
        if constexpr (Count) flop_counter().other += 2;
      }
      si[u] = acc;
    }
  }

  DenseMatrix activated(n, p.hidden);
  for (std::size_t i = 0; i < n; ++i) {
    const double* si = scores.row(i);
    double* ai = activated.row(i);
    switch (p.act) {
      case Activation::gelu:
        for (std::size_t u = 0; u < p.hidden; ++u) ai[u] = gelu(si[u]);
        break;
      case Activation::sigmoid:
        for (std::size_t u = 0; u < p.hidden; ++u) ai[u] = sigmoid(si[u]);
        break;
      case Activation::softmax_units: {
        double mx = si[0];
        for (std::size_t u = 1; u < p.hidden; ++u) mx = std::max(mx, si[u]);
        double sum = 0.0;
        for (std::size_t u = 0; u < p.hidden; ++u) {
          ai[u] = std::exp(si[u] - mx);
          sum += ai[u];
        }
        for (std::size_t u = 0; u < p.hidden; ++u) ai[u] /= sum;
        break;
      }
    }
  }

  DenseMatrix y(n, p.d_out);
#pragma omp parallel for if (n > 8 && !Count)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const double* ai = activated.row(i);
    double* yi = y.row(i);
    for (std::size_t u = 0; u < p.hidden; ++u) {
      const double a = ai[u];
      const double* vu = p.v.data() + u * p.d_out;
      for (std::size_t j = 0; j < p.d_out; ++j) {
        yi[j] += a * vu[j];
        if constexpr (Count) flop_counter().other += 2;
      }
    }
  }

  if (cache) {
    cache->x = x;
    cache->scores = std::move(scores);
    cache->activated = std::move(activated);
  }
  require_finite(y, "ffn forward output");
  return y;
}

}  // namespace

DenseMatrix ffn_forward(const DenseMatrix& x, const FFNParams& p, FFNCache* cache) {
  return forward_impl<false>(x, p, cache);
}

namespace detail {
DenseMatrix ffn_forward_counted(const DenseMatrix& x, const FFNParams& p, FFNCache* cache) {
  return forward_impl<true>(x, p, cache);
}
}  // namespace detail

FFNGrads ffn_backward(const DenseMatrix& grad_y, const FFNCache& cache, const FFNParams& p) {
  const std::size_t n = cache.x.rows;
  if (grad_y.rows != n || grad_y.cols != p.d_out)
    throw SizeError("ffn backward: grad_y shape mismatch");
  require_finite(grad_y, "ffn backward input");

  FFNGrads g;
  g.grad_x = DenseMatrix(n, p.d_in);
  g.grad_w.assign(p.w.size(), 0.0);
  g.grad_v.assign(p.v.size(), 0.0);

  std::vector<double> ga(p.hidden), gs(p.hidden);
  for (std::size_t i = 0; i < n; ++i) {
    const double* gy = grad_y.row(i);
    const double* ai = cache.activated.row(i);
    const double* si = cache.scores.row(i);
    const double* xi = cache.x.row(i);

    // grad wrt activated units and V
    for (std::size_t u = 0; u < p.hidden; ++u) {
      const double* vu = p.v.data() + u * p.d_out;
      double* gvu = g.grad_v.data() + u * p.d_out;
      double acc = 0.0;
      for (std::size_t j = 0; j < p.d_out; ++j) {
        acc += gy[j] * vu[j];
        gvu[j] += ai[u] * gy[j];
      }
      ga[u] = acc;
    }

    // through the activation
    switch (p.act) {
      case Activation::gelu:
        for (std::size_t u = 0; u < p.hidden; ++u) gs[u] = ga[u] * gelu_grad(si[u]);
        break;
      case Activation::sigmoid:
        for (std::size_t u = 0; u < p.hidden; ++u) gs[u] = ga[u] * ai[u] * (1.0 - ai[u]);
        break;
      case Activation::softmax_units: {
        double inner = 0.0;
        for (std::size_t u = 0; u < p.hidden; ++u) inner += ga[u] * ai[u];
        for (std::size_t u = 0; u < p.hidden; ++u) gs[u] = ai[u] * (ga[u] - inner);
        break;
      }
    }

    // grad wrt W and x
    double* gxi = g.grad_x.row(i);
    for (std::size_t u = 0; u < p.hidden; ++u) {
      const double gsu = gs[u];
      const double* wu = p.w.data() + u * p.d_in;
      double* gwu = g.grad_w.data() + u * p.d_in;
      for (std::size_t k = 0; k < p.d_in; ++k) {
        gwu[k] += gsu * xi[k];
        gxi[k] += gsu * wu[k];
      }
    }
  }
  require_finite(g.grad_x, "ffn backward output");
  return g;
}

}  // namespace lffn
