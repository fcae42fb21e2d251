#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lookupffn/matrix.hpp"

namespace lffn {

enum class Activation : std::uint8_t { gelu = 0, sigmoid = 1, softmax_units = 2 };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// The GEMM feed-forward baseline y = sigma(x W^T) V.
struct FFNParams {
  std::size_t d_in = 0;
  std::size_t hidden = 0;  // t
  std::size_t d_out = 0;
  Activation act = Activation::gelu;
  std::vector<double> w;  // t x d_in
  std::vector<double> v;  // t x d_out

  static FFNParams init(std::size_t d_in, std::size_t hidden, std::size_t d_out, Activation act,
                        std::uint64_t seed);
};

struct FFNCache {
  DenseMatrix x;
  DenseMatrix scores;     // x W^T, n x t
  DenseMatrix activated;  // sigma(scores)
};

DenseMatrix ffn_forward(const DenseMatrix& x, const FFNParams& p, FFNCache* cache = nullptr);

struct FFNGrads {
  DenseMatrix grad_x;
  std::vector<double> grad_w;
  std::vector<double> grad_v;
};

FFNGrads ffn_backward(const DenseMatrix& grad_y, const FFNCache& cache, const FFNParams& p);

namespace detail {
DenseMatrix ffn_forward_counted(const DenseMatrix& x, const FFNParams& p,
                                FFNCache* cache = nullptr);
}

}  // namespace lffn
