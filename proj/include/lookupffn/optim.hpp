#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lookupffn/common.hpp"

namespace lffn {

enum class OptimKind : std::uint8_t { sgd = 0, adam = 1 };

const char* optim_kind_name(OptimKind k);
OptimKind optim_kind_from_name(const std::string& name);

/// First-order optimizer over one flat parameter group. Adam keeps per-group
/// moment buffers; running one instance per group with a shared step count is
/// equivalent to one instance over the concatenation.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimKind kind, std::size_t param_count, double lr)
      : kind_(kind), lr_(lr) {
    if (kind == OptimKind::adam) {
      m_.assign(param_count, 0.0);
      v_.assign(param_count, 0.0);
    }
  }

  void apply(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw SizeError("optimizer: param/grad length mismatch");
    if (kind_ == OptimKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
      return;
    }
    if (m_.size() != params.size()) throw SizeError("optimizer: state length mismatch");
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, double(step_));
    const double bc2 = 1.0 - std::pow(beta2_, double(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
      params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
  }

  OptimKind kind() const { return kind_; }

 private:
  OptimKind kind_ = OptimKind::sgd;
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t step_ = 0;
  std::vector<double> m_, v_;
};

/// Scales every buffer in place so the global l2 norm is at most max_norm;
/// returns the pre-clip norm.
inline double clip_global_norm(std::span<std::span<double>> grad_groups, double max_norm) {
  double sq = 0.0;
  for (auto g : grad_groups)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto g : grad_groups)
      for (double& v : g) v *= scale;
  }
  return norm;
}

inline const char* optim_kind_name(OptimKind k) {
  return k == OptimKind::sgd ? "sgd" : "adam";
}

inline OptimKind optim_kind_from_name(const std::string& name) {
  if (name == "sgd") return OptimKind::sgd;
  if (name == "adam") return OptimKind::adam;
  throw UsageError("unknown optimizer: " + name);
}

}  // namespace lffn
