#pragma once

#include <cstdint>
#include <vector>

#include "lookupffn/flops.hpp"
#include "lookupffn/matrix.hpp"
#include "lookupffn/projection.hpp"

namespace lffn {

/// One point of the capacity-vs-cost comparison: fit a projection to a fixed
/// random target matrix by plain gradient descent on the Frobenius error.
struct ApproxResult {
  double final_error = 0.0;  // mean squared entry error of R_theta - target
  double flops = 0.0;        // per-row application cost of the projection
  std::size_t params = 0;
  std::size_t steps_run = 0;
  double step_size = 0.0;    // the fixed step that produced the result
  std::vector<double> error_curve;  // sampled every `curve_stride` steps
};

/// Minimizes || R_theta - target ||_F^2 where R_theta is materialized by
/// pushing the D x D identity through the projection. Plain gradient descent
/// with a fixed step; step_size = 0 picks a per-kind default and halves it on
/// divergence (deterministically) up to a few restarts. An explicitly given
/// step that diverges raises TrainingError reporting the step size.
ApproxResult matrix_approx_experiment(const DenseMatrix& target, const ProjectionSpec& spec,
                                      std::size_t steps, double step_size, std::uint64_t seed,
                                      std::size_t curve_stride = 0);

}  // namespace lffn
