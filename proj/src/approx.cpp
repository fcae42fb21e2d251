#include "lookupffn/approx.hpp"

#include <cmath>

namespace lffn {

namespace {

double default_step(const ProjectionSpec& spec) {
  switch (spec.kind) {
    case ProjKind::dense: return 0.25;
    case ProjKind::bh: return 2e-4;
    case ProjKind::acdc: return 2e-4;
    case ProjKind::signflip: return 0.0;
  }
  return 0.0;
}

struct GdRun {
  bool diverged = false;
  double final_error = 0.0;
  std::size_t steps_run = 0;
  std::vector<double> curve;
};

GdRun run_gd(const DenseMatrix& target, const ProjectionSpec& spec, std::size_t steps,
             double step, std::uint64_t seed, std::size_t stride) {
  const std::size_t D = target.rows;
  Projection proj = Projection::init(spec, seed);
  const DenseMatrix identity = DenseMatrix::identity(D);
  std::vector<double> grad(proj.param_count());

  GdRun run;
  double initial_loss = -1.0;
  for (std::size_t s = 0; s < steps; ++s) {
    ProjectionCache cache;
    DenseMatrix r = proj.forward(identity, &cache);

    double loss = 0.0;
    DenseMatrix grad_out(D, D);
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double diff = r.data[i] - target.data[i];
      loss += diff * diff;
      grad_out.data[i] = 2.0 * diff;
    }
    if (initial_loss < 0.0) initial_loss = loss;
    if (!std::isfinite(loss) || loss > 100.0 * initial_loss + 1e3) {
      run.diverged = true;
      return run;
    }
    if (s % stride == 0) run.curve.push_back(loss / double(D * D));

    std::fill(grad.begin(), grad.end(), 0.0);
    (void)proj.backward(grad_out, identity, cache, grad);
    auto params = proj.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
    run.steps_run = s + 1;
  }

  DenseMatrix r = proj.forward(identity);
  double loss = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double diff = r.data[i] - target.data[i];
    loss += diff * diff;
  }
  if (!std::isfinite(loss)) {
    run.diverged = true;
    return run;
  }
  run.final_error = loss / double(D * D);
  run.curve.push_back(run.final_error);
  return run;
}

}  // namespace

ApproxResult matrix_approx_experiment(const DenseMatrix& target, const ProjectionSpec& spec,
                                      std::size_t steps, double step_size, std::uint64_t seed,
                                      std::size_t curve_stride) {
  if (target.rows != target.cols) throw SizeError("matrix approx: target must be square");
  spec.validate();
  if (spec.d_in != target.rows || spec.d_out != target.rows)
    throw SizeError("matrix approx: projection spec must be D x D");
  if (spec.kind == ProjKind::signflip)
    throw UsageError("matrix approx: signflip has no learnable parameters to fit");
  require_finite(target, "matrix approx target");
  if (steps == 0) throw SizeError("matrix approx: steps must be >= 1");
  const std::size_t stride = curve_stride == 0 ? std::max<std::size_t>(1, steps / 100) : curve_stride;

  const ProjCost cost = projection_cost(spec);
  const bool auto_step = step_size == 0.0;
  double step = auto_step ? default_step(spec) : step_size;

  for (int attempt = 0; attempt < 8; ++attempt) {
    GdRun run = run_gd(target, spec, steps, step, seed, stride);
    if (!run.diverged) {
      ApproxResult res;
      res.final_error = run.final_error;
      res.flops = cost.flops;
      res.params = cost.params;
      res.steps_run = run.steps_run;
      res.step_size = step;
      res.error_curve = std::move(run.curve);
      return res;
    }
    if (!auto_step)
      throw TrainingError("matrix approx diverged at fixed step size " + std::to_string(step));
    step *= 0.5;
  }
  throw TrainingError("matrix approx diverged even after step-size backoff, last step " +
                      std::to_string(step));
}

}  // namespace lffn
