#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "lookupffn/ffn.hpp"
#include "lookupffn/flops.hpp"
#include "lookupffn/lookup.hpp"
#include "lookupffn/optim.hpp"

namespace lffn {

enum class TrainTask : std::uint8_t {
  synthetic_regression = 0,
  teacher_distill = 1,
  toy_classification = 2
};

const char* train_task_name(TrainTask t);
TrainTask train_task_from_name(const std::string& name);

struct TrainConfig {
  TrainTask task = TrainTask::teacher_distill;
  std::size_t steps = 1000;
  std::size_t batch = 32;
  double lr = 1e-3;
  OptimKind optimizer = OptimKind::adam;
  double clip_norm = 1.0;  // global-norm gradient clip
  std::uint64_t seed = 0;
  std::size_t log_every = 50;

  void validate() const {
    if (steps < 1) throw SizeError("train config: steps must be >= 1");
    if (batch < 1) throw SizeError("train config: batch must be >= 1");
    if (!(lr > 0.0)) throw SizeError("train config: learning rate must be positive");
  }
};

struct LookupStudentSpec {
  LookupConfig cfg;
  ProjectionSpec proj;
};

struct DenseStudentSpec {
  std::size_t hidden = 256;
  Activation act = Activation::gelu;
  bool init_from_teacher = false;  // distillation sanity: start at the optimum
};

using StudentSpec = std::variant<LookupStudentSpec, DenseStudentSpec>;

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  double initial_loss = 0.0;  // loss at step 0, before any update
  double final_loss = 0.0;
  FlopReport student_flops;
  FlopReport teacher_flops;
  /// Write-instrumentation over the hash tables: true iff no mutation was
  /// observed outside optimizer steps.
  bool no_rehash_ok = true;
  std::size_t rehash_checks = 0;
};

/// Trains the student on Gaussian inputs to match the frozen teacher's
/// outputs (MSE). NaN loss raises TrainingError.
TrainResult teacher_distill(const FFNParams& teacher, const StudentSpec& student,
                            const TrainConfig& cfg);

/// Task front-end for the CLI: teacher-distill builds its own frozen teacher
/// of the given sizes; the other tasks build their own synthetic targets.
TrainResult train_toy(const StudentSpec& student, const TrainConfig& cfg, std::size_t d_in,
                      std::size_t d_out, std::size_t teacher_hidden = 256);

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

enum class GradCheckTarget : std::uint8_t {
  vanilla_ffn = 0,
  proj_bh = 1,
  proj_acdc = 2,
  proj_dense = 3,
  lookup = 4
};

struct GradCheckSpec {
  GradCheckTarget target = GradCheckTarget::lookup;
  std::size_t d = 16;
  std::size_t d_out = 16;
  std::size_t hidden = 16;  // vanilla t
  std::size_t tables = 8;
  std::size_t tau = 4;
  std::size_t batch = 4;
  std::size_t bh_stages = 2;
  std::size_t bh_block = 8;
  std::size_t acdc_depth = 2;
  bool full_neighbors = false;  // lookup: N(z) = all 2^tau codes
  LookupVariant variant = LookupVariant::softmax;
  Activation act = Activation::gelu;  // vanilla target
  double fd_step = 1e-5;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;      // sign-boundary crossings (top-1 lookup only)
  bool boundary_excluded = false;
  double threshold = 0.0;
  bool passed = false;
  std::string worst_param;

  void require() const {
    if (!passed)
      throw NumericError("gradient check failed: max rel err " + std::to_string(max_rel_err) +
                         " at " + worst_param + " exceeds " + std::to_string(threshold));
  }
};

/// Central finite differences against the analytic backward for every
/// parameter group and the input. Relative error uses
/// |a - f| / max(|a|, |f|, 1e-2). For top-1 lookup, parameters whose +/- step
/// forwards land on different hash codes are excluded (the straight-through
/// contract is only claimed away from sign boundaries).
GradCheckReport grad_check(const GradCheckSpec& spec, std::uint64_t seed, double threshold);

// ---------------------------------------------------------------------------
// tau trade-off sweep at matched h * tau
// ---------------------------------------------------------------------------

struct SweepCell {
  std::size_t tables = 0;
  std::size_t code_bits = 0;
  FlopReport flops;
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

struct SweepSpec {
  std::vector<std::pair<std::size_t, std::size_t>> grid = {{64, 4}, {32, 8}, {16, 16}};
  std::size_t d_in = 64;
  std::size_t d_out = 32;
  std::size_t teacher_hidden = 256;
  std::size_t bh_stages = 4;
  std::size_t bh_block = 16;
  TrainConfig train;
};

std::vector<SweepCell> tau_tradeoff_sweep(const SweepSpec& spec);

}  // namespace lffn
