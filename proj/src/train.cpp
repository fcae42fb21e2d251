#include "lookupffn/train.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>

namespace lffn {

const char* train_task_name(TrainTask t) {
  switch (t) {
    case TrainTask::synthetic_regression: return "synthetic-regression";
    case TrainTask::teacher_distill: return "teacher-distill";
    case TrainTask::toy_classification: return "toy-classification";
  }
  return "?";
}

TrainTask train_task_from_name(const std::string& name) {
  if (name == "synthetic-regression") return TrainTask::synthetic_regression;
  if (name == "teacher-distill") return TrainTask::teacher_distill;
  if (name == "toy-classification") return TrainTask::toy_classification;
  throw UsageError("unknown training task: " + name);
}

namespace {

// ---------------------------------------------------------------------------
// Student wrapper: either a lookup layer or a dense FFN, presented as flat
// parameter groups for the optimizer.
// ---------------------------------------------------------------------------

struct Student {
  bool is_lookup = false;
  // lookup
  LookupConfig lcfg;
  Projection proj;
  HashTables tables;
  // dense
  FFNParams ffn;

  static Student build(const StudentSpec& spec, std::size_t d_in, std::size_t d_out,
                       std::uint64_t seed, const FFNParams* teacher) {
    Student s;
    if (std::holds_alternative<LookupStudentSpec>(spec)) {
      const auto& ls = std::get<LookupStudentSpec>(spec);
      s.is_lookup = true;
      s.lcfg = ls.cfg;
      s.lcfg.d_in = d_in;
      s.lcfg.d_out = d_out;
      s.lcfg.validate();
      ProjectionSpec ps = ls.proj;
      ps.d_in = d_in;
      ps.d_out = s.lcfg.code_width();
      s.proj = Projection::init(ps, seed);
      s.tables = HashTables::init(s.lcfg, seed + 1);
    } else {
      const auto& ds = std::get<DenseStudentSpec>(spec);
      if (ds.init_from_teacher) {
        if (!teacher) throw UsageError("dense student: init_from_teacher requires a teacher");
        s.ffn = *teacher;
      } else {
        s.ffn = FFNParams::init(d_in, ds.hidden, d_out, ds.act, seed);
      }
    }
    return s;
  }

  FlopReport flops() const {
    if (is_lookup) return lookup_flops(lcfg, proj.spec());
    return vanilla_flops(ffn.d_in, ffn.hidden, ffn.d_out);
  }
};

double mse_loss_and_grad(const DenseMatrix& y, const DenseMatrix& target, DenseMatrix& grad_y) {
  const double scale = 1.0 / double(y.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double diff = y.data[i] - target.data[i];
    loss += diff * diff;
    grad_y.data[i] = 2.0 * diff * scale;
  }
  return loss * scale;
}

double ce_loss_and_grad(const DenseMatrix& logits, const std::vector<std::size_t>& labels,
                        DenseMatrix& grad_y) {
  const std::size_t n = logits.rows, k = logits.cols;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = logits.row(i);
    double* gi = grad_y.row(i);
    double mx = li[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, li[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(li[j] - mx);
    const double logsum = mx + std::log(sum);
    loss -= (li[labels[i]] - logsum);
    for (std::size_t j = 0; j < k; ++j)
      gi[j] = (std::exp(li[j] - logsum) - (j == labels[i] ? 1.0 : 0.0)) / double(n);
  }
  return loss / double(n);
}

struct TaskData {
  const FFNParams* teacher = nullptr;     // teacher-distill
  DenseMatrix regression_map;             // synthetic-regression
  DenseMatrix prototypes;                 // toy-classification (d_out x d_in)
};

/// Fills target (or labels) for a batch.
void make_targets(TrainTask task, const TaskData& data, const DenseMatrix& x, DenseMatrix& target,
                  std::vector<std::size_t>& labels) {
  switch (task) {
    case TrainTask::teacher_distill:
      target = ffn_forward(x, *data.teacher);
      break;
    case TrainTask::synthetic_regression: {
      target = DenseMatrix(x.rows, data.regression_map.cols);
      for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t c = 0; c < x.cols; ++c) {
          const double v = x.at(i, c);
          for (std::size_t j = 0; j < target.cols; ++j)
            target.at(i, j) += v * data.regression_map.at(c, j);
        }
      break;
    }
    case TrainTask::toy_classification: {
      labels.assign(x.rows, 0);
      for (std::size_t i = 0; i < x.rows; ++i) {
        double best = -1e300;
        for (std::size_t c = 0; c < data.prototypes.rows; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < x.cols; ++j) acc += x.at(i, j) * data.prototypes.at(c, j);
          if (acc > best) {
            best = acc;
            labels[i] = c;
          }
        }
      }
      break;
    }
  }
}

TrainResult train_loop(Student student, TrainTask task, const TaskData& data,
                       const TrainConfig& cfg, std::size_t d_in) {
  cfg.validate();
  auto rng = make_rng(cfg.seed);
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
        .count();
  };

  // Fixed evaluation batch: initial/final losses come from here so the smoke
  // gates do not ride on single-batch noise.
  auto eval_rng = make_rng(cfg.seed + 0x9e3779b97f4a7c15ull);
  const DenseMatrix eval_x = DenseMatrix::gaussian(128, d_in, eval_rng);
  DenseMatrix eval_target;
  std::vector<std::size_t> eval_labels;
  make_targets(task, data, eval_x, eval_target, eval_labels);

  auto eval_loss = [&](Student& s) {
    DenseMatrix y = s.is_lookup ? lookup_forward(eval_x, s.proj, s.tables, s.lcfg)
                                : ffn_forward(eval_x, s.ffn);
    DenseMatrix gy(y.rows, y.cols);
    return task == TrainTask::toy_classification ? ce_loss_and_grad(y, eval_labels, gy)
                                                 : mse_loss_and_grad(y, eval_target, gy);
  };

  TrainResult result;
  result.student_flops = student.flops();
  if (task == TrainTask::teacher_distill)
    result.teacher_flops =
        vanilla_flops(data.teacher->d_in, data.teacher->hidden, data.teacher->d_out);
  result.initial_loss = eval_loss(student);

  Optimizer opt_a, opt_b;
  if (student.is_lookup) {
    opt_a = Optimizer(cfg.optimizer, student.proj.param_count(), cfg.lr);
    opt_b = Optimizer(cfg.optimizer, student.tables.size(), cfg.lr);
  } else {
    opt_a = Optimizer(cfg.optimizer, student.ffn.w.size(), cfg.lr);
    opt_b = Optimizer(cfg.optimizer, student.ffn.v.size(), cfg.lr);
  }

  const std::size_t check_interval = std::max<std::size_t>(1, cfg.steps / 50);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const DenseMatrix x = DenseMatrix::gaussian(cfg.batch, d_in, rng);
    DenseMatrix target;
    std::vector<std::size_t> labels;
    make_targets(task, data, x, target, labels);

    const bool instrument = student.is_lookup && (step % check_interval == 0);
    std::uint64_t checksum_before = 0;
    if (instrument) checksum_before = student.tables.checksum();

    double loss = 0.0;
    if (student.is_lookup) {
      LookupCache cache;
      DenseMatrix y = lookup_forward(x, student.proj, student.tables, student.lcfg, &cache);
      DenseMatrix gy(y.rows, y.cols);
      loss = task == TrainTask::toy_classification ? ce_loss_and_grad(y, labels, gy)
                                                   : mse_loss_and_grad(y, target, gy);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged (non-finite loss) at step " + std::to_string(step));
      LookupGrads grads = lookup_backward(gy, cache, student.proj, student.tables, student.lcfg);

      if (instrument) {
        ++result.rehash_checks;
        if (student.tables.checksum() != checksum_before) result.no_rehash_ok = false;
      }

      std::array<std::span<double>, 2> groups = {std::span<double>(grads.grad_proj),
                                                 std::span<double>(grads.grad_tables)};
      clip_global_norm(groups, cfg.clip_norm);
      opt_a.apply(student.proj.params(), grads.grad_proj);
      opt_b.apply({student.tables.data.data(), student.tables.data.size()}, grads.grad_tables);
    } else {
      FFNCache cache;
      DenseMatrix y = ffn_forward(x, student.ffn, &cache);
      DenseMatrix gy(y.rows, y.cols);
      loss = task == TrainTask::toy_classification ? ce_loss_and_grad(y, labels, gy)
                                                   : mse_loss_and_grad(y, target, gy);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged (non-finite loss) at step " + std::to_string(step));
      FFNGrads grads = ffn_backward(gy, cache, student.ffn);
      std::array<std::span<double>, 2> groups = {std::span<double>(grads.grad_w),
                                                 std::span<double>(grads.grad_v)};
      clip_global_norm(groups, cfg.clip_norm);
      opt_a.apply({student.ffn.w.data(), student.ffn.w.size()}, grads.grad_w);
      opt_b.apply({student.ffn.v.data(), student.ffn.v.size()}, grads.grad_v);
    }

    if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
      result.curve.push_back({step, loss, elapsed_ms()});
  }

  result.final_loss = eval_loss(student);
  return result;
}

}  // namespace

TrainResult teacher_distill(const FFNParams& teacher, const StudentSpec& student,
                            const TrainConfig& cfg) {
  TaskData data;
  data.teacher = &teacher;
  Student s = Student::build(student, teacher.d_in, teacher.d_out, cfg.seed + 17, &teacher);
  return train_loop(std::move(s), TrainTask::teacher_distill, data, cfg, teacher.d_in);
}

TrainResult train_toy(const StudentSpec& student, const TrainConfig& cfg, std::size_t d_in,
                      std::size_t d_out, std::size_t teacher_hidden) {
  TaskData data;
  auto rng = make_rng(cfg.seed + 101);
  FFNParams teacher;
  switch (cfg.task) {
    case TrainTask::teacher_distill:
      teacher = FFNParams::init(d_in, teacher_hidden, d_out, Activation::gelu, cfg.seed + 7);
      data.teacher = &teacher;
      break;
    case TrainTask::synthetic_regression:
      data.regression_map = DenseMatrix::gaussian(d_in, d_out, rng, 1.0 / std::sqrt(double(d_in)));
      break;
    case TrainTask::toy_classification:
      data.prototypes = DenseMatrix::gaussian(d_out, d_in, rng);
      break;
  }
  Student s = Student::build(student, d_in, d_out, cfg.seed + 17, data.teacher);
  return train_loop(std::move(s), cfg.task, data, cfg, d_in);
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

namespace {

struct GradGroup {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
  const double* analytic = nullptr;
};

double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-2});
}

}  // namespace

GradCheckReport grad_check(const GradCheckSpec& spec, std::uint64_t seed, double threshold) {
  auto rng = make_rng(seed);
  const double eps = spec.fd_step;

  GradCheckReport report;
  report.threshold = threshold;

  DenseMatrix x = DenseMatrix::gaussian(spec.batch, spec.d, rng);

  // Loss functional: L = sum(y * probe) with a fixed random probe, so
  // grad_y = probe and finite differences are clean.
  auto finish = [&](std::vector<GradGroup>& groups, auto&& eval_loss,
                    auto&& eval_codes_or_null) {
    for (auto& g : groups) {
      for (std::size_t i = 0; i < g.size; ++i) {
        const double saved = g.data[i];
        g.data[i] = saved + eps;
        const double lp = eval_loss();
        const std::vector<std::uint32_t> codes_p = eval_codes_or_null();
        g.data[i] = saved - eps;
        const double lm = eval_loss();
        const std::vector<std::uint32_t> codes_m = eval_codes_or_null();
        g.data[i] = saved;
        if (!codes_p.empty() && codes_p != codes_m) {
          ++report.excluded;
          report.boundary_excluded = true;
          continue;
        }
        const double fd = (lp - lm) / (2.0 * eps);
        const double err = rel_err(g.analytic[i], fd);
        ++report.checked;
        if (err > report.max_rel_err) {
          report.max_rel_err = err;
          report.worst_param = g.name + "[" + std::to_string(i) + "]";
        }
      }
    }
    report.passed = report.max_rel_err <= threshold;
  };

  auto no_codes = [] { return std::vector<std::uint32_t>{}; };

  switch (spec.target) {
    case GradCheckTarget::vanilla_ffn: {
      FFNParams p = FFNParams::init(spec.d, spec.hidden, spec.d_out, spec.act, seed + 1);
      DenseMatrix probe = DenseMatrix::gaussian(spec.batch, spec.d_out, rng);
      FFNCache cache;
      (void)ffn_forward(x, p, &cache);
      FFNGrads grads = ffn_backward(probe, cache, p);
      std::vector<GradGroup> groups = {
          {"w", p.w.data(), p.w.size(), grads.grad_w.data()},
          {"v", p.v.data(), p.v.size(), grads.grad_v.data()},
          {"x", x.data.data(), x.data.size(), grads.grad_x.data.data()},
      };
      auto eval = [&] {
        DenseMatrix y = ffn_forward(x, p);
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) l += y.data[i] * probe.data[i];
        return l;
      };
      finish(groups, eval, no_codes);
      break;
    }
    case GradCheckTarget::proj_bh:
    case GradCheckTarget::proj_acdc:
    case GradCheckTarget::proj_dense: {
      ProjectionSpec ps;
      if (spec.target == GradCheckTarget::proj_bh)
        ps = ProjectionSpec::bh(spec.d, spec.d_out, spec.bh_stages, spec.bh_block);
      else if (spec.target == GradCheckTarget::proj_acdc)
        ps = ProjectionSpec::acdc(spec.d, spec.d_out, spec.acdc_depth);
      else
        ps = ProjectionSpec::dense(spec.d, spec.d_out);
      Projection proj = Projection::init(ps, seed + 1);
      DenseMatrix probe = DenseMatrix::gaussian(spec.batch, spec.d_out, rng);
      ProjectionCache cache;
      (void)proj.forward(x, &cache);
      std::vector<double> grad_params(proj.param_count(), 0.0);
      DenseMatrix grad_x = proj.backward(probe, x, cache, grad_params);
      std::vector<GradGroup> groups = {
          {"proj", proj.params().data(), proj.param_count(), grad_params.data()},
          {"x", x.data.data(), x.data.size(), grad_x.data.data()},
      };
      auto eval = [&] {
        DenseMatrix y = proj.forward(x);
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) l += y.data[i] * probe.data[i];
        return l;
      };
      finish(groups, eval, no_codes);
      break;
    }
    case GradCheckTarget::lookup: {
      LookupConfig cfg;
      cfg.d_in = spec.d;
      cfg.d_out = spec.d_out;
      cfg.tables = spec.tables;
      cfg.code_bits = spec.tau;
      cfg.variant = spec.variant;
      cfg.neighbor_count = spec.full_neighbors ? cfg.table_rows() : 1;
      cfg.validate();
      ProjectionSpec ps =
          ProjectionSpec::bh(spec.d, cfg.code_width(), spec.bh_stages, spec.bh_block);
      Projection proj = Projection::init(ps, seed + 1);
      HashTables tables = HashTables::init(cfg, seed + 2);
      DenseMatrix probe = DenseMatrix::gaussian(spec.batch, spec.d_out, rng);

      LookupCache cache;
      (void)lookup_forward(x, proj, tables, cfg, &cache);
      LookupGrads grads = lookup_backward(probe, cache, proj, tables, cfg);
      std::vector<GradGroup> groups = {
          {"proj", proj.params().data(), proj.param_count(), grads.grad_proj.data()},
          {"tables", tables.data.data(), tables.size(), grads.grad_tables.data()},
          {"x", x.data.data(), x.data.size(), grads.grad_x.data.data()},
      };
      auto eval = [&] {
        DenseMatrix y = lookup_forward(x, proj, tables, cfg);
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) l += y.data[i] * probe.data[i];
        return l;
      };
      if (spec.full_neighbors) {
        finish(groups, eval, no_codes);
      } else {
        // Straight-through contract: only claim gradients away from sign
        // boundaries, detected as a code change across the +/- perturbation.
        auto eval_codes = [&] {
          LookupCache c;
          (void)lookup_forward(x, proj, tables, cfg, &c);
          return c.sign.codes;
        };
        finish(groups, eval, eval_codes);
      }
      break;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// tau trade-off sweep
// ---------------------------------------------------------------------------

std::vector<SweepCell> tau_tradeoff_sweep(const SweepSpec& spec) {
  if (spec.grid.empty()) throw SizeError("sweep: empty grid");
  const FFNParams teacher = FFNParams::init(spec.d_in, spec.teacher_hidden, spec.d_out,
                                            Activation::gelu, spec.train.seed + 7);
  std::vector<SweepCell> cells;
  for (const auto& [h, tau] : spec.grid) {
    LookupStudentSpec student;
    student.cfg.d_in = spec.d_in;
    student.cfg.d_out = spec.d_out;
    student.cfg.tables = h;
    student.cfg.code_bits = tau;
    student.cfg.neighbor_count = 1;
    student.proj =
        ProjectionSpec::bh(spec.d_in, student.cfg.code_width(), spec.bh_stages, spec.bh_block);
    TrainResult r = teacher_distill(teacher, student, spec.train);
    SweepCell cell;
    cell.tables = h;
    cell.code_bits = tau;
    cell.flops = r.student_flops;
    cell.initial_mse = r.initial_loss;
    cell.final_mse = r.final_loss;
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace lffn
