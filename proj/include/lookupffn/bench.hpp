#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lookupffn/ffn.hpp"
#include "lookupffn/flops.hpp"
#include "lookupffn/lookup.hpp"

namespace lffn {

/// Forward-only latency microbenchmark. Parameters and all workspace are
/// allocated and converted to float32 before the timed region; each
/// repetition runs the full effective batch once.
struct BenchSpec {
  std::size_t rows = 1024;  // effective batch
  std::size_t reps = 5;
  std::size_t warmup = 2;
  int threads = 1;  // 0 = library default
  /// Lookup gather strategy: basic walks rows in order; sorted groups the
  /// gathers of a batch tile by table row index for cache locality.
  bool sorted_gather = false;

  void validate() const {
    if (reps < 3) throw SizeError("bench: repetitions must be >= 3");
    if (warmup < 1) throw SizeError("bench: warmup must be >= 1");
  }
};

struct BenchResult {
  std::string label;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double stddev_ms = 0.0;
  // Stage split (lookup only; zero for dense).
  double hash_ms = 0.0;
  double gather_ms = 0.0;
  double other_ms = 0.0;
  double mflop_per_token = 0.0;
  double gflops = 0.0;  // analytic flops / measured median
  std::size_t rows = 0;
  /// Tracked buffer allocations observed inside the timed region; stays 0
  /// because everything is pre-allocated.
  std::uint64_t timed_allocs = 0;
};

BenchResult bench_dense_ffn(const BenchSpec& spec, std::size_t d_in, std::size_t hidden,
                            std::size_t d_out, Activation act, std::uint64_t seed);

BenchResult bench_lookup_ffn(const BenchSpec& spec, const LookupConfig& cfg,
                             const ProjectionSpec& proj, std::uint64_t seed);

inline double speedup(const BenchResult& baseline, const BenchResult& candidate) {
  return baseline.median_ms / candidate.median_ms;
}

}  // namespace lffn
