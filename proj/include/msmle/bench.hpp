#ifndef MSMLE_BENCH_HPP
#define MSMLE_BENCH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "msmle/em.hpp"
#include "msmle/inference.hpp"
#include "msmle/simulate.hpp"

namespace msmle {

struct BenchRow {
  std::string parameter;
  double truth = 0.0;
  double median_bias = 0.0;
  double empirical_se = 0.0;   // NaN when fewer than 2 converged replicates
  double median_see = 0.0;
  double coverage_pct = 0.0;   // 95% nominal
};

struct BenchReport {
  std::string scenario;
  int n_subjects = 0;
  int attempted = 0;
  int converged = 0;
  std::vector<BenchRow> rows;
  double total_seconds = 0.0;
  double mean_fit_seconds = 0.0;
};

// Simulate -> fit -> covariance -> confidence intervals per replicate, then
// aggregate Table-style metrics. Replicates run on counter-based seeds and
// aggregate in sorted order, so the report is identical for any worker count.
BenchReport run_bench(const Scenario& scenario, int n, int reps, std::uint64_t seed,
                      const EmConfig& em_config, const ProfileConfig& profile_config,
                      int threads = 1, bool progress = false);

enum class ReportFormat { Csv, Text };

// Column order: Bias, SE, SEE, CP.
std::string report_to_table(const BenchReport& report, ReportFormat format);

}  // namespace msmle

#endif  // MSMLE_BENCH_HPP
