#include "msmle/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

namespace msmle {

namespace {

struct RepResult {
  bool converged = false;
  std::vector<double> estimates;   // betas then sigma2
  std::vector<double> sees;
  std::vector<char> covered;
  double seconds = 0.0;
};

double median_of_sorted(const std::vector<double>& v) {
  size_t k = v.size();
  if (k == 0) return std::numeric_limits<double>::quiet_NaN();
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

double sd_of_sorted(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

BenchReport run_bench(const Scenario& scenario, int n, int reps, std::uint64_t seed,
                      const EmConfig& em_config, const ProfileConfig& profile_config,
                      int threads, bool progress) {
  if (reps < 1) throw data_error("bench needs at least one replicate");
  TransitionGraph graph = scenario.graph();
  int d1 = static_cast<int>(scenario.covariates.size());
  int n_beta = graph.n_transitions() * d1;
  int n_params = n_beta + 1;  // plus sigma2

  std::vector<double> truth(n_params);
  {
    int k = 0;
    for (const auto& b : scenario.beta_true)
      for (int c = 0; c < b.size(); ++c) truth[k++] = b[c];
    truth[k] = scenario.sigma2_true;
  }

  auto t_start = std::chrono::steady_clock::now();
  std::vector<RepResult> results(reps);
  std::atomic<int> next{0};
  std::atomic<int> done{0};

  auto worker = [&]() {
    for (;;) {
      int r = next.fetch_add(1);
      if (r >= reps) return;
      auto t0 = std::chrono::steady_clock::now();
      RepResult res;
      std::vector<PanelSubject> data =
          simulate_dataset(scenario, n, seed, static_cast<std::uint64_t>(r));
      EmConfig cfg = em_config;
      cfg.threads = 1;
      ProfileConfig pcfg = profile_config;
      pcfg.threads = 1;
      FitResult fit_res = fit(graph, data, cfg);
      res.converged = fit_res.converged;
      if (res.converged) {
        CovarianceResult cov = covariance(graph, data, fit_res.theta, fit_res.baseline, pcfg);
        std::vector<ConfidenceInterval> cis = confidence_intervals(
            graph, scenario.covariate_names(), fit_res.theta, cov.covariance, 0.95);
        res.estimates.resize(n_params);
        res.sees.resize(n_params);
        res.covered.resize(n_params);
        int k = 0;
        for (int d = 0; d < graph.n_transitions(); ++d)
          for (int c = 0; c < d1; ++c) {
            const ConfidenceInterval& ci = cis[k];
            res.estimates[k] = ci.estimate;
            res.sees[k] = ci.std_error;
            res.covered[k] = ci.lower <= truth[k] && truth[k] <= ci.upper;
            ++k;
          }
        // sigma2 row sits after the beta and gamma rows
        const ConfidenceInterval& s2 = cis[n_beta + fit_res.theta.gamma.size()];
        res.estimates[n_beta] = s2.estimate;
        res.sees[n_beta] = s2.std_error;
        res.covered[n_beta] =
            s2.defined && s2.lower <= truth[n_beta] && truth[n_beta] <= s2.upper;
      }
      auto t1 = std::chrono::steady_clock::now();
      res.seconds = std::chrono::duration<double>(t1 - t0).count();
      results[r] = std::move(res);
      int d = done.fetch_add(1) + 1;
      if (progress)
        std::cerr << "bench: replicate " << d << "/" << reps << " finished\n";
    }
  };

  int workers = std::max(1, std::min(threads, reps));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BenchReport report;
  report.scenario = scenario.name;
  report.n_subjects = n;
  report.attempted = reps;
  double fit_seconds = 0.0;
  for (const auto& r : results) {
    report.converged += r.converged ? 1 : 0;
    fit_seconds += r.seconds;
  }
  if (report.converged == 0) throw numeric_error("all bench replicates failed to converge");

  std::vector<std::string> names;
  for (const Transition& t : graph.transitions())
    for (const auto& c : scenario.covariate_names())
      names.push_back("beta[" + transition_label(t) + "][" + c + "]");
  names.push_back("sigma2");

  for (int k = 0; k < n_params; ++k) {
    std::vector<double> dev, est, sees;
    int covered = 0;
    for (const auto& r : results) {
      if (!r.converged) continue;
      est.push_back(r.estimates[k]);
      dev.push_back(r.estimates[k] - truth[k]);
      sees.push_back(r.sees[k]);
      covered += r.covered[k] ? 1 : 0;
    }
    std::sort(dev.begin(), dev.end());
    std::sort(est.begin(), est.end());
    std::sort(sees.begin(), sees.end());
    BenchRow row;
    row.parameter = names[k];
    row.truth = truth[k];
    row.median_bias = median_of_sorted(dev);
    row.empirical_se = sd_of_sorted(est);
    row.median_see = median_of_sorted(sees);
    row.coverage_pct = 100.0 * covered / static_cast<double>(report.converged);
    report.rows.push_back(row);
  }

  auto t_end = std::chrono::steady_clock::now();
  report.total_seconds = std::chrono::duration<double>(t_end - t_start).count();
  report.mean_fit_seconds = fit_seconds / reps;
  return report;
}

std::string report_to_table(const BenchReport& report, ReportFormat format) {
  std::ostringstream os;
  if (format == ReportFormat::Csv) {
    os.precision(17);
    os << "parameter,truth,bias,se,see,cp,converged,attempted\n";
    for (const auto& r : report.rows) {
      os << r.parameter << ',' << r.truth << ',' << r.median_bias << ',' << r.empirical_se
         << ',' << r.median_see << ',' << r.coverage_pct << ',' << report.converged << ','
         << report.attempted << '\n';
    }
    return os.str();
  }
  os << "scenario " << report.scenario << ", n=" << report.n_subjects << ", "
     << report.converged << "/" << report.attempted << " replicates converged\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %8s %8s %6s\n", "Parameter", "Truth",
                "Bias", "SE", "SEE", "CP");
  os << buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %8.3f %8.3f %8.3f %8.3f %6.1f\n",
                  r.parameter.c_str(), r.truth, r.median_bias, r.empirical_se, r.median_see,
                  r.coverage_pct);
    os << buf;
  }
  return os.str();
}

}  // namespace msmle
