#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

#include "msmle/io.hpp"

namespace {

using namespace msmle;

int default_threads() {
  if (const char* env = std::getenv("MSMLE_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

int run_fit(const std::string& data_path, const std::string& config_path,
            const std::string& out_path, bool no_se, int threads, bool verbose) {
  ModelConfig config = read_model_config(config_path);
  config.em.threads = threads;
  config.profile.threads = threads;
  TransitionGraph graph = config.graph();
  std::vector<PanelSubject> subjects = read_panel_csv(data_path, config);
  if (verbose)
    std::cerr << "fit: " << subjects.size() << " subjects, " << config.covariate_names.size()
              << " covariates\n";
  FitResult result = fit(graph, subjects, config.em);
  result.parameter_names =
      parameter_names(graph, config.covariate_names, result.theta.re_dim());
  if (verbose)
    std::cerr << "fit: " << (result.converged ? "converged" : "did not converge") << " after "
              << result.n_iterations << " iterations, loglik "
              << result.diagnostics.final_loglik << ", grid " << result.grid_sizes.first
              << " -> " << result.grid_sizes.second << "\n";
  if (!no_se) {
    CovarianceResult cov = covariance(graph, subjects, result.theta, result.baseline,
                                      config.profile);
    result.covariance = cov.covariance;
  }
  FitArtifact artifact;
  artifact.fit = std::move(result);
  artifact.n_states = config.n_states;
  artifact.transitions = config.transitions;
  artifact.covariate_names = config.covariate_names;
  artifact.random_effect_columns = config.random_effect_columns;
  write_fit_json(artifact, out_path);
  return 0;
}

int run_simulate(const std::string& scenario_spec, int n, std::uint64_t seed,
                 const std::string& out_path, const std::string& truth_path) {
  Scenario scenario = resolve_scenario(scenario_spec);
  std::vector<SimulatedSubject> full = simulate_dataset_full(scenario, n, seed);
  std::vector<PanelSubject> panels;
  panels.reserve(full.size());
  for (const auto& s : full) panels.push_back(s.panel);
  write_panel_csv(out_path, panels, scenario.covariate_names());
  if (!truth_path.empty()) write_truth_csv(truth_path, full);
  return 0;
}

int run_bench_cmd(const std::string& scenario_spec, int n, int reps, std::uint64_t seed,
                  const std::string& out_path, int threads) {
  Scenario scenario = resolve_scenario(scenario_spec);
  EmConfig em;
  ProfileConfig profile;
  BenchReport report =
      run_bench(scenario, n, reps, seed, em, profile, threads, /*progress=*/true);
  write_bench_csv(out_path, report);
  std::cout << report_to_table(report, ReportFormat::Text);
  return 0;
}

int run_curves(const std::string& fit_path, const std::string& profile_path,
               const std::string& transitions_arg, const std::string& out_path) {
  FitArtifact artifact = read_fit_json(fit_path);
  CovariateProfile profile = read_profile_toml(profile_path, artifact);
  TransitionGraph graph(artifact.n_states, artifact.transitions);
  RandomEffectMode mode = profile.re_mode_set ? profile.re_mode : RandomEffectMode::Zero;

  std::vector<Transition> wanted;
  if (transitions_arg == "all") {
    wanted = artifact.transitions;
  } else {
    std::string item;
    std::istringstream ss(transitions_arg);
    while (std::getline(ss, item, ',')) {
      auto pos = item.find("->");
      if (pos == std::string::npos)
        throw usage_error("bad transition '" + item + "' (expected j->k)");
      wanted.push_back(Transition{std::stoi(item.substr(0, pos)) - 1,
                                  std::stoi(item.substr(pos + 2)) - 1});
    }
  }
  std::vector<std::pair<Transition, std::vector<CurvePoint>>> curves;
  for (const Transition& t : wanted)
    curves.emplace_back(t, cumulative_intensity_curve(artifact.fit, graph, t, profile.x,
                                                      profile.z, mode));
  write_curves_csv(out_path, curves);
  return 0;
}

int run_predict(const std::string& fit_path, const std::string& profile_path, double t1,
                double t2, const std::string& out_path) {
  FitArtifact artifact = read_fit_json(fit_path);
  CovariateProfile profile = read_profile_toml(profile_path, artifact);
  TransitionGraph graph(artifact.n_states, artifact.transitions);
  RandomEffectMode mode = profile.re_mode_set ? profile.re_mode : RandomEffectMode::Average;
  Eigen::MatrixXd m =
      transition_probability(artifact.fit, graph, profile.x, profile.z, t1, t2, mode);
  write_matrix_csv(out_path, m, t1, t2);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiparametric multi-state models for interval-censored panel data"};
  app.require_subcommand(1);

  std::string data_path, config_path, out_path, scenario_spec, truth_path, fit_path,
      profile_path, transitions_arg = "all";
  int n = 0, reps = 0, threads = default_threads();
  std::uint64_t seed = 1;
  double t1 = 0.0, t2 = 0.0;
  bool no_se = false, verbose = false;

  CLI::App* c_fit = app.add_subcommand("fit", "Fit the model to a panel CSV");
  c_fit->add_option("--data", data_path, "panel CSV")->required();
  c_fit->add_option("--config", config_path, "model TOML")->required();
  c_fit->add_option("--out", out_path, "output fit JSON")->required();
  c_fit->add_flag("--no-se", no_se, "skip profile-likelihood standard errors");
  c_fit->add_option("--threads", threads, "worker threads");
  c_fit->add_flag("--verbose", verbose, "progress to stderr");

  CLI::App* c_sim = app.add_subcommand("simulate", "Simulate a panel dataset");
  c_sim->add_option("--scenario", scenario_spec, "three-state|four-state|file:<toml>")
      ->required();
  c_sim->add_option("--n", n, "number of subjects")->required();
  c_sim->add_option("--seed", seed, "RNG seed")->required();
  c_sim->add_option("--out", out_path, "output CSV")->required();
  c_sim->add_option("--truth", truth_path, "optional ground-truth sidecar CSV");

  CLI::App* c_bench = app.add_subcommand("bench", "Monte Carlo replication report");
  c_bench->add_option("--scenario", scenario_spec, "three-state|four-state|file:<toml>")
      ->required();
  c_bench->add_option("--n", n, "subjects per replicate")->required();
  c_bench->add_option("--reps", reps, "number of replicates")->required();
  c_bench->add_option("--seed", seed, "RNG seed")->required();
  c_bench->add_option("--out", out_path, "output CSV")->required();
  c_bench->add_option("--threads", threads, "worker threads");

  CLI::App* c_curves = app.add_subcommand("curves", "Cumulative intensity curve export");
  c_curves->add_option("--fit", fit_path, "fit JSON")->required();
  c_curves->add_option("--profile", profile_path, "covariate profile TOML")->required();
  c_curves->add_option("--transitions", transitions_arg, "all or j->k[,j->k...]");
  c_curves->add_option("--out", out_path, "output CSV")->required();

  CLI::App* c_pred = app.add_subcommand("predict", "Interval transition probabilities");
  c_pred->add_option("--fit", fit_path, "fit JSON")->required();
  c_pred->add_option("--profile", profile_path, "covariate profile TOML")->required();
  c_pred->add_option("--from", t1, "interval start")->required();
  c_pred->add_option("--to", t2, "interval end")->required();
  c_pred->add_option("--out", out_path, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(c_fit))
      return run_fit(data_path, config_path, out_path, no_se, threads, verbose);
    if (app.got_subcommand(c_sim))
      return run_simulate(scenario_spec, n, seed, out_path, truth_path);
    if (app.got_subcommand(c_bench))
      return run_bench_cmd(scenario_spec, n, reps, seed, out_path, threads);
    if (app.got_subcommand(c_curves))
      return run_curves(fit_path, profile_path, transitions_arg, out_path);
    if (app.got_subcommand(c_pred))
      return run_predict(fit_path, profile_path, t1, t2, out_path);
  } catch (const msmle::Error& e) {
    switch (e.kind()) {
      case msmle::ErrorKind::Usage:
        std::cerr << "msmle: error(usage): " << e.what() << "\n";
        return 1;
      case msmle::ErrorKind::Data:
        std::cerr << "msmle: error(data): " << e.what() << "\n";
        return 2;
      case msmle::ErrorKind::Numeric:
        std::cerr << "msmle: error(numeric): " << e.what() << "\n";
        return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "msmle: error(numeric): " << e.what() << "\n";
    return 3;
  }
  return 1;
}
