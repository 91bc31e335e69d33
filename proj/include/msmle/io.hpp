#ifndef MSMLE_IO_HPP
#define MSMLE_IO_HPP

#include <string>
#include <vector>

#include "msmle/bench.hpp"
#include "msmle/em.hpp"
#include "msmle/inference.hpp"
#include "msmle/model.hpp"
#include "msmle/simulate.hpp"
#include "msmle/toml.hpp"

namespace msmle {

// Model + estimation settings parsed from a TOML config file.
struct ModelConfig {
  int n_states = 0;
  std::vector<std::string> state_names;
  std::vector<Transition> transitions;
  std::vector<std::string> covariate_names;          // columns of the data file
  std::vector<std::string> random_effect_columns;    // besides the intercept
  EmConfig em;
  ProfileConfig profile;

  TransitionGraph graph() const { return TransitionGraph(n_states, transitions); }
};

ModelConfig read_model_config(const std::string& path);

// Long-format panel CSV: header `id,time,state,<covariates...>`; one row per
// examination, a time-0 baseline row per subject. Rows may appear in any
// order; they are grouped by id and sorted by time. All per-row problems are
// aggregated into one data_error listing line numbers.
std::vector<PanelSubject> read_panel_csv(const std::string& path,
                                         const ModelConfig& config);
void write_panel_csv(const std::string& path, const std::vector<PanelSubject>& subjects,
                     const std::vector<std::string>& covariate_names);

// Ground-truth sidecar emitted by `simulate --truth`: exact transition times,
// never read back by the estimator.
void write_truth_csv(const std::string& path, const std::vector<SimulatedSubject>& subjects);

// Lossless fit artifact (JSON, format version tag "msmle-fit/1").
struct FitArtifact {
  FitResult fit;
  int n_states = 0;
  std::vector<Transition> transitions;
  std::vector<std::string> covariate_names;
  std::vector<std::string> random_effect_columns;
};
void write_fit_json(const FitArtifact& artifact, const std::string& path);
FitArtifact read_fit_json(const std::string& path);

// Covariate profile for curve/probability exports: `[covariates]` table plus
// optional `[options]` (re_mode = "zero" | "average").
struct CovariateProfile {
  CovariatePath x;
  CovariatePath z;
  RandomEffectMode re_mode = RandomEffectMode::Zero;
  bool re_mode_set = false;
};
CovariateProfile read_profile_toml(const std::string& path, const FitArtifact& artifact);

Scenario read_scenario_toml(const std::string& path);
// "three-state", "four-state" or "file:<path>".
Scenario resolve_scenario(const std::string& spec);

void write_curves_csv(const std::string& path,
                      const std::vector<std::pair<Transition, std::vector<CurvePoint>>>& curves);
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, double t1, double t2);
void write_bench_csv(const std::string& path, const BenchReport& report);

// Atomic write: temp file in the target directory, then rename.
void atomic_write(const std::string& path, const std::string& contents);

// Round-trip-exact numeric formatting/parsing used by every CSV surface.
std::string format_double(double v);
double parse_double(const std::string& s, bool* ok);

}  // namespace msmle

#endif  // MSMLE_IO_HPP
