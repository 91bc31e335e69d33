#ifndef MSMLE_MODEL_HPP
#define MSMLE_MODEL_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msmle/common.hpp"

namespace msmle {

// A directed transition, states 0-based internally. External formats and
// messages are 1-based throughout.
struct Transition {
  int from = 0;
  int to = 0;
  friend bool operator==(const Transition&, const Transition&) = default;
  friend auto operator<=>(const Transition&, const Transition&) = default;
};

std::string transition_label(const Transition& t);  // "j->k", 1-based

/// State space plus the set of feasible transitions. The transition digraph
/// must be acyclic: a subject can never return to an earlier state.
class TransitionGraph {
 public:
  TransitionGraph(int n_states, std::vector<Transition> transitions);

  int n_states() const { return n_states_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  int n_transitions() const { return static_cast<int>(transitions_.size()); }

  // Index into transitions(), -1 if (from,to) is not feasible.
  int transition_index(int from, int to) const { return index_[from * n_states_ + to]; }
  // Transition indices leaving `state`, in transition order.
  const std::vector<int>& exits(int state) const { return exits_[state]; }
  bool is_absorbing(int state) const { return exits_[state].empty(); }
  // True if `to` can be reached from `from` through feasible transitions
  // (reflexive: reachable(s,s) is true).
  bool reachable(int from, int to) const { return closure_[from * n_states_ + to] != 0; }

 private:
  int n_states_;
  std::vector<Transition> transitions_;
  std::vector<int> index_;          // K*K -> transition index or -1
  std::vector<std::vector<int>> exits_;
  std::vector<unsigned char> closure_;  // reflexive-transitive closure
};

// Piecewise-constant covariate path: value at time t is the row of the most
// recent breakpoint with time <= t. Evaluation at a breakpoint returns that
// breakpoint's value exactly as given.
class CovariatePath {
 public:
  CovariatePath() = default;
  CovariatePath(std::vector<double> times, Eigen::MatrixXd values);
  static CovariatePath constant(const Eigen::VectorXd& value);

  int dim() const { return static_cast<int>(values_.rows()); }
  bool is_constant() const { return times_.size() <= 1; }
  Eigen::VectorXd at(double t) const;
  // Index of the breakpoint in effect at time t (for callers that cache).
  int segment_at(double t) const;
  const std::vector<double>& times() const { return times_; }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  std::vector<double> times_;   // strictly increasing, first <= 0
  Eigen::MatrixXd values_;      // dim x n_breakpoints
};

/// One subject's panel: examination times (tau_0 = 0 first), observed states
/// and covariate paths. States are 0-based here.
struct PanelSubject {
  std::string id;
  std::vector<double> exam_times;   // tau_0 = 0 < tau_1 < ... < tau_{n_i}
  std::vector<int> states;          // same length as exam_times
  CovariatePath x_path;             // regression covariates, dim d1
  CovariatePath z_path;             // random-effect design, dim d2, first row 1

  int n_intervals() const { return static_cast<int>(exam_times.size()) - 1; }
  double last_exam() const { return exam_times.back(); }
};

struct PanelViolation {
  std::string subject_id;
  int exam_index = 0;
  std::string rule;     // short machine key
  std::string message;
};

// Empty result iff the subject's invariants hold against the graph.
std::vector<PanelViolation> validate_panel(const TransitionGraph& graph,
                                           const PanelSubject& subject);

/// Regression coefficients per transition plus the random-effect covariance in
/// log-Cholesky form: gamma packs the log of the diagonal of the lower
/// Cholesky factor followed by the strictly-lower entries (row major). For a
/// scalar random effect, sigma2 = exp(2*gamma[0]).
struct ParameterSet {
  std::vector<Eigen::VectorXd> beta;  // one d1-vector per transition, graph order
  Eigen::VectorXd gamma;              // d3 = d2*(d2+1)/2

  static int gamma_dim(int d2) { return d2 * (d2 + 1) / 2; }
  static ParameterSet zero(int n_transitions, int d1, int d2);

  int re_dim() const;                         // d2 recovered from gamma size
  Eigen::MatrixXd cholesky_factor() const;    // lower-triangular L
  Eigen::MatrixXd sigma() const;              // L * L^T, recomputed on demand
  static Eigen::VectorXd gamma_from_sigma(const Eigen::MatrixXd& sigma);
};

/// Baseline cumulative intensities as step functions on a shared jump grid.
struct BaselineHazards {
  std::vector<double> grid;                  // u_1 < ... < u_m, all > 0
  std::vector<std::vector<double>> jumps;    // [transition][grid point], >= 0
  std::vector<unsigned char> active;         // pruning mask, 1 = active

  int grid_size() const { return static_cast<int>(grid.size()); }
  int n_active() const;
  // Lambda_{jk}(t) = sum of active jumps at grid points <= t.
  double cumulative(int transition, double t) const;
  void set_uniform_jumps(double value);
};

// Grid = sorted unique positive exam times across subjects; jumps zero, all
// points active.
BaselineHazards build_grid(const std::vector<PanelSubject>& subjects,
                           int n_transitions);

struct FitDiagnostics {
  std::vector<std::string> flags;
  int prescreen_removed = 0;
  int warm_start_iterations = 0;
  double final_loglik = 0.0;
};

struct FitResult {
  ParameterSet theta;
  BaselineHazards baseline;
  std::optional<Eigen::MatrixXd> covariance;  // over (beta..., gamma)
  std::vector<std::string> parameter_names;
  std::vector<double> loglik_trace;           // main EM, one entry per iteration
  int n_iterations = 0;
  bool converged = false;
  std::pair<int, int> grid_sizes{0, 0};       // (initial m, final active m)
  FitDiagnostics diagnostics;
};

// Flat parameter order used by covariance/confidence intervals and reports:
// each transition's beta block in graph order, then gamma.
std::vector<std::string> parameter_names(const TransitionGraph& graph,
                                         const std::vector<std::string>& covariate_names,
                                         int d2);

}  // namespace msmle

#endif  // MSMLE_MODEL_HPP
