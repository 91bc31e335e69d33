#include "msmle/prob.hpp"

#include <algorithm>
#include <cmath>

namespace msmle {

namespace {

void check_point(int s, const BaselineHazards& baseline) {
  if (s < 0 || s >= baseline.grid_size())
    throw numeric_error("grid index " + std::to_string(s) + " out of range");
  if (!baseline.active[s])
    throw numeric_error("pruned index " + std::to_string(s));
}

// lambda_ijks for every transition at grid point s (zeros kept).
std::vector<double> point_lambdas(int s, const TransitionGraph& graph,
                                  const PanelSubject& subject, const Eigen::VectorXd& b,
                                  const ParameterSet& params,
                                  const BaselineHazards& baseline) {
  double u = baseline.grid[s];
  Eigen::VectorXd x = subject.x_path.at(u);
  Eigen::VectorXd z = subject.z_path.at(u);
  double bz = b.size() > 0 ? b.dot(z) : 0.0;
  std::vector<double> lam(graph.n_transitions(), 0.0);
  for (int d = 0; d < graph.n_transitions(); ++d) {
    double eta = params.beta[d].size() > 0 ? params.beta[d].dot(x) : 0.0;
    lam[d] = baseline.jumps[d][s] * std::exp(eta + bz);
  }
  return lam;
}

Eigen::MatrixXd poisson_matrix_from_lambdas(const TransitionGraph& graph,
                                            const std::vector<double>& lam,
                                            StepMatrixForm form) {
  int K = graph.n_states();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K, K);
  for (int j = 0; j < K; ++j) {
    const auto& exits = graph.exits(j);
    if (exits.empty()) {
      M(j, j) = 1.0;
      continue;
    }
    double rowsum = 0.0;
    for (int d : exits) rowsum += lam[d];
    double none = std::exp(-rowsum);  // no exit count fires
    double off_sum = 0.0;
    for (int d : exits) {
      // exactly one positive count, at d: (1-e^{-lam_d}) e^{-(rowsum-lam_d)}
      double p = -std::expm1(-lam[d]) * std::exp(lam[d] - rowsum);
      M(j, graph.transitions()[d].to) = p;
      off_sum += p;
    }
    M(j, j) = form == StepMatrixForm::Stochastic ? 1.0 - off_sum : none;
  }
  return M;
}

}  // namespace

std::map<Transition, double> delta_lambda(int s, const TransitionGraph& graph,
                                          const PanelSubject& subject,
                                          const Eigen::VectorXd& b,
                                          const ParameterSet& params,
                                          const BaselineHazards& baseline) {
  check_point(s, baseline);
  std::vector<double> lam = point_lambdas(s, graph, subject, b, params, baseline);
  std::map<Transition, double> out;
  for (int d = 0; d < graph.n_transitions(); ++d) out[graph.transitions()[d]] = lam[d];
  return out;
}

StepTransitionMatrix step_matrix_poisson(int s, const TransitionGraph& graph,
                                         const PanelSubject& subject,
                                         const Eigen::VectorXd& b,
                                         const ParameterSet& params,
                                         const BaselineHazards& baseline,
                                         StepMatrixForm form) {
  check_point(s, baseline);
  std::vector<double> lam = point_lambdas(s, graph, subject, b, params, baseline);
  return {baseline.grid[s], poisson_matrix_from_lambdas(graph, lam, form)};
}

Eigen::MatrixXd step_matrix_linear(int s, const TransitionGraph& graph,
                                   const PanelSubject& subject, const Eigen::VectorXd& b,
                                   const ParameterSet& params,
                                   const BaselineHazards& baseline) {
  check_point(s, baseline);
  std::vector<double> lam = point_lambdas(s, graph, subject, b, params, baseline);
  int K = graph.n_states();
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(K, K);
  for (int d = 0; d < graph.n_transitions(); ++d) {
    const Transition& t = graph.transitions()[d];
    M(t.from, t.to) = lam[d];
    M(t.from, t.from) -= lam[d];
  }
  return M;
}

Eigen::MatrixXd interval_matrix(double t1, double t2, const TransitionGraph& graph,
                                const PanelSubject& subject, const Eigen::VectorXd& b,
                                const ParameterSet& params, const BaselineHazards& baseline,
                                StepMatrixForm form) {
  if (t2 < t1) throw numeric_error("interval end precedes start");
  int K = graph.n_states();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(K, K);
  for (int s = 0; s < baseline.grid_size(); ++s) {
    double u = baseline.grid[s];
    if (u <= t1 || !baseline.active[s]) continue;
    if (u > t2) break;
    std::vector<double> lam = point_lambdas(s, graph, subject, b, params, baseline);
    P = P * poisson_matrix_from_lambdas(graph, lam, form);
  }
  return P;
}

std::vector<std::vector<int>> enumerate_paths(const TransitionGraph& graph, int s1,
                                              int s2, int q) {
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  auto feasible = [&](int a, int b) { return a == b || graph.transition_index(a, b) >= 0; };
  auto dfs = [&](auto&& self, int state, int depth) -> void {
    if (depth == q) {
      if (feasible(state, s2)) out.push_back(current);
      return;
    }
    for (int next = 0; next < graph.n_states(); ++next) {
      if (!feasible(state, next)) continue;
      current.push_back(next);
      self(self, next, depth + 1);
      current.pop_back();
    }
  };
  dfs(dfs, s1, 0);
  return out;
}

double interval_prob_oracle(double t1, double t2, int s1, int s2,
                            const TransitionGraph& graph, const PanelSubject& subject,
                            const Eigen::VectorXd& b, const ParameterSet& params,
                            const BaselineHazards& baseline, StepMatrixForm form) {
  if (t2 < t1) throw numeric_error("interval end precedes start");
  if (graph.n_states() > 5) throw numeric_error("oracle budget exceeded");
  std::vector<int> points;
  for (int s = 0; s < baseline.grid_size(); ++s) {
    double u = baseline.grid[s];
    if (u <= t1 || !baseline.active[s]) continue;
    if (u > t2) break;
    points.push_back(s);
  }
  if (static_cast<int>(points.size()) > 6) throw numeric_error("oracle budget exceeded");
  if (points.empty()) return s1 == s2 ? 1.0 : 0.0;

  // Per-point single-step event probabilities, shared with the matrix route.
  std::vector<Eigen::MatrixXd> step;
  for (int s : points) {
    std::vector<double> lam = point_lambdas(s, graph, subject, b, params, baseline);
    step.push_back(poisson_matrix_from_lambdas(graph, lam, form));
  }
  int r = static_cast<int>(points.size());
  double total = 0.0;
  for (const auto& mid : enumerate_paths(graph, s1, s2, r - 1)) {
    double p = 1.0;
    int prev = s1;
    for (int l = 0; l < r; ++l) {
      int next = l + 1 < r ? mid[l] : s2;
      p *= step[l](prev, next);
      prev = next;
    }
    total += p;
  }
  return total;
}

}  // namespace msmle
