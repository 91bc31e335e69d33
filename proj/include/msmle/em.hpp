#ifndef MSMLE_EM_HPP
#define MSMLE_EM_HPP

#include <Eigen/Dense>
#include <vector>

#include "msmle/model.hpp"
#include "msmle/prob.hpp"
#include "msmle/quadrature.hpp"

namespace msmle {

struct EmConfig {
  // Convergence: max-abs change over beta, gamma and the active jumps, the
  // jumps measured on the per-point event-probability scale 1-exp(-lambda).
  // That scale agrees with the raw jump for small jumps and stays finite at
  // terminal grid points whose jumps legitimately diverge (the NPMLE puts a
  // point mass there and the supremum is attained only in the limit).
  double tol = 1e-4;
  int max_iter = 5000;
  double prune_threshold = 1e-4;  // 0 disables pruning
  bool prune_per_iteration = true;  // false: prune only after convergence
  bool prescreen = true;
  int prescreen_max_iter = 50;
  double prescreen_c = 0.01;      // deactivate when all jumps < c/m
  bool warm_start_no_re = true;
  int quad_nodes = 0;             // 0 -> 20 if d2==1 else 10
  int newton_steps_per_m = 1;
  int threads = 1;

  int resolved_quad_nodes(int d2) const {
    if (quad_nodes > 0) return quad_nodes;
    return d2 == 1 ? 20 : 10;
  }
};

/// Conditional expectations from one E-step pass, per subject, plus the
/// aggregated sums the M-steps consume. Posterior node weights are normalized
/// per subject; expected counts are zero beyond a subject's last exam.
struct EStepCache {
  int n_transitions = 0;
  std::vector<int> active_grid;                  // active grid indices, ascending

  // Per subject:
  std::vector<Eigen::VectorXd> post_weights;     // quadrature node posterior
  std::vector<Eigen::MatrixXd> expected_w;       // n_transitions x window_len
  std::vector<Eigen::VectorXd> expected_exp_bz;  // E(exp(b.Z_is)) per window pos
  std::vector<Eigen::MatrixXd> expected_bb;      // d2 x d2
  std::vector<double> logliks;                   // per-subject observed loglik
  std::vector<int> window_len;                   // #active points <= last exam

  double total_loglik = 0.0;

  // Aggregates over subjects (per transition x active position):
  Eigen::MatrixXd sum_w;                         // sum_i E(W_ijks)
  std::vector<Eigen::VectorXd> sum_wx;           // per transition: sum_{i,s} E(W) X_is
};

// Observed-data log-likelihood contribution of one subject, integrating the
// random effect by quadrature. Returns -inf when the observed path has zero
// probability at these parameters.
double subject_loglik(const TransitionGraph& graph, const PanelSubject& subject,
                      const ParameterSet& params, const BaselineHazards& baseline,
                      const QuadratureRule& rule);

// E(W_ijks | observed path, b) for grid point s inside examination interval l.
// Throws if s is pruned or outside the interval, or if the observed pair has
// zero probability.
double e_step_expected_W(const TransitionGraph& graph, const PanelSubject& subject,
                         int interval, int s, const Transition& transition,
                         const Eigen::VectorXd& b, const ParameterSet& params,
                         const BaselineHazards& baseline);

EStepCache e_step(const TransitionGraph& graph, const std::vector<PanelSubject>& subjects,
                  const ParameterSet& params, const BaselineHazards& baseline,
                  const QuadratureRule& rule, int threads = 1);

// lambda_jks <- sum_i E(W_ijks) / sum_i E(exp(beta.X+b.Z)) over subjects still
// under observation at u_s; 0/0 yields 0 and marks the point prunable.
void m_step_lambda(const EStepCache& cache, const TransitionGraph& graph,
                   const std::vector<PanelSubject>& subjects, const ParameterSet& params,
                   BaselineHazards* baseline);

// One damped Newton step per transition on the profiled complete-data score.
void m_step_beta(const EStepCache& cache, const TransitionGraph& graph,
                 const std::vector<PanelSubject>& subjects, const BaselineHazards& baseline,
                 ParameterSet* params, int newton_steps = 1);

// Sigma <- mean of E(b b^T); gamma recovered by log-Cholesky. Non-PD means are
// floored at 1e-10 eigenvalues and flagged via the return value.
bool m_step_sigma(const EStepCache& cache, ParameterSet* params);

// Capped no-covariate, no-random-effect EM; deactivates grid points where
// every transition's estimated jump falls below c/m.
std::vector<unsigned char> prescreen_grid(const TransitionGraph& graph,
                                          const std::vector<PanelSubject>& subjects,
                                          const EmConfig& config);

FitResult fit(const TransitionGraph& graph, const std::vector<PanelSubject>& subjects,
              const EmConfig& config);

// As fit(), but keeps theta fixed and iterates only the jump updates.
// Used by the profile-likelihood machinery.
struct ProfileFitOut {
  BaselineHazards baseline;
  std::vector<double> subject_logliks;
  int iterations = 0;
  bool converged = false;
};
ProfileFitOut fit_lambda_only(const TransitionGraph& graph,
                              const std::vector<PanelSubject>& subjects,
                              const ParameterSet& theta, const BaselineHazards& init,
                              double tol, int max_iter, const QuadratureRule& rule,
                              int threads = 1);

}  // namespace msmle

#endif  // MSMLE_EM_HPP
