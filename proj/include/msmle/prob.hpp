#ifndef MSMLE_PROB_HPP
#define MSMLE_PROB_HPP

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "msmle/model.hpp"

namespace msmle {

// Diagonal convention for the per-grid-point transition matrix built from the
// latent Poisson events. Off-diagonals are (1-exp(-lambda_jk)) *
// exp(-sum of the other exit lambdas) either way.
//   Stochastic: diagonal = 1 - sum of off-diagonals, so rows sum to 1; the
//     mass of multi-exit event configurations counts as a self-transition.
//   EventOnly: diagonal = exp(-sum of exit lambdas), the probability that no
//     exit fires at all. Rows of states with two or more feasible exits then
//     sum to slightly less than 1. This is the form under which the E-step
//     identities are exact, so the estimator uses it internally.
// The two coincide whenever every state has at most one feasible exit.
enum class StepMatrixForm { Stochastic, EventOnly };

// lambda_ijks = lambda_jks * exp(beta_jk.X_i(u_s) + b.Z_i(u_s)) per feasible
// transition at grid point s.
std::map<Transition, double> delta_lambda(int s, const TransitionGraph& graph,
                                          const PanelSubject& subject,
                                          const Eigen::VectorXd& b,
                                          const ParameterSet& params,
                                          const BaselineHazards& baseline);

struct StepTransitionMatrix {
  double at_time = 0.0;
  Eigen::MatrixXd matrix;
};

// Poisson-event step matrix at grid point s. Absorbing rows are identity.
StepTransitionMatrix step_matrix_poisson(int s, const TransitionGraph& graph,
                                         const PanelSubject& subject,
                                         const Eigen::VectorXd& b,
                                         const ParameterSet& params,
                                         const BaselineHazards& baseline,
                                         StepMatrixForm form = StepMatrixForm::Stochastic);

// I + dA: off-diagonals lambda_ijks, diagonal 1 - row sum. Diagnostic only;
// diagonals may go negative and are reported as-is.
Eigen::MatrixXd step_matrix_linear(int s, const TransitionGraph& graph,
                                   const PanelSubject& subject,
                                   const Eigen::VectorXd& b,
                                   const ParameterSet& params,
                                   const BaselineHazards& baseline);

// Ordered product of step_matrix_poisson over active grid points in (t1,t2].
// Empty product is the identity.
Eigen::MatrixXd interval_matrix(double t1, double t2, const TransitionGraph& graph,
                                const PanelSubject& subject, const Eigen::VectorXd& b,
                                const ParameterSet& params, const BaselineHazards& baseline,
                                StepMatrixForm form = StepMatrixForm::Stochastic);

// All interior state sequences (k_1..k_q) connecting s1 to s2 where each
// consecutive pair is equal or feasible.
std::vector<std::vector<int>> enumerate_paths(const TransitionGraph& graph, int s1,
                                              int s2, int q);

// Path-enumeration evaluation of the (s1,s2) entry of interval_matrix; the
// test oracle. Refuses instances with more than 6 active grid points in
// (t1,t2] or more than 5 states.
double interval_prob_oracle(double t1, double t2, int s1, int s2,
                            const TransitionGraph& graph, const PanelSubject& subject,
                            const Eigen::VectorXd& b, const ParameterSet& params,
                            const BaselineHazards& baseline,
                            StepMatrixForm form = StepMatrixForm::Stochastic);

}  // namespace msmle

#endif  // MSMLE_PROB_HPP
