#ifndef MSMLE_INFERENCE_HPP
#define MSMLE_INFERENCE_HPP

#include <Eigen/Dense>
#include <vector>

#include "msmle/em.hpp"
#include "msmle/model.hpp"

namespace msmle {

struct ProfileConfig {
  double h_multiplier = 5.0;   // h_n = h_multiplier * n^{-1/2}
  double inner_tol = 1e-4;
  int inner_max_iter = 2000;
  int quad_nodes = 0;
  int threads = 1;
};

inline double profile_step(const ProfileConfig& cfg, int n_subjects) {
  return cfg.h_multiplier / std::sqrt(static_cast<double>(n_subjects));
}

// Per-subject log-likelihood contributions at theta with the baselines
// profiled out (jump-only EM to convergence, warm-started at baseline_init).
std::vector<double> profile_loglik_contributions(const TransitionGraph& graph,
                                                 const std::vector<PanelSubject>& subjects,
                                                 const ParameterSet& theta,
                                                 const BaselineHazards& baseline_init,
                                                 const ProfileConfig& config);

struct CovarianceResult {
  Eigen::MatrixXd covariance;   // p x p, p = dim(beta) + dim(gamma)
  double h = 0.0;
  double condition_number = 0.0;
};

// Profile-likelihood covariance of theta-hat: cross-products of per-subject
// profile differences at forward steps h_n, inverted.
CovarianceResult covariance(const TransitionGraph& graph,
                            const std::vector<PanelSubject>& subjects,
                            const ParameterSet& theta_hat,
                            const BaselineHazards& baseline_hat,
                            const ProfileConfig& config);

struct ConfidenceInterval {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool log_scale = false;   // variance components use log-transformed intervals
  bool defined = true;
};

// Wald intervals on the estimation scale for beta and gamma; additionally one
// delta-method log-scale interval per diagonal Sigma entry, reported as
// sigma2[r]. level in (0,1).
std::vector<ConfidenceInterval> confidence_intervals(const TransitionGraph& graph,
                                                     const std::vector<std::string>& covariate_names,
                                                     const ParameterSet& theta_hat,
                                                     const Eigen::MatrixXd& covariance,
                                                     double level);

// Standard normal quantile (Wichura's AS 241, double precision).
double normal_quantile(double p);

enum class RandomEffectMode { Zero, Average };

struct CurvePoint {
  double time = 0.0;
  double value = 0.0;
};

// t -> sum of active jumps * exp(beta.X(u_s)) for u_s <= t, conditional on
// b = 0 (or with each increment averaged over b when mode=Average).
std::vector<CurvePoint> cumulative_intensity_curve(const FitResult& fit,
                                                   const TransitionGraph& graph,
                                                   const Transition& transition,
                                                   const CovariatePath& profile_x,
                                                   const CovariatePath& profile_z,
                                                   RandomEffectMode mode = RandomEffectMode::Zero,
                                                   int quad_nodes = 0);

// K x K matrix of P(state at t2 | state at t1) for the covariate profile,
// averaged over the random effect (or at b = 0).
Eigen::MatrixXd transition_probability(const FitResult& fit, const TransitionGraph& graph,
                                       const CovariatePath& profile_x,
                                       const CovariatePath& profile_z, double t1, double t2,
                                       RandomEffectMode mode = RandomEffectMode::Average,
                                       int quad_nodes = 0);

}  // namespace msmle

#endif  // MSMLE_INFERENCE_HPP
