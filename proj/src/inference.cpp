#include "msmle/inference.hpp"

#include <cmath>

#include "msmle/prob.hpp"

namespace msmle {

namespace {

// Flattened theta = (beta blocks in transition order, gamma).
int theta_dim(const ParameterSet& p) {
  int d = static_cast<int>(p.gamma.size());
  for (const auto& b : p.beta) d += static_cast<int>(b.size());
  return d;
}

ParameterSet perturb(const ParameterSet& p, int index, double h) {
  ParameterSet q = p;
  int k = index;
  for (auto& b : q.beta) {
    if (k < b.size()) {
      b[k] += h;
      return q;
    }
    k -= static_cast<int>(b.size());
  }
  q.gamma[k] += h;
  return q;
}

QuadratureRule profile_rule(const ProfileConfig& cfg, int d2) {
  int nodes = cfg.quad_nodes > 0 ? cfg.quad_nodes : (d2 == 1 ? 20 : 10);
  return build_rule(nodes, std::max(d2, 1));
}

}  // namespace

std::vector<double> profile_loglik_contributions(const TransitionGraph& graph,
                                                 const std::vector<PanelSubject>& subjects,
                                                 const ParameterSet& theta,
                                                 const BaselineHazards& baseline_init,
                                                 const ProfileConfig& config) {
  QuadratureRule rule = profile_rule(config, subjects[0].z_path.dim());
  ProfileFitOut out = fit_lambda_only(graph, subjects, theta, baseline_init, config.inner_tol,
                                      config.inner_max_iter, rule, config.threads);
  return out.subject_logliks;
}

CovarianceResult covariance(const TransitionGraph& graph,
                            const std::vector<PanelSubject>& subjects,
                            const ParameterSet& theta_hat,
                            const BaselineHazards& baseline_hat,
                            const ProfileConfig& config) {
  int n = static_cast<int>(subjects.size());
  int p = theta_dim(theta_hat);
  double h = profile_step(config, n);

  std::vector<std::vector<double>> pl(p + 1);
  pl[0] = profile_loglik_contributions(graph, subjects, theta_hat, baseline_hat, config);
  for (int j = 0; j < p; ++j)
    pl[j + 1] = profile_loglik_contributions(graph, subjects, perturb(theta_hat, j, h),
                                             baseline_hat, config);

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd diff(p);
    for (int j = 0; j < p; ++j) diff[j] = pl[j + 1][i] - pl[0][i];
    info.selfadjointView<Eigen::Lower>().rankUpdate(diff, 1.0);
  }
  info = info.selfadjointView<Eigen::Lower>();
  info /= h * h;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  double emin = es.eigenvalues().minCoeff();
  double emax = es.eigenvalues().maxCoeff();
  if (emin <= 1e-12 * std::max(1.0, emax)) {
    std::string dirs;
    for (int j = 0; j < p; ++j)
      if (es.eigenvalues()[j] <= 1e-12 * std::max(1.0, emax)) {
        int top;
        es.eigenvectors().col(j).cwiseAbs().maxCoeff(&top);
        dirs += (dirs.empty() ? "" : ", ") + std::to_string(top);
      }
    throw numeric_error("profile information singular (near-null directions: " + dirs + ")");
  }
  CovarianceResult out;
  out.covariance = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                   es.eigenvectors().transpose();
  out.h = h;
  out.condition_number = emax / emin;
  return out;
}

// Wichura's AS 241 (PPND16): double-precision normal quantile.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw numeric_error("quantile level outside (0,1)");
  double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
              0.24178072517745061177) * r + 1.27045825245236838258) * r +
            3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734) /
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
              0.0151986665636164571966) * r + 0.14810397642748007459) * r +
            0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              0.0012426609473880784386) * r + 0.026532189526576123093) * r +
            0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772) /
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
              1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
            0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

std::vector<ConfidenceInterval> confidence_intervals(const TransitionGraph& graph,
                                                     const std::vector<std::string>& covariate_names,
                                                     const ParameterSet& theta_hat,
                                                     const Eigen::MatrixXd& cov,
                                                     double level) {
  if (!(level > 0.0 && level < 1.0)) throw numeric_error("confidence level outside (0,1)");
  double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<std::string> names =
      parameter_names(graph, covariate_names, theta_hat.re_dim());
  std::vector<ConfidenceInterval> out;

  int k = 0;
  for (const auto& beta : theta_hat.beta)
    for (int c = 0; c < beta.size(); ++c) {
      ConfidenceInterval ci;
      ci.name = names[k];
      ci.estimate = beta[c];
      ci.std_error = std::sqrt(std::max(0.0, cov(k, k)));
      ci.lower = ci.estimate - z * ci.std_error;
      ci.upper = ci.estimate + z * ci.std_error;
      out.push_back(ci);
      ++k;
    }
  for (int c = 0; c < theta_hat.gamma.size(); ++c) {
    ConfidenceInterval ci;
    ci.name = names[k];
    ci.estimate = theta_hat.gamma[c];
    ci.std_error = std::sqrt(std::max(0.0, cov(k, k)));
    ci.lower = ci.estimate - z * ci.std_error;
    ci.upper = ci.estimate + z * ci.std_error;
    out.push_back(ci);
    ++k;
  }

  // Diagonal Sigma entries on the log scale via the delta method.
  int d2 = theta_hat.re_dim();
  int gamma_offset = k - static_cast<int>(theta_hat.gamma.size());
  Eigen::MatrixXd sigma = theta_hat.sigma();
  Eigen::MatrixXd L = theta_hat.cholesky_factor();
  for (int r = 0; r < d2; ++r) {
    ConfidenceInterval ci;
    ci.name = "sigma2[" + std::to_string(r + 1) + "]";
    ci.log_scale = true;
    ci.estimate = sigma(r, r);
    // sigma_rr = sum_{j<=r} L(r,j)^2 with L(i,i) = exp(gamma_i) and the
    // strictly-lower entries packed row-major after the d2 diagonals.
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_hat.gamma.size());
    grad[r] = 2.0 * L(r, r) * L(r, r);
    for (int j = 0; j < r; ++j) grad[d2 + r * (r - 1) / 2 + j] = 2.0 * L(r, j);
    Eigen::MatrixXd gcov = cov.block(gamma_offset, gamma_offset, theta_hat.gamma.size(),
                                     theta_hat.gamma.size());
    double var = grad.dot(gcov * grad);
    ci.std_error = std::sqrt(std::max(0.0, var));
    if (ci.estimate <= 0.0) {
      ci.defined = false;
    } else {
      double half = z * ci.std_error / ci.estimate;
      ci.lower = ci.estimate * std::exp(-half);
      ci.upper = ci.estimate * std::exp(half);
    }
    out.push_back(ci);
  }
  return out;
}

std::vector<CurvePoint> cumulative_intensity_curve(const FitResult& fit,
                                                   const TransitionGraph& graph,
                                                   const Transition& transition,
                                                   const CovariatePath& profile_x,
                                                   const CovariatePath& profile_z,
                                                   RandomEffectMode mode, int quad_nodes) {
  int d = graph.transition_index(transition.from, transition.to);
  if (d < 0) throw data_error("unknown transition " + transition_label(transition));
  const BaselineHazards& base = fit.baseline;
  const Eigen::VectorXd& beta = fit.theta.beta[d];

  QuadratureRule rule;
  Eigen::MatrixXd L;
  if (mode == RandomEffectMode::Average) {
    int d2 = fit.theta.re_dim();
    rule = build_rule(quad_nodes > 0 ? quad_nodes : (d2 == 1 ? 20 : 10), d2);
    L = cholesky_or_throw(fit.theta.sigma());
  }

  std::vector<CurvePoint> out;
  double acc = 0.0;
  for (int s = 0; s < base.grid_size(); ++s) {
    if (!base.active[s]) continue;
    double u = base.grid[s];
    double inc = base.jumps[d][s] * std::exp(beta.dot(profile_x.at(u)));
    if (mode == RandomEffectMode::Average) {
      Eigen::VectorXd z = profile_z.at(u);
      double avg = 0.0;
      for (int q = 0; q < rule.size(); ++q)
        avg += rule.weights[q] * std::exp((L * rule.nodes.col(q)).dot(z));
      inc *= avg;
    }
    acc += inc;
    out.push_back({u, acc});
  }
  return out;
}

Eigen::MatrixXd transition_probability(const FitResult& fit, const TransitionGraph& graph,
                                       const CovariatePath& profile_x,
                                       const CovariatePath& profile_z, double t1, double t2,
                                       RandomEffectMode mode, int quad_nodes) {
  if (!fit.baseline.grid.empty() && t2 > fit.baseline.grid.back() + 1e-12)
    throw data_error("prediction end time beyond the fitted grid");
  PanelSubject profile;
  profile.id = "profile";
  profile.exam_times = {0.0};
  profile.states = {0};
  profile.x_path = profile_x;
  profile.z_path = profile_z;

  int d2 = fit.theta.re_dim();
  if (mode == RandomEffectMode::Zero)
    return interval_matrix(t1, t2, graph, profile, Eigen::VectorXd::Zero(d2), fit.theta,
                           fit.baseline);

  QuadratureRule rule = build_rule(quad_nodes > 0 ? quad_nodes : (d2 == 1 ? 20 : 10), d2);
  return integrate_matrix(
      [&](const Eigen::VectorXd& b) {
        return interval_matrix(t1, t2, graph, profile, b, fit.theta, fit.baseline);
      },
      fit.theta.sigma(), rule);
}

}  // namespace msmle
