#ifndef MSMLE_TESTS_EW_ORACLE_HPP
#define MSMLE_TESTS_EW_ORACLE_HPP

#include <cmath>
#include <vector>

#include "msmle/model.hpp"

namespace msmle::test {

// Brute-force conditional expectation E(W_target | observed pair, b) for one
// examination interval, by enumerating state paths and summing truncated
// Poisson weights (W <= wmax) over the latent count configurations consistent
// with each path. Configurations in which two or more counts out of the
// occupied state are positive are excluded from the conditioning event.
// Deliberately matrix-free; the only shared ingredient with the library is
// the definition of lambda_ijks.
class ExpectedWOracle {
 public:
  ExpectedWOracle(const TransitionGraph& graph, const PanelSubject& subject,
                  const Eigen::VectorXd& b, const ParameterSet& params,
                  const BaselineHazards& baseline, int interval, int wmax = 30)
      : graph_(graph), wmax_(wmax) {
    double t1 = subject.exam_times[interval - 1];
    double t2 = subject.exam_times[interval];
    s_from_ = subject.states[interval - 1];
    s_to_ = subject.states[interval];
    for (int s = 0; s < baseline.grid_size(); ++s) {
      double u = baseline.grid[s];
      if (u <= t1 || u > t2 || !baseline.active[s]) continue;
      points_.push_back(s);
      Eigen::VectorXd x = subject.x_path.at(u);
      Eigen::VectorXd z = subject.z_path.at(u);
      std::vector<double> lam(graph.n_transitions());
      for (int d = 0; d < graph.n_transitions(); ++d)
        lam[d] = baseline.jumps[d][s] *
                 std::exp(params.beta[d].dot(x) + b.dot(z));
      lambdas_.push_back(lam);
    }
  }

  int n_points() const { return static_cast<int>(points_.size()); }
  int grid_index(int step) const { return points_[step]; }

  // step in 0..n_points()-1, target a transition index.
  double expected_w(int step, int target) const {
    double num = 0.0, den = 0.0;
    walk(0, s_from_, 1.0, -1.0, step, target, &num, &den);
    return num / den;
  }

  double interval_prob() const {
    double num = 0.0, den = 0.0;
    walk(0, s_from_, 1.0, -1.0, -1, -1, &num, &den);
    return den;
  }

 private:
  // prob: product of step-event probabilities so far; e_factor < 0 until the
  // target step is passed, then the path's E[W * 1(step events)] accumulator.
  void walk(int step, int state, double prob, double e_factor, int target_step,
            int target, double* num, double* den) const {
    if (step == n_points()) {
      if (state != s_to_) return;
      *den += prob;
      if (target_step >= 0) *num += (e_factor >= 0.0 ? e_factor : 0.0) * prob;
      return;
    }
    const std::vector<double>& lam = lambdas_[step];
    const std::vector<int>& exits = graph_.exits(state);
    int tj = target >= 0 ? graph_.transitions()[target].from : -1;
    int tk = target >= 0 ? graph_.transitions()[target].to : -1;

    // stay: every count out of `state` is zero
    {
      double p = 1.0;
      for (int d : exits) p *= std::exp(-lam[d]);
      double ef = e_factor;
      if (step == target_step)
        ef = state == tj ? 0.0 : trunc_mean(lam[target]);
      walk(step + 1, state, prob * p, ef, target_step, target, num, den);
    }
    // move through one transition: that count positive, the rest zero
    for (int d : exits) {
      if (lam[d] <= 0.0) continue;
      double rest = 1.0;
      for (int d2 : exits)
        if (d2 != d) rest *= std::exp(-lam[d2]);
      double p = trunc_tail(lam[d]) * rest;
      double ef = e_factor;
      if (step == target_step) {
        if (state != tj)
          ef = trunc_mean(lam[target]);
        else if (d == target)
          // replace P(W>0) by E[W 1(W>0)] within this step's factor
          ef = trunc_mean(lam[d]) / trunc_tail(lam[d]);
        else
          ef = 0.0;  // W_target forced to zero by the move event
      }
      walk(step + 1, graph_.transitions()[d].to, prob * p, ef, target_step, target, num,
           den);
    }
  }

  double pmf(int w, double lam) const {
    double v = std::exp(-lam);
    for (int i = 1; i <= w; ++i) v *= lam / i;
    return v;
  }
  // P(1 <= W <= wmax)
  double trunc_tail(double lam) const {
    double s = 0.0;
    for (int w = 1; w <= wmax_; ++w) s += pmf(w, lam);
    return s;
  }
  // E[W 1(W <= wmax)]
  double trunc_mean(double lam) const {
    double s = 0.0;
    for (int w = 1; w <= wmax_; ++w) s += w * pmf(w, lam);
    return s;
  }

  const TransitionGraph& graph_;
  int wmax_;
  int s_from_ = 0, s_to_ = 0;
  std::vector<int> points_;
  std::vector<std::vector<double>> lambdas_;
};

}  // namespace msmle::test

#endif
