#ifndef MSMLE_TEST_HELPERS_HPP
#define MSMLE_TEST_HELPERS_HPP

#include <random>
#include <vector>

#include "msmle/model.hpp"

namespace msmle::test {

// Random DAG on K states over the natural order; always keeps 0->1 so at
// least one transition exists.
inline TransitionGraph random_dag(int K, std::mt19937_64& rng, double edge_prob = 0.55) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Transition> trans;
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b)
      if ((a == 0 && b == 1) || u(rng) < edge_prob) trans.push_back({a, b});
  return TransitionGraph(K, trans);
}

struct RandomInstance {
  TransitionGraph graph;
  PanelSubject subject;
  ParameterSet params;
  BaselineHazards baseline;
  Eigen::VectorXd b;
};

// Baseline grid with `m` points in (0, horizon), random jumps in (0, max_jump]
// (a few forced to zero), constant covariates, random beta and scalar random
// effect value.
inline RandomInstance random_instance(int K, int m, std::mt19937_64& rng,
                                      double max_jump = 0.5, double horizon = 3.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomInstance inst{random_dag(K, rng), {}, {}, {}, {}};
  std::vector<double> grid;
  for (int s = 0; s < m; ++s) grid.push_back(horizon * (s + u(rng)) / m);
  inst.baseline.grid = grid;
  int nD = inst.graph.n_transitions();
  inst.baseline.jumps.assign(nD, std::vector<double>(m, 0.0));
  inst.baseline.active.assign(m, 1);
  for (int d = 0; d < nD; ++d)
    for (int s = 0; s < m; ++s)
      inst.baseline.jumps[d][s] = u(rng) < 0.15 ? 0.0 : max_jump * u(rng);

  inst.subject.id = "t";
  inst.subject.exam_times = {0.0, horizon};
  inst.subject.states = {0, 0};
  Eigen::VectorXd x(2);
  x << (u(rng) < 0.5 ? 0.0 : 1.0), u(rng);
  inst.subject.x_path = CovariatePath::constant(x);
  inst.subject.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));

  inst.params = ParameterSet::zero(nD, 2, 1);
  for (int d = 0; d < nD; ++d) {
    inst.params.beta[d][0] = 0.8 * (u(rng) - 0.5);
    inst.params.beta[d][1] = 0.8 * (u(rng) - 0.5);
  }
  inst.b = Eigen::VectorXd::Constant(1, u(rng) - 0.5);
  return inst;
}

}  // namespace msmle::test

#endif
