#include <doctest.h>

#include <cmath>
#include <random>

#include "msmle/prob.hpp"
#include "test_helpers.hpp"

using namespace msmle;
using msmle::test::random_instance;

namespace {

// Two-state chain 1->2 with a single grid point carrying jump `lam`.
test::RandomInstance two_state_toy(double lam) {
  test::RandomInstance inst{TransitionGraph(2, {{0, 1}}), {}, {}, {}, {}};
  inst.baseline.grid = {1.0};
  inst.baseline.jumps = {{lam}};
  inst.baseline.active = {1};
  inst.subject.id = "t";
  inst.subject.exam_times = {0.0, 2.0};
  inst.subject.states = {0, 1};
  inst.subject.x_path = CovariatePath::constant(Eigen::VectorXd::Zero(1));
  inst.subject.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  inst.params = ParameterSet::zero(1, 1, 1);
  inst.b = Eigen::VectorXd::Zero(1);
  return inst;
}

}  // namespace

TEST_SUITE("prob") {

TEST_CASE("delta_lambda applies the proportional multiplier") {
  auto inst = two_state_toy(0.5);
  auto lams = delta_lambda(0, inst.graph, inst.subject, inst.b, inst.params, inst.baseline);
  CHECK(lams.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-14));

  // beta.X = ln 2 doubles the increment
  inst.params.beta[0][0] = std::log(2.0);
  inst.subject.x_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  lams = delta_lambda(0, inst.graph, inst.subject, inst.b, inst.params, inst.baseline);
  CHECK(lams.at({0, 1}) == doctest::Approx(1.0).epsilon(1e-14));

  // lambda=0.3, beta.X=0.5, b.Z=-0.2 -> 0.3 e^{0.3}
  inst = two_state_toy(0.3);
  inst.params.beta[0][0] = 0.5;
  inst.subject.x_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  inst.b = Eigen::VectorXd::Constant(1, -0.2);
  lams = delta_lambda(0, inst.graph, inst.subject, inst.b, inst.params, inst.baseline);
  CHECK(lams.at({0, 1}) == doctest::Approx(0.3 * std::exp(0.3)).epsilon(1e-14));
}

TEST_CASE("delta_lambda rejects pruned points") {
  auto inst = two_state_toy(0.5);
  inst.baseline.active[0] = 0;
  CHECK_THROWS_WITH_AS(
      delta_lambda(0, inst.graph, inst.subject, inst.b, inst.params, inst.baseline),
      "pruned index 0", Error);
}

TEST_CASE("step_matrix_poisson single-exit row") {
  auto zero = two_state_toy(0.0);
  auto M0 = step_matrix_poisson(0, zero.graph, zero.subject, zero.b, zero.params,
                                zero.baseline);
  CHECK(M0.matrix.isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-15));

  auto inst = two_state_toy(0.5);
  auto M = step_matrix_poisson(0, inst.graph, inst.subject, inst.b, inst.params,
                               inst.baseline);
  CHECK(M.matrix(0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(M.matrix(0, 1) == doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-14));
  CHECK(M.matrix(1, 0) == 0.0);
  CHECK(M.matrix(1, 1) == 1.0);
}

TEST_CASE("step_matrix_poisson multi-exit row and diagonal conventions") {
  // row 2 (internal 1) exits to states 3 and 4 with lambdas 0.2 and 0.1
  TransitionGraph graph(4, {{1, 2}, {1, 3}});
  test::RandomInstance inst{graph, {}, {}, {}, {}};
  inst.baseline.grid = {1.0};
  inst.baseline.jumps = {{0.2}, {0.1}};
  inst.baseline.active = {1};
  inst.subject.id = "t";
  inst.subject.exam_times = {0.0, 2.0};
  inst.subject.states = {1, 1};
  inst.subject.x_path = CovariatePath::constant(Eigen::VectorXd::Zero(1));
  inst.subject.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  inst.params = ParameterSet::zero(2, 1, 1);
  inst.b = Eigen::VectorXd::Zero(1);

  auto M = step_matrix_poisson(0, graph, inst.subject, inst.b, inst.params, inst.baseline,
                               StepMatrixForm::Stochastic);
  double p23 = (1.0 - std::exp(-0.2)) * std::exp(-0.1);
  double p24 = (1.0 - std::exp(-0.1)) * std::exp(-0.2);
  CHECK(M.matrix(1, 2) == doctest::Approx(p23).epsilon(1e-14));
  CHECK(M.matrix(1, 3) == doctest::Approx(p24).epsilon(1e-14));
  CHECK(M.matrix(1, 1) == doctest::Approx(1.0 - p23 - p24).epsilon(1e-14));
  for (int r = 0; r < 4; ++r)
    CHECK(M.matrix.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

  // the event-only form keeps exp(-sum) on the diagonal; the gap to the
  // stochastic diagonal is exactly the both-counts-positive mass
  auto E = step_matrix_poisson(0, graph, inst.subject, inst.b, inst.params, inst.baseline,
                               StepMatrixForm::EventOnly);
  CHECK(E.matrix(1, 1) == doctest::Approx(std::exp(-0.3)).epsilon(1e-14));
  double excluded = (1.0 - std::exp(-0.2)) * (1.0 - std::exp(-0.1));
  CHECK(M.matrix(1, 1) - E.matrix(1, 1) == doctest::Approx(excluded).epsilon(1e-12));
}

TEST_CASE("step_matrix_linear is I + dA and may lose positivity") {
  auto inst = two_state_toy(0.5);
  auto L = step_matrix_linear(0, inst.graph, inst.subject, inst.b, inst.params,
                              inst.baseline);
  CHECK(L(0, 0) == doctest::Approx(0.5));
  CHECK(L(0, 1) == doctest::Approx(0.5));

  auto big = two_state_toy(1.7);
  auto L2 = step_matrix_linear(0, big.graph, big.subject, big.b, big.params, big.baseline);
  CHECK(L2(0, 0) < 0.0);  // reported, not clamped
}

TEST_CASE("linear and poisson forms agree to O(lambda^2) on single-exit rows") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  for (int rep = 0; rep < 200; ++rep) {
    double lam = u(rng);
    auto inst = two_state_toy(lam);
    auto P = step_matrix_poisson(0, inst.graph, inst.subject, inst.b, inst.params,
                                 inst.baseline);
    auto L = step_matrix_linear(0, inst.graph, inst.subject, inst.b, inst.params,
                                inst.baseline);
    CHECK((P.matrix - L).cwiseAbs().maxCoeff() <= 2.0 * lam * lam);
  }
}

TEST_CASE("interval_matrix basics") {
  auto inst = two_state_toy(0.5);
  SUBCASE("empty interval is identity") {
    auto P = interval_matrix(1.5, 1.5, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline);
    CHECK(P.isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-15));
  }
  SUBCASE("one grid point reduces to the step matrix") {
    auto P = interval_matrix(0.0, 2.0, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline);
    auto M = step_matrix_poisson(0, inst.graph, inst.subject, inst.b, inst.params,
                                 inst.baseline);
    CHECK(P.isApprox(M.matrix, 1e-15));
  }
  SUBCASE("reversed interval throws") {
    CHECK_THROWS_AS(interval_matrix(2.0, 1.0, inst.graph, inst.subject, inst.b,
                                    inst.params, inst.baseline),
                    Error);
  }
}

TEST_CASE("progressive product: hand-computed (1,3) entry") {
  TransitionGraph graph(3, {{0, 1}, {1, 2}});
  test::RandomInstance inst{graph, {}, {}, {}, {}};
  inst.baseline.grid = {1.0, 2.0};
  inst.baseline.jumps = {{0.4, 0.0}, {0.0, 0.3}};
  inst.baseline.active = {1, 1};
  inst.subject.id = "t";
  inst.subject.exam_times = {0.0, 2.0};
  inst.subject.states = {0, 2};
  inst.subject.x_path = CovariatePath::constant(Eigen::VectorXd::Zero(1));
  inst.subject.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  inst.params = ParameterSet::zero(2, 1, 1);
  inst.b = Eigen::VectorXd::Zero(1);
  auto P = interval_matrix(0.0, 2.0, graph, inst.subject, inst.b, inst.params,
                           inst.baseline);
  double expect = (1.0 - std::exp(-0.4)) * (1.0 - std::exp(-0.3));
  CHECK(P(0, 2) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(P(0, 2) == doctest::Approx(0.08545).epsilon(1e-3));
}

TEST_CASE("enumerate_paths") {
  TransitionGraph prog(3, {{0, 1}, {1, 2}});
  SUBCASE("absorbing self path") {
    auto paths = enumerate_paths(prog, 2, 2, 3);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0] == std::vector<int>{2, 2, 2});
  }
  SUBCASE("progressive 1->3 with one interior point") {
    auto paths = enumerate_paths(prog, 0, 2, 1);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0] == std::vector<int>{1});
  }
  SUBCASE("four-state graph, DFS oracle agreement") {
    TransitionGraph g4(4, {{0, 1}, {1, 2}, {1, 3}, {2, 3}});
    auto paths = enumerate_paths(g4, 0, 3, 2);
    int count = 0;
    auto ok = [&](int a, int b) { return a == b || g4.transition_index(a, b) >= 0; };
    for (int k1 = 0; k1 < 4; ++k1)
      for (int k2 = 0; k2 < 4; ++k2)
        if (ok(0, k1) && ok(k1, k2) && ok(k2, 3)) ++count;
    CHECK(static_cast<int>(paths.size()) == count);
  }
}

TEST_CASE("oracle equals interval_matrix on randomized small instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> ks(2, 4), ms(1, 5);
  for (int rep = 0; rep < 300; ++rep) {
    auto inst = random_instance(ks(rng), ms(rng), rng);
    for (StepMatrixForm form : {StepMatrixForm::Stochastic, StepMatrixForm::EventOnly}) {
      auto P = interval_matrix(0.0, 3.0, inst.graph, inst.subject, inst.b, inst.params,
                               inst.baseline, form);
      for (int s1 = 0; s1 < inst.graph.n_states(); ++s1)
        for (int s2 = 0; s2 < inst.graph.n_states(); ++s2) {
          double oracle = interval_prob_oracle(0.0, 3.0, s1, s2, inst.graph, inst.subject,
                                               inst.b, inst.params, inst.baseline, form);
          CHECK(std::abs(P(s1, s2) - oracle) < 1e-10);
        }
    }
  }
}

TEST_CASE("oracle trivial cases and budget") {
  auto inst = two_state_toy(0.0);
  CHECK(interval_prob_oracle(0.0, 2.0, 0, 0, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline) == doctest::Approx(1.0));
  CHECK(interval_prob_oracle(0.0, 2.0, 0, 1, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline) == doctest::Approx(0.0));

  std::mt19937_64 rng(5);
  auto big = random_instance(3, 9, rng);
  CHECK_THROWS_WITH_AS(interval_prob_oracle(0.0, 3.0, 0, 1, big.graph, big.subject, big.b,
                                            big.params, big.baseline),
                       "oracle budget exceeded", Error);
}

TEST_CASE("rows are stochastic and Chapman-Kolmogorov holds on the grid") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> ks(2, 5), ms(2, 8);
  for (int rep = 0; rep < 100; ++rep) {
    auto inst = random_instance(ks(rng), ms(rng), rng);
    auto P = interval_matrix(0.0, 3.0, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline);
    for (int r = 0; r < inst.graph.n_states(); ++r) {
      CHECK(P.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (int c = 0; c < inst.graph.n_states(); ++c) CHECK(P(r, c) >= -1e-15);
    }
    double mid = inst.baseline.grid[inst.baseline.grid_size() / 2];
    auto A = interval_matrix(0.0, mid, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline);
    auto B = interval_matrix(mid, 3.0, inst.graph, inst.subject, inst.b, inst.params,
                             inst.baseline);
    CHECK((A * B - P).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pruned points act as zero jumps") {
  std::mt19937_64 rng(99);
  auto inst = random_instance(3, 5, rng);
  auto masked = inst.baseline;
  masked.active[2] = 0;
  auto zeroed = inst.baseline;
  for (auto& j : zeroed.jumps) j[2] = 0.0;
  auto P1 = interval_matrix(0.0, 3.0, inst.graph, inst.subject, inst.b, inst.params, masked);
  auto P2 = interval_matrix(0.0, 3.0, inst.graph, inst.subject, inst.b, inst.params, zeroed);
  CHECK(P1.isApprox(P2, 1e-15));
}

TEST_CASE("progressive absorption probability is monotone in each jump") {
  TransitionGraph graph(3, {{0, 1}, {1, 2}});
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0.05, 0.4);
  test::RandomInstance inst{graph, {}, {}, {}, {}};
  inst.baseline.grid = {0.5, 1.0, 1.5, 2.0};
  inst.baseline.jumps = {{u(rng), u(rng), u(rng), u(rng)},
                         {u(rng), u(rng), u(rng), u(rng)}};
  inst.baseline.active.assign(4, 1);
  inst.subject.id = "t";
  inst.subject.exam_times = {0.0, 3.0};
  inst.subject.states = {0, 0};
  inst.subject.x_path = CovariatePath::constant(Eigen::VectorXd::Zero(1));
  inst.subject.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  inst.params = ParameterSet::zero(2, 1, 1);
  inst.b = Eigen::VectorXd::Zero(1);

  double base = interval_matrix(0.0, 3.0, graph, inst.subject, inst.b, inst.params,
                                inst.baseline)(0, 2);
  for (int d = 0; d < 2; ++d)
    for (int s = 0; s < 4; ++s) {
      auto bumped = inst.baseline;
      bumped.jumps[d][s] += 0.05;
      double v = interval_matrix(0.0, 3.0, graph, inst.subject, inst.b, inst.params,
                                 bumped)(0, 2);
      CHECK(v >= base - 1e-12);
    }
}

}  // TEST_SUITE
