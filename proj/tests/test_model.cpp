#include <doctest.h>

#include <algorithm>
#include <random>

#include "msmle/model.hpp"
#include "msmle/simulate.hpp"
#include "test_helpers.hpp"

using namespace msmle;

TEST_SUITE("model") {

TEST_CASE("graph construction and validation") {
  TransitionGraph g(3, {{0, 1}, {1, 2}});
  CHECK(g.is_absorbing(2));
  CHECK_FALSE(g.is_absorbing(0));
  CHECK(g.reachable(0, 2));
  CHECK_FALSE(g.reachable(2, 0));
  CHECK(g.transition_index(0, 1) == 0);
  CHECK(g.transition_index(1, 0) == -1);

  CHECK_THROWS_AS(TransitionGraph(2, {{0, 1}, {1, 0}}), Error);  // cycle
  CHECK_THROWS_AS(TransitionGraph(2, {{0, 1}, {0, 1}}), Error);  // duplicate
  CHECK_THROWS_AS(TransitionGraph(2, {{0, 0}}), Error);          // self loop
  CHECK_THROWS_AS(TransitionGraph(2, {{0, 2}}), Error);          // out of range
}

TEST_CASE("reachability equals brute-force DFS closure on random graphs") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    std::uniform_int_distribution<int> ks(2, 6);
    TransitionGraph g = test::random_dag(ks(rng), rng);
    int K = g.n_states();
    // plain adjacency DFS, independent of the library's closure
    std::vector<std::vector<int>> adj(K);
    for (const auto& t : g.transitions()) adj[t.from].push_back(t.to);
    for (int s = 0; s < K; ++s) {
      std::vector<char> seen(K, 0);
      std::vector<int> stack{s};
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (seen[v]) continue;
        seen[v] = 1;
        for (int w : adj[v]) stack.push_back(w);
      }
      for (int t = 0; t < K; ++t) CHECK(g.reachable(s, t) == static_cast<bool>(seen[t]));
    }
  }
}

TEST_CASE("validate_panel") {
  TransitionGraph prog(3, {{0, 1}, {1, 2}});
  PanelSubject s;
  s.id = "a";
  s.exam_times = {0.0, 1.0, 2.0};
  s.states = {0, 1, 2};
  s.x_path = CovariatePath::constant(Eigen::VectorXd::Zero(1));
  s.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  CHECK(validate_panel(prog, s).empty());

  SUBCASE("backward move is infeasible") {
    s.exam_times = {0.0, 1.0};
    s.states = {1, 0};
    auto v = validate_panel(prog, s);
    REQUIRE(v.size() == 1);
    CHECK(v[0].exam_index == 1);
    CHECK(v[0].rule == "infeasible-pair");
  }
  SUBCASE("skipping a state is fine when a path exists") {
    TransitionGraph g4(4, {{0, 1}, {1, 2}, {1, 3}, {2, 3}});
    s.exam_times = {0.0, 1.0};
    s.states = {0, 3};  // via 1->2->4 or 1->2, 2->4
    CHECK(validate_panel(g4, s).empty());
  }
  SUBCASE("baseline time and monotonicity") {
    s.exam_times = {0.5, 1.0};
    s.states = {0, 1};
    auto v = validate_panel(prog, s);
    CHECK(!v.empty());
    s.exam_times = {0.0, 1.0, 1.0};
    s.states = {0, 1, 1};
    CHECK(!validate_panel(prog, s).empty());
  }
}

TEST_CASE("build_grid") {
  auto make = [](std::vector<double> times) {
    PanelSubject s;
    s.id = "x";
    s.exam_times = std::move(times);
    s.states.assign(s.exam_times.size(), 0);
    s.x_path = CovariatePath::constant(Eigen::VectorXd::Zero(1));
    s.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
    return s;
  };
  SUBCASE("union of positive times") {
    auto b = build_grid({make({0, 1, 2}), make({0, 2, 3})}, 2);
    CHECK(b.grid == std::vector<double>{1, 2, 3});
    CHECK(b.jumps.size() == 2);
    CHECK(b.n_active() == 3);
  }
  SUBCASE("single subject") {
    auto b = build_grid({make({0, 0.5})}, 1);
    CHECK(b.grid == std::vector<double>{0.5});
  }
  SUBCASE("empty input") { CHECK_THROWS_WITH_AS(build_grid({}, 1), "no observations", Error); }
  SUBCASE("permutation invariance") {
    auto s1 = make({0, 1, 2.5});
    auto s2 = make({0, 0.7, 2});
    auto a = build_grid({s1, s2}, 1);
    auto b = build_grid({s2, s1}, 1);
    CHECK(a.grid == b.grid);
  }
  SUBCASE("simulated dataset grid stays within the study window") {
    auto subjects = simulate_dataset(three_state_scenario(), 400, 99);
    size_t total_exams = 0;
    for (const auto& s : subjects) total_exams += s.exam_times.size() - 1;
    auto b = build_grid(subjects, 2);
    CHECK(b.grid.size() <= total_exams);
    CHECK(b.grid.front() > 0.0);
    CHECK(b.grid.back() <= 3.0);
  }
}

TEST_CASE("log-Cholesky parameterization round trip") {
  SUBCASE("scalar case: sigma2 = exp(2 gamma)") {
    ParameterSet p = ParameterSet::zero(1, 1, 1);
    p.gamma[0] = 0.3;
    CHECK(p.sigma()(0, 0) == doctest::Approx(std::exp(0.6)).epsilon(1e-14));
  }
  SUBCASE("2x2 round trip") {
    Eigen::MatrixXd sigma(2, 2);
    sigma << 1.3, -0.4, -0.4, 0.9;
    Eigen::VectorXd g = ParameterSet::gamma_from_sigma(sigma);
    ParameterSet p = ParameterSet::zero(1, 1, 2);
    p.gamma = g;
    CHECK(p.sigma().isApprox(sigma, 1e-12));
    CHECK(p.re_dim() == 2);
  }
  SUBCASE("non-PD rejected") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(ParameterSet::gamma_from_sigma(bad), Error);
  }
}

TEST_CASE("covariate path carry-forward evaluation") {
  Eigen::MatrixXd vals(1, 3);
  vals << 10.0, 20.0, 30.0;
  CovariatePath p({0.0, 1.0, 2.0}, vals);
  CHECK(p.at(0.0)[0] == 10.0);
  CHECK(p.at(0.99)[0] == 10.0);
  CHECK(p.at(1.0)[0] == 20.0);  // value at a breakpoint is that breakpoint's
  CHECK(p.at(5.0)[0] == 30.0);
  CHECK_FALSE(p.is_constant());
  CHECK(CovariatePath::constant(Eigen::VectorXd::Ones(2)).is_constant());
}

TEST_CASE("baseline cumulative sums active jumps only") {
  BaselineHazards b;
  b.grid = {0.5, 1.0, 1.5};
  b.jumps = {{0.1, 0.2, 0.3}};
  b.active = {1, 0, 1};
  CHECK(b.cumulative(0, 0.4) == 0.0);
  CHECK(b.cumulative(0, 1.2) == doctest::Approx(0.1));
  CHECK(b.cumulative(0, 2.0) == doctest::Approx(0.4));
}

}  // TEST_SUITE
