#include <doctest.h>

#include <cmath>

#include "msmle/quadrature.hpp"

using namespace msmle;

namespace {

// E[x^k] for the standard normal: 0 for odd k, (k-1)!! for even k.
double normal_moment(int k) {
  if (k % 2 == 1) return 0.0;
  double v = 1.0;
  for (int j = k - 1; j > 1; j -= 2) v *= j;
  return v;
}

}  // namespace

TEST_SUITE("quadrature") {

TEST_CASE("one node is the mean rule") {
  QuadratureRule r = build_rule(1, 1);
  REQUIRE(r.size() == 1);
  CHECK(r.nodes(0, 0) == doctest::Approx(0.0));
  CHECK(r.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("two nodes sit at +-1 with weight one half") {
  QuadratureRule r = build_rule(2, 1);
  REQUIRE(r.size() == 2);
  std::vector<double> nodes{r.nodes(0, 0), r.nodes(0, 1)};
  std::sort(nodes.begin(), nodes.end());
  CHECK(nodes[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(nodes[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("weights sum to one and rules are polynomially exact") {
  for (int n : {1, 2, 3, 5, 8, 20, 40}) {
    QuadratureRule r = build_rule(n, 1);
    CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double est = 0.0;
      for (int q = 0; q < r.size(); ++q) est += r.weights[q] * std::pow(r.nodes(0, q), k);
      CHECK(est == doctest::Approx(normal_moment(k)).epsilon(1e-9).scale(1.0 + normal_moment(k)));
    }
  }
}

TEST_CASE("bad arguments") {
  CHECK_THROWS_AS(build_rule(0, 1), Error);
  CHECK_THROWS_AS(build_rule(101, 1), Error);
  CHECK_THROWS_AS(build_rule(3, 0), Error);
}

TEST_CASE("integrate against a scalar variance") {
  QuadratureRule r = build_rule(20, 1);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(1, 1, 0.8);
  CHECK(integrate([](const Eigen::VectorXd&) { return 1.0; }, sigma, r) ==
        doctest::Approx(1.0).epsilon(1e-13));
  CHECK(integrate([](const Eigen::VectorXd& b) { return b[0] * b[0]; }, sigma, r) ==
        doctest::Approx(0.8).epsilon(1e-12));
  // lognormal mean: E e^b = e^{sigma2/2}
  CHECK(integrate([](const Eigen::VectorXd& b) { return std::exp(b[0]); }, sigma, r) ==
        doctest::Approx(std::exp(0.4)).epsilon(1e-10));
  // n=2 already integrates b^2 exactly
  QuadratureRule r2 = build_rule(2, 1);
  CHECK(integrate([](const Eigen::VectorXd& b) { return b[0] * b[0]; }, sigma, r2) ==
        doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("affine invariance recovers the covariance in two dimensions") {
  QuadratureRule r = build_rule(6, 2);
  CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd sigma(2, 2);
  sigma << 1.2, 0.5, 0.5, 0.7;
  Eigen::MatrixXd mom = integrate_matrix(
      [](const Eigen::VectorXd& b) -> Eigen::MatrixXd { return b * b.transpose(); }, sigma,
      r);
  CHECK(mom.isApprox(sigma, 1e-10));
}

TEST_CASE("non-positive-definite covariance is rejected") {
  QuadratureRule r = build_rule(3, 2);
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(integrate([](const Eigen::VectorXd&) { return 1.0; }, bad, r), Error);
}

}  // TEST_SUITE
