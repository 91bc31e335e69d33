#include "msmle/quadrature.hpp"

#include <cmath>

namespace msmle {

QuadratureRule build_rule(int n_nodes_per_dim, int dim) {
  if (n_nodes_per_dim < 1 || n_nodes_per_dim > 100)
    throw numeric_error("quadrature nodes per dimension must be in 1..100");
  if (dim < 1) throw numeric_error("quadrature dimension must be positive");

  // Golub-Welsch on the Hermite Jacobi matrix (weight e^{-x^2}): zero
  // diagonal, off-diagonal sqrt(i/2).
  int n = n_nodes_per_dim;
  Eigen::VectorXd x1(n), w1(n);
  if (n == 1) {
    x1[0] = 0.0;
    w1[0] = 1.0;
  } else {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
      double c = std::sqrt(i / 2.0);
      J(i, i - 1) = c;
      J(i - 1, i) = c;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success) throw numeric_error("Hermite node computation failed");
    for (int i = 0; i < n; ++i) {
      x1[i] = es.eigenvalues()[i];
      double v = es.eigenvectors()(0, i);
      w1[i] = v * v;  // physicists' weight / sqrt(pi)
    }
    w1 /= w1.sum();
  }
  // Map to the standard-normal measure.
  x1 *= std::sqrt(2.0);

  QuadratureRule rule;
  rule.n_nodes_per_dim = n;
  rule.dim = dim;
  int total = 1;
  for (int d = 0; d < dim; ++d) total *= n;
  rule.nodes.resize(dim, total);
  rule.weights.resize(total);
  for (int q = 0; q < total; ++q) {
    int rest = q;
    double w = 1.0;
    for (int d = 0; d < dim; ++d) {
      int idx = rest % n;
      rest /= n;
      rule.nodes(d, q) = x1[idx];
      w *= w1[idx];
    }
    rule.weights[q] = w;
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw numeric_error("covariance is not positive definite");
  return llt.matrixL();
}

double integrate(const std::function<double(const Eigen::VectorXd&)>& f,
                 const Eigen::MatrixXd& sigma, const QuadratureRule& rule) {
  Eigen::MatrixXd L = cholesky_or_throw(sigma);
  double sum = 0.0;
  for (int q = 0; q < rule.size(); ++q)
    sum += rule.weights[q] * f(L * rule.nodes.col(q));
  return sum;
}

Eigen::MatrixXd integrate_matrix(
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& f,
    const Eigen::MatrixXd& sigma, const QuadratureRule& rule) {
  Eigen::MatrixXd L = cholesky_or_throw(sigma);
  Eigen::MatrixXd sum;
  for (int q = 0; q < rule.size(); ++q) {
    Eigen::MatrixXd v = f(L * rule.nodes.col(q));
    if (q == 0)
      sum = rule.weights[q] * v;
    else
      sum += rule.weights[q] * v;
  }
  return sum;
}

}  // namespace msmle
