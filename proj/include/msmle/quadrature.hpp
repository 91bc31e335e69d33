#ifndef MSMLE_QUADRATURE_HPP
#define MSMLE_QUADRATURE_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "msmle/common.hpp"

namespace msmle {

/// Tensor-product Gauss-Hermite rule expressed against the standard normal
/// measure: integral of f(x) dPhi(x) ~= sum_q weights[q] * f(nodes.col(q)).
struct QuadratureRule {
  int n_nodes_per_dim = 0;
  int dim = 0;
  Eigen::MatrixXd nodes;        // dim x n_total, standard-normal space
  Eigen::VectorXd weights;      // positive, sums to 1

  int size() const { return static_cast<int>(weights.size()); }
};

// Physicists' Hermite nodes/weights via Golub-Welsch, mapped to the
// standard-normal measure (x -> sqrt(2) x, w -> w/sqrt(pi)) and tensorized.
QuadratureRule build_rule(int n_nodes_per_dim, int dim);

// sum_q w_q f(L x_q) with L the lower Cholesky factor of sigma.
double integrate(const std::function<double(const Eigen::VectorXd&)>& f,
                 const Eigen::MatrixXd& sigma, const QuadratureRule& rule);

Eigen::MatrixXd integrate_matrix(
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& f,
    const Eigen::MatrixXd& sigma, const QuadratureRule& rule);

// Lower Cholesky factor; throws numeric_error if sigma is not positive
// definite.
Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& sigma);

}  // namespace msmle

#endif  // MSMLE_QUADRATURE_HPP
