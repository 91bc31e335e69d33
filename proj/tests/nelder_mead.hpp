#ifndef MSMLE_TESTS_NELDER_MEAD_HPP
#define MSMLE_TESTS_NELDER_MEAD_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

namespace msmle::test {

// Plain Nelder-Mead maximizer for the small-instance likelihood oracles.
inline double nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                              Eigen::VectorXd x0, double step = 0.5, int max_iter = 4000,
                              double ftol = 1e-10) {
  int n = static_cast<int>(x0.size());
  struct Vertex {
    Eigen::VectorXd x;
    double v;
  };
  std::vector<Vertex> simplex;
  simplex.push_back({x0, f(x0)});
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = x0;
    x[i] += step;
    simplex.push_back({x, f(x)});
  }
  auto by_value = [](const Vertex& a, const Vertex& b) { return a.v > b.v; };
  for (int it = 0; it < max_iter; ++it) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    if (simplex.front().v - simplex.back().v < ftol) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += simplex[i].x;
    centroid /= n;
    const Vertex& worst = simplex.back();
    Eigen::VectorXd xr = centroid + (centroid - worst.x);
    double vr = f(xr);
    if (vr > simplex.front().v) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst.x);
      double ve = f(xe);
      simplex.back() = ve > vr ? Vertex{xe, ve} : Vertex{xr, vr};
    } else if (vr > simplex[n - 1].v) {
      simplex.back() = {xr, vr};
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (worst.x - centroid);
      double vc = f(xc);
      if (vc > worst.v) {
        simplex.back() = {xc, vc};
      } else {
        for (int i = 1; i <= n; ++i) {
          simplex[i].x = simplex[0].x + 0.5 * (simplex[i].x - simplex[0].x);
          simplex[i].v = f(simplex[i].x);
        }
      }
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);
  return simplex.front().v;
}

}  // namespace msmle::test

#endif
