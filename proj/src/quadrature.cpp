#include "linphase/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace linphase {

namespace {

// Orthonormal probabilists' Hermite recurrence:
//   p0 = 1, p1 = x, sqrt(k+1) p_{k+1} = x p_k - sqrt(k) p_{k-1}.
// Returns p_n(x) and p_{n-1}(x); optionally accumulates sum_{k<n} p_k(x)^2.
struct HermiteEval {
  double pn;
  double pn1;
  double sum_sq;
};

HermiteEval eval_orthonormal(int n, double x) {
  double prev = 0.0;
  double cur = 1.0;
  double sum_sq = 0.0;
  for (int k = 0; k < n; ++k) {
    sum_sq += cur * cur;
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                        std::sqrt(static_cast<double>(k + 1));
    prev = cur;
    cur = next;
  }
  return {cur, prev, sum_sq};
}

}  // namespace

Quadrature gauss_hermite(int order) {
  if (order < 1 || order > kMaxQuadratureOrder) {
    throw std::invalid_argument("gauss_hermite: order must be in [1, " +
                                std::to_string(kMaxQuadratureOrder) +
                                "], got " + std::to_string(order));
  }

  // Golub-Welsch for the initial nodes.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(std::max(order - 1, 0));
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::VectorXd roots(order);
  if (order == 1) {
    roots[0] = 0.0;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    roots = tri.eigenvalues();
  }

  // Newton polish on p_n using p_n' = sqrt(n) p_{n-1}; Christoffel weights.
  const double sqrt_n = std::sqrt(static_cast<double>(order));
  Quadrature q;
  q.nodes.resize(order);
  q.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    double x = roots[i];
    for (int it = 0; it < 8; ++it) {
      const HermiteEval e = eval_orthonormal(order, x);
      const double step = e.pn / (sqrt_n * e.pn1);
      x -= step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    q.nodes[i] = x;
    q.weights[i] = 1.0 / eval_orthonormal(order, x).sum_sq;
  }

  std::sort(q.nodes.begin(), q.nodes.end());
  // Recompute weights against the sorted order and enforce exact symmetry.
  for (int i = 0; i < order; ++i) {
    q.weights[i] = 1.0 / eval_orthonormal(order, q.nodes[i]).sum_sq;
  }
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (q.nodes[j] - q.nodes[i]);
    const double w = 0.5 * (q.weights[i] + q.weights[j]);
    q.nodes[i] = -x;
    q.nodes[j] = x;
    q.weights[i] = w;
    q.weights[j] = w;
  }
  if (order % 2 == 1) q.nodes[order / 2] = 0.0;

  double mass = 0.0;
  for (double w : q.weights) mass += w;
  for (double& w : q.weights) w /= mass;
  return q;
}

}  // namespace linphase
