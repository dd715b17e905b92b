#pragma once

#include <vector>

namespace linphase {

// Gauss-Hermite rule for the standard normal measure N(0,1): weights sum to 1
// and the rule is exact for polynomials of degree <= 2*order-1. Nodes are
// sorted ascending and exactly antisymmetric (x[i] == -x[n-1-i]); weights are
// exactly symmetric.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  int order() const { return static_cast<int>(nodes.size()); }

  // E[f(g)] with the symmetric pairs summed first, so odd integrands
  // evaluate to exactly zero. Normalized by the weight sum, so f == 1 gives
  // exactly 1.
  template <typename F>
  double expect(F&& f) const {
    const int n = order();
    double acc = 0.0;
    double mass = 0.0;
    for (int i = 0; i < n / 2; ++i) {
      const int j = n - 1 - i;
      acc += weights[i] * f(nodes[i]) + weights[j] * f(nodes[j]);
      mass += weights[i] + weights[j];
    }
    if (n % 2 == 1) {
      acc += weights[n / 2] * f(nodes[n / 2]);
      mass += weights[n / 2];
    }
    return acc / mass;
  }
};

inline constexpr int kMaxQuadratureOrder = 256;

// Throws std::invalid_argument unless 1 <= order <= 256.
Quadrature gauss_hermite(int order);

}  // namespace linphase
