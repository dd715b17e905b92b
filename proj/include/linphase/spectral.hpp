#pragma once

#include <Eigen/Core>

#include <span>
#include <stdexcept>

namespace linphase {

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PowerIterationOptions {
  double tol = 1e-6;
  int max_iters = 20000;
};

// Largest singular value of a square matrix by power iteration on A^T A
// (A^2 for the symmetric kernel differences), with a deterministic seeded
// start vector plus one random restart. Converged when the eigen-residual
// |B v - lambda v| <= tol * lambda. Throws ConvergenceError otherwise.
double spectral_norm(const Eigen::MatrixXd& A, const PowerIterationOptions& opts = {});

double frobenius_norm(const Eigen::MatrixXd& A);

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// OLS of log(norm) on log(d). Needs >= 3 points and positive norms
// (std::invalid_argument otherwise).
DecayFit decay_fit(std::span<const int> ds, std::span<const double> norms);

}  // namespace linphase
