#pragma once

#include <Eigen/Core>

#include <string>
#include <string_view>

#include "linphase/covariance.hpp"
#include "linphase/quadrature.hpp"

namespace linphase {

enum class ActivationKind { erf, tanh, sigmoid, softplus, relu, leaky_relu, identity };

enum class Smoothness { smooth, piecewise_linear };

// An activation function phi with its derivative. Piecewise-linear kinds
// (relu, leaky-relu) use phi'(0) = 1.
class Activation {
 public:
  Activation() = default;

  static Activation erf() { return Activation(ActivationKind::erf, 0.0); }
  static Activation tanh() { return Activation(ActivationKind::tanh, 0.0); }
  static Activation sigmoid() { return Activation(ActivationKind::sigmoid, 0.0); }
  static Activation softplus() { return Activation(ActivationKind::softplus, 0.0); }
  static Activation relu() { return Activation(ActivationKind::relu, 0.0); }
  static Activation identity() { return Activation(ActivationKind::identity, 1.0); }
  // Throws std::invalid_argument for a non-finite slope.
  static Activation leaky_relu(double slope);

  // Accepts "erf", "tanh", "sigmoid", "softplus", "relu", "identity",
  // "leaky-relu" (slope taken from the argument).
  static Activation parse(std::string_view name, double slope = 0.01);

  ActivationKind kind() const { return kind_; }
  // Negative-side slope a; 0 for relu, 1 for identity, unused otherwise.
  double slope() const { return slope_; }
  Smoothness smoothness() const;
  bool is_piecewise_linear() const { return smoothness() == Smoothness::piecewise_linear; }
  std::string name() const;

  double value(double z) const;
  double derivative(double z) const;

 private:
  Activation(ActivationKind kind, double slope) : kind_(kind), slope_(slope) {}

  ActivationKind kind_ = ActivationKind::erf;
  double slope_ = 0.0;
};

double phi(const Activation& act, double z);
double phi_prime(const Activation& act, double z);
Eigen::MatrixXd phi(const Activation& act, const Eigen::MatrixXd& z);
Eigen::MatrixXd phi_prime(const Activation& act, const Eigen::MatrixXd& z);

// Default quadrature orders: 64 for smooth, 128 for piecewise-linear.
int default_quadrature_order(const Activation& act);

// Gaussian moments of phi under g ~ N(0,1).
struct Moments {
  double zeta = 0.0;         // E[phi'(g)]
  double g_phi_prime = 0.0;  // E[g phi'(g)], also the norm-feature slope theta1
  double theta0 = 0.0;       // E[phi(g)]
  double theta2 = 0.0;       // E[(g^3/2 - g) phi'(g)]
  double gamma = 0.0;        // E[phi'(g)^2]
  int quad_order = 0;

  double theta1() const { return g_phi_prime; }
};

// Smooth activations use Gauss-Hermite with at least kMinSmoothMomentOrder
// nodes (tanh needs it for 1e-8); quad_order reports the rule used.
// Piecewise-linear activations require order >= 64 (std::invalid_argument)
// and get the exact split-Gaussian values; the kink limits Gauss-Hermite to
// about 1e-3 there.
inline constexpr int kMinSmoothMomentOrder = 128;
Moments moments(const Activation& act, int order);
Moments moments(const Activation& act);

// Plain Gauss-Hermite moments for any activation.
Moments quadrature_moments(const Activation& act, int order);

// Closed-form moments of leaky-relu / relu / identity.
Moments piecewise_linear_moments(double slope);

// nu = E[g phi'(g)] * sqrt(Tr[Sigma^2] / d).
double nu(const Moments& m, const CovarianceSpec& sigma);

// Which factor of the activation enters a bivariate expectation.
enum class Part { value, derivative };

// A 2x2 covariance [[a11, a12], [a12, a22]].
struct Cov2 {
  double a11 = 1.0;
  double a12 = 0.0;
  double a22 = 1.0;
};

// E[f1(z1) f2(z2)] for (z1, z2) ~ N(0, lambda), f_k in {phi, phi'}.
// Smooth activations: tensor-product Gauss-Hermite after a Cholesky split,
// with a rank-1 univariate rule when lambda is singular. Piecewise-linear
// activations: exact split-Gaussian integrals. Throws std::invalid_argument
// if lambda is not PSD.
double bivariate_expectation(const Activation& act, Part f1, Part f2, const Cov2& lambda,
                             const Quadrature& rule);
double bivariate_expectation(const Activation& act, Part f1, Part f2, const Cov2& lambda,
                             int order);

// Same expectation evaluated by tensor-product quadrature regardless of
// smoothness. Used to cross-check the closed forms.
double bivariate_expectation_quadrature(const Activation& act, Part f1, Part f2,
                                        const Cov2& lambda, const Quadrature& rule);

// Phi(a, b, c) = E[phi'(z1) phi'(z2)] with Lambda = [[a, c], [c, b]]
// (a, b are variances).
double derivative_correlation(const Activation& act, double a, double b, double c,
                              const Quadrature& rule);
// Gamma(a, b, c) = E[phi(z1) phi(z2)] with Lambda = [[a^2, c], [c, b^2]]
// (a, b are standard deviations).
double value_correlation(const Activation& act, double a, double b, double c,
                         const Quadrature& rule);

// Unit-marginal versions used by the CNN kernel: P(rho) = Gamma(1, 1, rho),
// Q(rho) = Phi(1, 1, rho).
inline double cnn_p(const Activation& act, double rho, const Quadrature& rule) {
  return value_correlation(act, 1.0, 1.0, rho, rule);
}
inline double cnn_q(const Activation& act, double rho, const Quadrature& rule) {
  return derivative_correlation(act, 1.0, 1.0, rho, rule);
}

}  // namespace linphase
