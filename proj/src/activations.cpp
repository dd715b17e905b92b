#include "linphase/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace linphase {

namespace {

constexpr double kTwoOverSqrtPi = std::numbers::inv_sqrtpi * 2.0;

double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double evaluate(const Activation& act, Part part, double z) {
  return part == Part::value ? act.value(z) : act.derivative(z);
}

// Closed forms for phi(z) = A z + B |z| with A = (1+a)/2, B = (1-a)/2.
double piecewise_linear_bivariate(double slope, Part f1, Part f2, const Cov2& lam) {
  const double A = 0.5 * (1.0 + slope);
  const double B = 0.5 * (1.0 - slope);
  const double s1 = std::sqrt(lam.a11);
  const double s2 = std::sqrt(lam.a22);
  const double sqrt_2_over_pi = std::sqrt(2.0 / std::numbers::pi);

  // A zero-variance coordinate is the constant 0, where phi = 0, phi' = 1.
  auto marginal = [&](Part f, double s) {
    if (s == 0.0) return f == Part::value ? 0.0 : 1.0;
    return f == Part::value ? B * s * sqrt_2_over_pi : A;
  };
  if (s1 == 0.0) return (f1 == Part::value ? 0.0 : 1.0) * marginal(f2, s2);
  if (s2 == 0.0) return (f2 == Part::value ? 0.0 : 1.0) * marginal(f1, s1);

  const double rho = std::clamp(lam.a12 / (s1 * s2), -1.0, 1.0);
  const double asin_rho = std::asin(rho);
  if (f1 == Part::derivative && f2 == Part::derivative) {
    return A * A + B * B * (2.0 / std::numbers::pi) * asin_rho;
  }
  if (f1 == Part::value && f2 == Part::value) {
    return A * A * lam.a12 + B * B * (2.0 / std::numbers::pi) * s1 * s2 *
                                 (std::sqrt(std::max(0.0, 1.0 - rho * rho)) + rho * asin_rho);
  }
  const double s_value = f1 == Part::value ? s1 : s2;
  return A * B * s_value * sqrt_2_over_pi * (1.0 + rho);
}

void check_psd(const Cov2& lam) {
  const bool ok = std::isfinite(lam.a11) && std::isfinite(lam.a22) && std::isfinite(lam.a12) &&
                  lam.a11 >= 0.0 && lam.a22 >= 0.0 &&
                  lam.a12 * lam.a12 <= lam.a11 * lam.a22 * (1.0 + 1e-10) + 1e-300;
  if (!ok) {
    throw std::invalid_argument("bivariate_expectation: covariance [[" +
                                std::to_string(lam.a11) + ", " + std::to_string(lam.a12) +
                                "], [" + std::to_string(lam.a12) + ", " +
                                std::to_string(lam.a22) + "]] is not positive semidefinite");
  }
}

}  // namespace

Activation Activation::leaky_relu(double slope) {
  if (!std::isfinite(slope)) {
    throw std::invalid_argument("leaky-relu slope must be finite");
  }
  return Activation(ActivationKind::leaky_relu, slope);
}

Activation Activation::parse(std::string_view name, double slope) {
  if (name == "erf") return erf();
  if (name == "tanh") return tanh();
  if (name == "sigmoid") return sigmoid();
  if (name == "softplus") return softplus();
  if (name == "relu") return relu();
  if (name == "identity") return identity();
  if (name == "leaky-relu" || name == "leaky_relu") return leaky_relu(slope);
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Smoothness Activation::smoothness() const {
  switch (kind_) {
    case ActivationKind::relu:
    case ActivationKind::leaky_relu:
      return Smoothness::piecewise_linear;
    default:
      return Smoothness::smooth;
  }
}

std::string Activation::name() const {
  switch (kind_) {
    case ActivationKind::erf: return "erf";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::softplus: return "softplus";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky-relu";
    case ActivationKind::identity: return "identity";
  }
  return "unknown";
}

double Activation::value(double z) const {
  switch (kind_) {
    case ActivationKind::erf: return std::erf(z);
    case ActivationKind::tanh: return std::tanh(z);
    case ActivationKind::sigmoid: return sigmoid_value(z);
    case ActivationKind::softplus:
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    case ActivationKind::relu: return z >= 0.0 ? z : 0.0;
    case ActivationKind::leaky_relu: return z >= 0.0 ? z : slope_ * z;
    case ActivationKind::identity: return z;
  }
  return 0.0;
}

double Activation::derivative(double z) const {
  switch (kind_) {
    case ActivationKind::erf: return kTwoOverSqrtPi * std::exp(-z * z);
    case ActivationKind::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActivationKind::sigmoid: {
      const double s = sigmoid_value(z);
      return s * (1.0 - s);
    }
    case ActivationKind::softplus: return sigmoid_value(z);
    case ActivationKind::relu: return z >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::leaky_relu: return z >= 0.0 ? 1.0 : slope_;
    case ActivationKind::identity: return 1.0;
  }
  return 0.0;
}

double phi(const Activation& act, double z) { return act.value(z); }
double phi_prime(const Activation& act, double z) { return act.derivative(z); }

Eigen::MatrixXd phi(const Activation& act, const Eigen::MatrixXd& z) {
  return z.unaryExpr([&act](double v) { return act.value(v); });
}

Eigen::MatrixXd phi_prime(const Activation& act, const Eigen::MatrixXd& z) {
  return z.unaryExpr([&act](double v) { return act.derivative(v); });
}

int default_quadrature_order(const Activation& act) {
  return act.is_piecewise_linear() ? 128 : 64;
}

Moments moments(const Activation& act, int order) {
  if (act.is_piecewise_linear() && order < 64) {
    throw std::invalid_argument("moments: piecewise-linear activations need order >= 64, got " +
                                std::to_string(order));
  }
  if (act.is_piecewise_linear()) {
    Moments m = piecewise_linear_moments(act.slope());
    m.quad_order = order;
    return m;
  }
  return quadrature_moments(act, std::max(order, kMinSmoothMomentOrder));
}

Moments quadrature_moments(const Activation& act, int order) {
  const Quadrature rule = gauss_hermite(order);
  Moments m;
  m.quad_order = order;
  m.zeta = rule.expect([&](double g) { return act.derivative(g); });
  m.g_phi_prime = rule.expect([&](double g) { return g * act.derivative(g); });
  m.theta0 = rule.expect([&](double g) { return act.value(g); });
  m.theta2 = rule.expect([&](double g) { return (0.5 * g * g * g - g) * act.derivative(g); });
  m.gamma = rule.expect([&](double g) {
    const double dp = act.derivative(g);
    return dp * dp;
  });
  return m;
}

Moments moments(const Activation& act) { return moments(act, default_quadrature_order(act)); }

Moments piecewise_linear_moments(double slope) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Moments m;
  m.zeta = 0.5 * (1.0 + slope);
  m.g_phi_prime = (1.0 - slope) * inv_sqrt_2pi;
  m.theta0 = (1.0 - slope) * inv_sqrt_2pi;
  // E[g^3 1{g>0}] = 2 E[g 1{g>0}], so each half-line contributes zero.
  m.theta2 = 0.0;
  m.gamma = 0.5 * (1.0 + slope * slope);
  return m;
}

double nu(const Moments& m, const CovarianceSpec& sigma) {
  return m.g_phi_prime * std::sqrt(sigma.trace_sq() / sigma.dim());
}

double bivariate_expectation_quadrature(const Activation& act, Part f1, Part f2,
                                        const Cov2& lam, const Quadrature& rule) {
  check_psd(lam);
  const double s1 = std::sqrt(lam.a11);
  const double s2 = std::sqrt(lam.a22);
  const double det = lam.a11 * lam.a22 - lam.a12 * lam.a12;

  // Rank <= 1: both coordinates are multiples of one standard normal.
  if (s1 == 0.0 || s2 == 0.0 || det <= 1e-14 * lam.a11 * lam.a22) {
    const double sign = lam.a12 < 0.0 ? -1.0 : 1.0;
    return rule.expect([&](double g) {
      return evaluate(act, f1, s1 * g) * evaluate(act, f2, sign * s2 * g);
    });
  }

  const double l11 = s1;
  const double l21 = lam.a12 / l11;
  const double l22 = std::sqrt(std::max(0.0, lam.a22 - l21 * l21));
  return rule.expect([&](double g1) {
    const double outer = evaluate(act, f1, l11 * g1);
    if (outer == 0.0) return 0.0;
    const double shift = l21 * g1;
    return outer * rule.expect([&](double g2) { return evaluate(act, f2, shift + l22 * g2); });
  });
}

double bivariate_expectation(const Activation& act, Part f1, Part f2, const Cov2& lambda,
                             const Quadrature& rule) {
  check_psd(lambda);
  if (act.is_piecewise_linear()) {
    return piecewise_linear_bivariate(act.slope(), f1, f2, lambda);
  }
  return bivariate_expectation_quadrature(act, f1, f2, lambda, rule);
}

double bivariate_expectation(const Activation& act, Part f1, Part f2, const Cov2& lambda,
                             int order) {
  return bivariate_expectation(act, f1, f2, lambda, gauss_hermite(order));
}

double derivative_correlation(const Activation& act, double a, double b, double c,
                              const Quadrature& rule) {
  return bivariate_expectation(act, Part::derivative, Part::derivative, Cov2{a, c, b}, rule);
}

double value_correlation(const Activation& act, double a, double b, double c,
                         const Quadrature& rule) {
  return bivariate_expectation(act, Part::value, Part::value, Cov2{a * a, c, b * b}, rule);
}

}  // namespace linphase
