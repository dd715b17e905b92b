#include "linphase/linmodel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace linphase {

namespace {

double norm_feature(const Moments& mom, double e) {
  return mom.theta0 + mom.theta1() * e + mom.theta2 * e * e;
}

}  // namespace

FeatureMap naive_map(FeatureMap map) {
  map.moments.g_phi_prime = 0.0;
  map.moments.theta2 = 0.0;
  return map;
}

Eigen::VectorXd features(const FeatureMap& map, const Eigen::VectorXd& x) {
  if (x.size() != map.d) {
    throw std::invalid_argument("features: input has dimension " + std::to_string(x.size()) +
                                ", map expects " + std::to_string(map.d));
  }
  const double d = map.d;
  const double zeta = map.moments.zeta;
  Eigen::VectorXd psi(map.dim());
  switch (map.which) {
    case Mode::first:
      psi.head(map.d) = (zeta / std::sqrt(d)) * x;
      psi[map.d] = map.nu / std::sqrt(d);
      return psi;
    case Mode::second:
      psi.head(map.d) = (zeta / std::sqrt(d)) * x;
      psi[map.d] = map.nu / std::sqrt(2.0 * d);
      break;
    case Mode::both:
      psi.head(map.d) = (std::sqrt(2.0 / d) * zeta) * x;
      psi[map.d] = std::sqrt(3.0 / (2.0 * d)) * map.nu;
      break;
  }
  psi[map.d + 1] = norm_feature(map.moments, x.norm() / std::sqrt(d) - 1.0);
  return psi;
}

Eigen::MatrixXd feature_matrix(const FeatureMap& map, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Psi(X.rows(), map.dim());
  for (Eigen::Index i = 0; i < X.rows(); ++i) Psi.row(i) = features(map, X.row(i).transpose());
  return Psi;
}

LinearModel LinearModel::zero(const FeatureMap& map) {
  return {map, Eigen::VectorXd::Zero(map.dim())};
}

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& X) const {
  return feature_matrix(map, X) * beta;
}

LinearGd::LinearGd(const FeatureMap& map, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double eta)
    : map_(map), Psi_(feature_matrix(map, X)), y_(y), eta_(eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw std::invalid_argument("linear model learning rate must be positive");
  }
  if (y.size() != X.rows()) throw std::invalid_argument("label count does not match inputs");
  beta_ = Eigen::VectorXd::Zero(map.dim());
  u_ = Eigen::VectorXd::Zero(X.rows());
}

void LinearGd::step() {
  const double n = static_cast<double>(Psi_.rows());
  const Eigen::VectorXd res = u_ - y_;
  beta_.noalias() -= (eta_ / n) * (Psi_.transpose() * res);
  u_.noalias() = Psi_ * beta_;
  ++t_;
}

double LinearGd::loss() const {
  return 0.5 * (u_ - y_).squaredNorm() / static_cast<double>(u_.size());
}

LinTrainResult lin_gd_train(const FeatureMap& map, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, double eta, int T,
                            const LinRecorder& recorder) {
  if (T < 0) throw std::invalid_argument("step count T must be non-negative");
  LinearGd gd(map, X, y, eta);
  LinTrainResult out;
  out.rows.reserve(static_cast<std::size_t>(T) + 1);
  const double initial = gd.loss();
  for (int t = 0; t <= T; ++t) {
    const double loss = gd.loss();
    check_divergence(loss, initial, t);
    const double bn = gd.beta().norm();
    out.rows.push_back({t, 2.0 * loss, bn, 0.0});
    if (recorder) recorder(LinStep{t, &gd.predictions(), bn, loss});
    if (t < T) gd.step();
  }
  out.model = gd.model();
  return out;
}

ClosedFormDynamics::ClosedFormDynamics(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                                       double eta)
    : K_(K), y_(y), eta_(eta), eigen_(K.rows() <= kEigenLimit) {
  if (K.rows() != K.cols() || K.rows() != y.size()) {
    throw std::invalid_argument("closed-form dynamics: K must be n x n with n = len(y)");
  }
  if (eigen_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    Q_ = es.eigenvectors();
    lambda_ = es.eigenvalues();
    coef_ = Q_.transpose() * y;
  }
  cached_res_ = y;
}

Eigen::VectorXd ClosedFormDynamics::predictions(int t) {
  if (t < 0) throw std::invalid_argument("closed-form dynamics: t must be non-negative");
  if (t == 0) return Eigen::VectorXd::Zero(y_.size());
  const double n = static_cast<double>(y_.size());
  if (eigen_) {
    Eigen::VectorXd c(coef_.size());
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      c[k] = std::pow(1.0 - eta_ * lambda_[k] / n, t) * coef_[k];
    }
    return y_ - Q_ * c;
  }
  if (t < cached_t_) {
    cached_t_ = 0;
    cached_res_ = y_;
  }
  for (; cached_t_ < t; ++cached_t_) {
    cached_res_ -= (eta_ / n) * (K_ * cached_res_);
  }
  return y_ - cached_res_;
}

Eigen::VectorXd closed_form_predictions(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                                        double eta, int t) {
  if (t == 0) return Eigen::VectorXd::Zero(y.size());
  return ClosedFormDynamics(K, y, eta).predictions(t);
}

LinearModel min_norm_solution(const FeatureMap& map, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y) {
  if (y.size() != X.rows()) throw std::invalid_argument("label count does not match inputs");
  const Eigen::MatrixXd Psi = feature_matrix(map, X);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Psi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  LinearModel model = LinearModel::zero(map);
  if (s.size() == 0 || s[0] == 0.0) return model;
  const double cut = kPinvCutoff * s[0];
  Eigen::VectorXd c = svd.matrixU().transpose() * y;
  for (Eigen::Index k = 0; k < s.size(); ++k) c[k] = s[k] > cut ? c[k] / s[k] : 0.0;
  model.beta = svd.matrixV() * c;
  return model;
}

}  // namespace linphase
