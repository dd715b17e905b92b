#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

#include "linphase/activations.hpp"
#include "linphase/kernels.hpp"
#include "linphase/network.hpp"

namespace linphase {

// Feature maps of the three linear models:
//   first:  psi1(x) = [zeta x; nu] / sqrt(d)
//   second: psi2(x) = [zeta x / sqrt(d); nu / sqrt(2d); q(x)]
//   both:   psi(x)  = [sqrt(2/d) zeta x; sqrt(3/(2d)) nu; q(x)]
// with q(x) = theta0 + theta1 e + theta2 e^2, e = |x| / sqrt(d) - 1.
struct FeatureMap {
  Mode which = Mode::first;
  Moments moments;
  double nu = 0.0;
  int d = 0;

  int dim() const { return which == Mode::first ? d + 1 : d + 2; }
};

// The naive variant used in the norm-feature ablation: theta1 = theta2 = 0,
// so the last coordinate is the constant theta0.
FeatureMap naive_map(FeatureMap map);

Eigen::VectorXd features(const FeatureMap& map, const Eigen::VectorXd& x);
// n x dim, one feature row per input.
Eigen::MatrixXd feature_matrix(const FeatureMap& map, const Eigen::MatrixXd& X);

struct LinearModel {
  FeatureMap map;
  Eigen::VectorXd beta;  // starts at zero

  static LinearModel zero(const FeatureMap& map);
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// Full-batch GD on (1/2n) sum (<psi(x_i), beta> - y_i)^2 from beta = 0.
class LinearGd {
 public:
  LinearGd(const FeatureMap& map, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta);

  void step();
  int t() const { return t_; }
  const Eigen::VectorXd& predictions() const { return u_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  // (1/2n) sum (u - y)^2 at the current step.
  double loss() const;
  LinearModel model() const { return {map_, beta_}; }
  const Eigen::MatrixXd& features() const { return Psi_; }

 private:
  FeatureMap map_;
  Eigen::MatrixXd Psi_;
  Eigen::VectorXd y_;
  double eta_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd u_;
  int t_ = 0;
};

struct LinStep {
  int step = 0;
  const Eigen::VectorXd* u = nullptr;
  double beta_norm = 0.0;
  double loss = 0.0;
};

using LinRecorder = std::function<void(const LinStep&)>;

struct LinTrainResult {
  LinearModel model;
  // Same schema as network trajectories: w_move_fro holds |beta|, v_move_l2 is 0.
  std::vector<TrajectoryRow> rows;
};

// Steps t = 0..T. Throws std::invalid_argument if eta <= 0 and DivergenceError
// on a non-finite or exploding loss.
LinTrainResult lin_gd_train(const FeatureMap& map, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, double eta, int T,
                            const LinRecorder& recorder = {});

// u(t) = y - (I - eta K / n)^t y, i.e. GD on a linear model from zero.
// Uses a symmetric eigendecomposition when n <= 2000, otherwise repeated
// products (cached, so increasing t is incremental).
class ClosedFormDynamics {
 public:
  static constexpr int kEigenLimit = 2000;

  ClosedFormDynamics(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double eta);
  Eigen::VectorXd predictions(int t);

 private:
  Eigen::MatrixXd K_;
  Eigen::VectorXd y_;
  double eta_;
  bool eigen_;
  Eigen::MatrixXd Q_;
  Eigen::VectorXd lambda_;
  Eigen::VectorXd coef_;  // Q^T y
  int cached_t_ = 0;
  Eigen::VectorXd cached_res_;  // (I - eta K / n)^t y at cached_t_
};

Eigen::VectorXd closed_form_predictions(const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                                        double eta, int t);

inline constexpr double kPinvCutoff = 1e-10;

// beta* = pinv(Psi) y with singular values <= 1e-10 sigma_max dropped.
LinearModel min_norm_solution(const FeatureMap& map, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y);

}  // namespace linphase
