#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "linphase/activations.hpp"

namespace linphase {

// f(x) = (1/sqrt(m)) v^T phi(W x / sqrt(d)).
struct TwoLayerNet {
  Eigen::MatrixXd W;  // m x d
  Eigen::VectorXd v;  // m
  Activation act;

  int width() const { return static_cast<int>(W.rows()); }
  int dim() const { return static_cast<int>(W.cols()); }
};

// First half of W is N(0,1), second half copies it; v is +-1 on the first
// half and negated on the second, so f == 0 at init. Throws on odd m.
TwoLayerNet symmetric_init(int m, int d, const Activation& act, std::uint64_t seed);

// Plain i.i.d. init (W ~ N(0,1), v ~ Unif{+-1}) on the teacher streams.
// Any width; used for the ground-truth network of the sign labels.
TwoLayerNet random_init(int m, int d, const Activation& act, std::uint64_t seed);

// X W^T / sqrt(d), n x m. Columns of mirrored neuron pairs are bitwise equal.
Eigen::MatrixXd preactivations(const TwoLayerNet& net, const Eigen::MatrixXd& X);

Eigen::VectorXd forward(const TwoLayerNet& net, const Eigen::MatrixXd& X);

// J1 vec(dW) without forming the n x md Jacobian.
Eigen::VectorXd jacobian_first_layer_apply(const TwoLayerNet& net, const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& dW);
// J1^T r as an m x d matrix.
Eigen::MatrixXd jacobian_first_layer_transpose_apply(const TwoLayerNet& net,
                                                     const Eigen::MatrixXd& X,
                                                     const Eigen::VectorXd& r);
// J2 = phi(X W^T / sqrt(d)) / sqrt(m), n x m.
Eigen::MatrixXd jacobian_second_layer(const TwoLayerNet& net, const Eigen::MatrixXd& X);

// (1/2n) sum (f(x_i) - y_i)^2
double training_loss(const TwoLayerNet& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

struct NetGradient {
  Eigen::MatrixXd W;
  Eigen::VectorXd v;
};
NetGradient loss_gradient(const TwoLayerNet& net, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& y);

// One full-batch GD step on both layers (a zero rate leaves that layer
// untouched). Returns the loss before the step.
double gd_step(TwoLayerNet& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta1,
               double eta2);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// T = c d log(d) / eta, rounded down.
int horizon_steps(double c, int d, double eta);

struct TrainConfig {
  double eta1 = 0.0;
  double eta2 = 0.0;
  int T = 0;
  std::optional<double> horizon_c;  // informational: the c that produced T

  void validate() const;
};

struct TrainSnapshot {
  int step = 0;
  double loss = 0.0;  // (1/2n) sum r^2
  const Eigen::VectorXd* u = nullptr;
  const TwoLayerNet* net = nullptr;
  double w_move_fro = 0.0;
  double v_move_l2 = 0.0;
};

using TrainRecorder = std::function<void(const TrainSnapshot&)>;

// One row of a trajectory CSV; shared with the linear models.
struct TrajectoryRow {
  int step = 0;
  double train_mse = 0.0;  // (1/n) sum r^2
  double w_move_fro = 0.0;
  double v_move_l2 = 0.0;
};

// Runs T steps of GD in place. The recorder sees t = 0..T. Throws
// DivergenceError when the loss is non-finite or exceeds 1e6 x the initial
// loss.
std::vector<TrajectoryRow> train(TwoLayerNet& net, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y, const TrainConfig& cfg,
                                 const TrainRecorder& recorder = {});

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path);

// Divergence rule shared with the linear-model trainer.
void check_divergence(double loss, double initial_loss, int step);

// One-layer circular CNN without pooling:
// f(x) = (1/sqrt(md)) sum_r v_r^T phi(w_r * x / sqrt(q)).
struct Cnn1D {
  Eigen::MatrixXd W;  // m x q filters
  Eigen::MatrixXd V;  // m x d
  Activation act;

  int width() const { return static_cast<int>(W.rows()); }
  int filter() const { return static_cast<int>(W.cols()); }
  int dim() const { return static_cast<int>(V.cols()); }
};

// All weights i.i.d. N(0,1). Throws unless 1 <= q <= d.
Cnn1D cnn_init(int m, int q, int d, const Activation& act, std::uint64_t seed);

// (w * x)[i] = sum_j w[j] x[(i + j) mod d]. Throws if q > d.
Eigen::VectorXd circular_conv(const Eigen::VectorXd& w, const Eigen::VectorXd& x);

Eigen::VectorXd cnn_forward(const Cnn1D& cnn, const Eigen::MatrixXd& X);

double cnn_training_loss(const Cnn1D& cnn, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

struct CnnGradient {
  Eigen::MatrixXd W;
  Eigen::MatrixXd V;
};
CnnGradient cnn_loss_gradient(const Cnn1D& cnn, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y);

double cnn_gd_step(Cnn1D& cnn, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta1,
                   double eta2);

}  // namespace linphase
