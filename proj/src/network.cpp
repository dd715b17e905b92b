#include "linphase/network.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "linphase/rng.hpp"

namespace linphase {

namespace {

void check_shapes(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  if (X.cols() != net.W.cols()) {
    throw std::invalid_argument("input has " + std::to_string(X.cols()) +
                                " columns, network expects d = " + std::to_string(net.W.cols()));
  }
  if (net.v.size() != net.W.rows()) {
    throw std::invalid_argument("second layer size does not match the width");
  }
}

void check_labels(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (y.size() != X.rows()) {
    throw std::invalid_argument("label vector has " + std::to_string(y.size()) +
                                " entries for " + std::to_string(X.rows()) + " inputs");
  }
}

// Output from a precomputed phi(Z). Mirrored pairs are summed first so a
// symmetric net gives exact zeros.
Eigen::VectorXd output_from_values(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& v) {
  const Eigen::Index n = Phi.rows();
  const Eigen::Index m = Phi.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  if (m % 2 == 0) {
    const Eigen::Index h = m / 2;
    for (Eigen::Index r = 0; r < h; ++r) {
      const double a = v[r];
      const double b = v[r + h];
      const double* p = Phi.col(r).data();
      const double* q = Phi.col(r + h).data();
      for (Eigen::Index i = 0; i < n; ++i) u[i] += a * p[i] + b * q[i];
    }
  } else {
    for (Eigen::Index r = 0; r < m; ++r) {
      const double a = v[r];
      const double* p = Phi.col(r).data();
      for (Eigen::Index i = 0; i < n; ++i) u[i] += a * p[i];
    }
  }
  return u / std::sqrt(static_cast<double>(m));
}

Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                       rng::Stream stream) {
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      A(r, c) = rng::standard_normal(seed, stream, static_cast<std::uint64_t>(r),
                                     static_cast<std::uint64_t>(c));
    }
  }
  return A;
}

// rows x d matrix of circular patches: P(i, j) = x[(i + j) mod d].
Eigen::MatrixXd patch_matrix(const Eigen::Ref<const Eigen::VectorXd>& x, int q) {
  const auto d = static_cast<int>(x.size());
  Eigen::MatrixXd P(d, q);
  for (int j = 0; j < q; ++j) {
    for (int i = 0; i < d; ++i) P(i, j) = x[(i + j) % d];
  }
  return P;
}

void check_cnn(const Cnn1D& cnn, const Eigen::MatrixXd& X) {
  if (X.cols() != cnn.V.cols()) {
    throw std::invalid_argument("input has " + std::to_string(X.cols()) +
                                " columns, CNN expects d = " + std::to_string(cnn.V.cols()));
  }
  if (cnn.W.rows() != cnn.V.rows()) throw std::invalid_argument("CNN layer widths differ");
  if (cnn.W.cols() > cnn.V.cols()) throw std::invalid_argument("filter size q exceeds d");
}

}  // namespace

TwoLayerNet symmetric_init(int m, int d, const Activation& act, std::uint64_t seed) {
  if (m < 2 || m % 2 != 0) {
    throw std::invalid_argument("width must be even (symmetric initialization)");
  }
  if (d < 1) throw std::invalid_argument("symmetric_init: d must be >= 1");
  const int h = m / 2;
  TwoLayerNet net;
  net.act = act;
  net.W.resize(m, d);
  net.v.resize(m);
  net.W.topRows(h) = standard_normal_matrix(h, d, seed, rng::Stream::init_first_layer);
  net.W.bottomRows(h) = net.W.topRows(h);
  for (int r = 0; r < h; ++r) {
    net.v[r] = rng::rademacher(seed, rng::Stream::init_second_layer, 0, static_cast<std::uint64_t>(r));
    net.v[r + h] = -net.v[r];
  }
  return net;
}

TwoLayerNet random_init(int m, int d, const Activation& act, std::uint64_t seed) {
  if (m < 1 || d < 1) throw std::invalid_argument("random_init: m, d must be >= 1");
  TwoLayerNet net;
  net.act = act;
  net.W = standard_normal_matrix(m, d, seed, rng::Stream::teacher_first_layer);
  net.v.resize(m);
  for (int r = 0; r < m; ++r) {
    net.v[r] = rng::rademacher(seed, rng::Stream::teacher_second_layer, 0, static_cast<std::uint64_t>(r));
  }
  return net;
}

Eigen::MatrixXd preactivations(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  check_shapes(net, X);
  const double scale = 1.0 / std::sqrt(static_cast<double>(net.dim()));
  Eigen::MatrixXd Z(X.rows(), net.width());
  Z.noalias() = X * net.W.transpose();
  Z *= scale;
  // The GEMM kernel may round column blocks differently; identical rows must
  // give identical columns.
  const int m = net.width();
  if (m % 2 == 0) {
    const int h = m / 2;
    for (int r = 0; r < h; ++r) {
      if ((net.W.row(r).array() == net.W.row(r + h).array()).all()) Z.col(r + h) = Z.col(r);
    }
  }
  return Z;
}

Eigen::VectorXd forward(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  return output_from_values(phi(net.act, preactivations(net, X)), net.v);
}

Eigen::VectorXd jacobian_first_layer_apply(const TwoLayerNet& net, const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& dW) {
  check_shapes(net, X);
  if (dW.rows() != net.W.rows() || dW.cols() != net.W.cols()) {
    throw std::invalid_argument("jacobian_first_layer_apply: dW must be m x d");
  }
  const double m = net.width();
  const double d = net.dim();
  const Eigen::MatrixXd D = phi_prime(net.act, preactivations(net, X));
  Eigen::MatrixXd P(X.rows(), net.width());
  P.noalias() = X * dW.transpose();
  return (D.cwiseProduct(P) * net.v) / std::sqrt(m * d);
}

Eigen::MatrixXd jacobian_first_layer_transpose_apply(const TwoLayerNet& net,
                                                     const Eigen::MatrixXd& X,
                                                     const Eigen::VectorXd& r) {
  check_shapes(net, X);
  check_labels(X, r);
  const double m = net.width();
  const double d = net.dim();
  Eigen::MatrixXd A = phi_prime(net.act, preactivations(net, X));
  A.array().colwise() *= r.array();
  Eigen::MatrixXd G(net.width(), net.dim());
  G.noalias() = A.transpose() * X;
  G.array().colwise() *= net.v.array();
  return G / std::sqrt(m * d);
}

Eigen::MatrixXd jacobian_second_layer(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  return phi(net.act, preactivations(net, X)) / std::sqrt(static_cast<double>(net.width()));
}

double training_loss(const TwoLayerNet& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  check_labels(X, y);
  return 0.5 * (forward(net, X) - y).squaredNorm() / static_cast<double>(X.rows());
}

NetGradient loss_gradient(const TwoLayerNet& net, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& y) {
  check_shapes(net, X);
  check_labels(X, y);
  const double n = static_cast<double>(X.rows());
  const double m = net.width();
  const double d = net.dim();
  const Eigen::MatrixXd Z = preactivations(net, X);
  const Eigen::MatrixXd Phi = phi(net.act, Z);
  const Eigen::VectorXd res = (output_from_values(Phi, net.v) - y) / n;

  NetGradient g;
  Eigen::MatrixXd A = phi_prime(net.act, Z);
  A.array().colwise() *= res.array();
  g.W.noalias() = A.transpose() * X;
  g.W.array().colwise() *= net.v.array();
  g.W /= std::sqrt(m * d);
  g.v.noalias() = Phi.transpose() * res;
  g.v /= std::sqrt(m);
  return g;
}

double gd_step(TwoLayerNet& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta1,
               double eta2) {
  check_shapes(net, X);
  check_labels(X, y);
  const double n = static_cast<double>(X.rows());
  const double m = net.width();
  const double d = net.dim();
  const Eigen::MatrixXd Z = preactivations(net, X);
  const Eigen::MatrixXd Phi = phi(net.act, Z);
  const Eigen::VectorXd res = output_from_values(Phi, net.v) - y;
  const double loss = 0.5 * res.squaredNorm() / n;

  Eigen::VectorXd dv;
  if (eta2 != 0.0) dv = (Phi.transpose() * res) * (eta2 / (n * std::sqrt(m)));
  if (eta1 != 0.0) {
    Eigen::MatrixXd A = phi_prime(net.act, Z);
    A.array().colwise() *= res.array();
    Eigen::MatrixXd G(net.width(), net.dim());
    G.noalias() = A.transpose() * X;
    G.array().colwise() *= net.v.array();
    net.W -= G * (eta1 / (n * std::sqrt(m * d)));
  }
  if (eta2 != 0.0) net.v -= dv;
  return loss;
}

int horizon_steps(double c, int d, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("horizon: learning rate must be positive");
  if (!(c >= 0.0)) throw std::invalid_argument("horizon: c must be non-negative");
  const double dd = d;
  return static_cast<int>(std::floor(c * dd * std::log(dd) / eta));
}

void TrainConfig::validate() const {
  if (!(eta1 >= 0.0) || !(eta2 >= 0.0)) {
    throw std::invalid_argument("learning rates must be finite and non-negative");
  }
  if (T < 0) throw std::invalid_argument("step count T must be non-negative");
  if (T > 0 && eta1 == 0.0 && eta2 == 0.0) {
    throw std::invalid_argument("at least one learning rate must be positive");
  }
}

void check_divergence(double loss, double initial_loss, int step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged at step " + std::to_string(step) +
                          ": loss is not finite");
  }
  if (initial_loss > 0.0 && loss > 1e6 * initial_loss) {
    std::ostringstream msg;
    msg << "training diverged at step " << step << ": loss " << loss << " exceeds 1e6 x initial "
        << initial_loss << " (learning rate too large?)";
    throw DivergenceError(msg.str());
  }
}

std::vector<TrajectoryRow> train(TwoLayerNet& net, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y, const TrainConfig& cfg,
                                 const TrainRecorder& recorder) {
  cfg.validate();
  check_shapes(net, X);
  check_labels(X, y);
  const Eigen::MatrixXd W0 = net.W;
  const Eigen::VectorXd v0 = net.v;
  const double n = static_cast<double>(X.rows());

  std::vector<TrajectoryRow> rows;
  rows.reserve(static_cast<std::size_t>(cfg.T) + 1);
  double initial_loss = 0.0;
  for (int t = 0; t <= cfg.T; ++t) {
    const Eigen::VectorXd u = forward(net, X);
    const double loss = 0.5 * (u - y).squaredNorm() / n;
    if (t == 0) initial_loss = loss;
    check_divergence(loss, initial_loss, t);

    TrajectoryRow row{t, 2.0 * loss, (net.W - W0).norm(), (net.v - v0).norm()};
    rows.push_back(row);
    if (recorder) recorder(TrainSnapshot{t, loss, &u, &net, row.w_move_fro, row.v_move_l2});
    if (t == cfg.T) break;
    gd_step(net, X, y, cfg.eta1, cfg.eta2);
  }
  return rows;
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "step,train_mse,w_move_fro,v_move_l2\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.train_mse << ',' << r.w_move_fro << ',' << r.v_move_l2 << '\n';
  }
}

Cnn1D cnn_init(int m, int q, int d, const Activation& act, std::uint64_t seed) {
  if (m < 1 || d < 1 || q < 1) throw std::invalid_argument("cnn_init: m, q, d must be >= 1");
  if (q > d) throw std::invalid_argument("cnn_init: filter size q exceeds d");
  Cnn1D cnn;
  cnn.act = act;
  cnn.W = standard_normal_matrix(m, q, seed, rng::Stream::cnn_filters);
  cnn.V = standard_normal_matrix(m, d, seed, rng::Stream::cnn_readout);
  return cnn;
}

Eigen::VectorXd circular_conv(const Eigen::VectorXd& w, const Eigen::VectorXd& x) {
  const auto q = static_cast<int>(w.size());
  const auto d = static_cast<int>(x.size());
  if (q > d) throw std::invalid_argument("circular_conv: filter size q exceeds d");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < q; ++j) out[i] += w[j] * x[(i + j) % d];
  }
  return out;
}

Eigen::VectorXd cnn_forward(const Cnn1D& cnn, const Eigen::MatrixXd& X) {
  check_cnn(cnn, X);
  const double m = cnn.width();
  const double d = cnn.dim();
  const double sq = std::sqrt(static_cast<double>(cnn.filter()));
  Eigen::VectorXd u(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::MatrixXd P = patch_matrix(X.row(i).transpose(), cnn.filter());
    const Eigen::MatrixXd Z = (P * cnn.W.transpose()) / sq;  // d x m
    u[i] = phi(cnn.act, Z).cwiseProduct(cnn.V.transpose()).sum();
  }
  return u / std::sqrt(m * d);
}

double cnn_training_loss(const Cnn1D& cnn, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  check_labels(X, y);
  return 0.5 * (cnn_forward(cnn, X) - y).squaredNorm() / static_cast<double>(X.rows());
}

CnnGradient cnn_loss_gradient(const Cnn1D& cnn, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y) {
  check_cnn(cnn, X);
  check_labels(X, y);
  const double n = static_cast<double>(X.rows());
  const double m = cnn.width();
  const double d = cnn.dim();
  const double q = cnn.filter();
  const double scale = 1.0 / std::sqrt(m * d);
  const Eigen::VectorXd res = cnn_forward(cnn, X) - y;

  CnnGradient g{Eigen::MatrixXd::Zero(cnn.width(), cnn.filter()),
                Eigen::MatrixXd::Zero(cnn.width(), cnn.dim())};
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double c = res[i] / n;
    if (c == 0.0) continue;
    const Eigen::MatrixXd P = patch_matrix(X.row(i).transpose(), cnn.filter());
    const Eigen::MatrixXd Z = (P * cnn.W.transpose()) / std::sqrt(q);
    const Eigen::MatrixXd A = phi_prime(cnn.act, Z).cwiseProduct(cnn.V.transpose());  // d x m
    g.W.noalias() += (c * scale / std::sqrt(q)) * (A.transpose() * P);
    g.V.noalias() += (c * scale) * phi(cnn.act, Z).transpose();
  }
  return g;
}

double cnn_gd_step(Cnn1D& cnn, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double eta1,
                   double eta2) {
  const double loss = cnn_training_loss(cnn, X, y);
  const CnnGradient g = cnn_loss_gradient(cnn, X, y);
  if (eta1 != 0.0) cnn.W -= eta1 * g.W;
  if (eta2 != 0.0) cnn.V -= eta2 * g.V;
  return loss;
}

}  // namespace linphase
