#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "linphase/datagen.hpp"
#include "linphase/kernels.hpp"
#include "linphase/network.hpp"
#include "oracles.hpp"

using namespace linphase;

namespace {

const std::vector<Activation>& all_activations() {
  static const std::vector<Activation> acts = {
      Activation::erf(),      Activation::tanh(), Activation::sigmoid(),
      Activation::softplus(), Activation::relu(), Activation::leaky_relu(0.1),
      Activation::identity()};
  return acts;
}

Eigen::VectorXd labels(int n, std::uint64_t seed) {
  return oracle::gaussian_vector(n, seed).array().tanh();
}

// Directional derivative of the loss along (dW, dv) by central differences.
double loss_directional_fd(const TwoLayerNet& net, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, const Eigen::MatrixXd& dW,
                           const Eigen::VectorXd& dv, double h) {
  TwoLayerNet plus = net, minus = net;
  plus.W += h * dW;
  plus.v += h * dv;
  minus.W -= h * dW;
  minus.v -= h * dv;
  return (training_loss(plus, X, y) - training_loss(minus, X, y)) / (2.0 * h);
}

// Dense first-layer Jacobian difference Gram: (Delta Delta^T / m) .* (X X^T / d).
double first_layer_jacobian_gap(const TwoLayerNet& a, const TwoLayerNet& b,
                                const Eigen::MatrixXd& X) {
  const double m = a.width(), d = a.dim();
  Eigen::MatrixXd Da = (X * a.W.transpose() / std::sqrt(d)).unaryExpr([&](double z) {
    return a.act.derivative(z);
  });
  Eigen::MatrixXd Db = (X * b.W.transpose() / std::sqrt(d)).unaryExpr([&](double z) {
    return b.act.derivative(z);
  });
  const Eigen::MatrixXd Delta = (Da - Db) * a.v.asDiagonal();
  const Eigen::MatrixXd G = (Delta * Delta.transpose() / m).cwiseProduct(X * X.transpose() / d);
  return std::sqrt(oracle::max_abs_eigenvalue(G));
}

}  // namespace

TEST_CASE("symmetric init structure") {
  const TwoLayerNet net = symmetric_init(2, 5, Activation::erf(), 3);
  CHECK(net.W.row(0) == net.W.row(1));
  CHECK(std::abs(net.v(0)) == 1.0);
  CHECK(net.v(1) == -net.v(0));

  const TwoLayerNet big = symmetric_init(64, 7, Activation::tanh(), 3);
  CHECK(big.W.topRows(32) == big.W.bottomRows(32));
  CHECK(big.v.head(32) == -big.v.tail(32));
  CHECK_THROWS_WITH(symmetric_init(5, 3, Activation::erf(), 0),
                    "width must be even (symmetric initialization)");
}

TEST_CASE("symmetric init outputs zero for any input") {
  for (const auto& act : all_activations()) {
    const TwoLayerNet net = symmetric_init(256, 20, act, 8);
    const Eigen::MatrixXd X = oracle::gaussian(200, 20, 4) * 3.0;
    const Eigen::VectorXd f = forward(net, X);
    CHECK_MESSAGE(f.cwiseAbs().maxCoeff() <= 1e-12 * std::sqrt(256.0), act.name());
  }
}

TEST_CASE("forward by hand") {
  TwoLayerNet net{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.0),
                  Activation::identity()};
  CHECK(forward(net, Eigen::MatrixXd::Constant(1, 1, 2.0))(0) == 2.0);

  TwoLayerNet random = random_init(6, 4, Activation::tanh(), 2);
  const Eigen::MatrixXd X = oracle::gaussian(3, 4, 5);
  const Eigen::VectorXd f = forward(random, X);
  for (int i = 0; i < 3; ++i) {
    double want = 0.0;
    for (int r = 0; r < 6; ++r) {
      want += random.v(r) * std::tanh(random.W.row(r).dot(X.row(i)) / 2.0);
    }
    CHECK(f(i) == doctest::Approx(want / std::sqrt(6.0)).epsilon(1e-14));
  }
  random.v.setZero();
  CHECK(forward(random, X).isZero(0.0));
  CHECK_THROWS_AS(forward(random, oracle::gaussian(3, 5, 1)), std::invalid_argument);
}

TEST_CASE("first-layer jacobian") {
  const TwoLayerNet net = random_init(7, 5, Activation::erf(), 1);
  const Eigen::MatrixXd X = oracle::gaussian(9, 5, 2);
  CHECK(jacobian_first_layer_apply(net, X, Eigen::MatrixXd::Zero(7, 5)).isZero(0.0));

  // Scalar case.
  TwoLayerNet one{Eigen::MatrixXd::Constant(1, 1, 0.7), Eigen::VectorXd::Constant(1, -1.0),
                  Activation::tanh()};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 1.3);
  const double got = jacobian_first_layer_apply(one, x, Eigen::MatrixXd::Constant(1, 1, 0.2))(0);
  CHECK(got == doctest::Approx(-1.0 * phi_prime(Activation::tanh(), 0.7 * 1.3) * 1.3 * 0.2));

  // Adjoint test.
  for (int k = 0; k < 10; ++k) {
    const Eigen::MatrixXd dW = oracle::gaussian(7, 5, 100 + k);
    const Eigen::VectorXd r = oracle::gaussian_vector(9, 200 + k);
    const double lhs = jacobian_first_layer_apply(net, X, dW).dot(r);
    const double rhs = (dW.array() * jacobian_first_layer_transpose_apply(net, X, r).array()).sum();
    CHECK(oracle::relative_error(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("second-layer jacobian") {
  const TwoLayerNet net = random_init(8, 6, Activation::erf(), 1);
  CHECK(jacobian_second_layer(net, Eigen::MatrixXd::Zero(4, 6)).isZero(0.0));
  const Eigen::MatrixXd X = oracle::gaussian(5, 6, 3);
  const Eigen::MatrixXd J2 = jacobian_second_layer(net, X);
  for (int r = 0; r < 8; ++r) {
    const Eigen::VectorXd col =
        phi(Activation::erf(), Eigen::MatrixXd(X * net.W.row(r).transpose() / std::sqrt(6.0))) /
        std::sqrt(8.0);
    CHECK((J2.col(r) - col).cwiseAbs().maxCoeff() < 1e-15);
  }
  const Eigen::MatrixXd K = ntk_second_layer(net, X).values;
  CHECK((J2 * J2.transpose() - K).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("loss gradient matches central differences") {
  const Eigen::MatrixXd X = oracle::gaussian(30, 8, 6);
  const Eigen::VectorXd y = labels(30, 6);
  for (const auto& act : {Activation::erf(), Activation::tanh(), Activation::sigmoid(),
                          Activation::softplus()}) {
    TwoLayerNet net = random_init(10, 8, act, 6);
    const NetGradient g = loss_gradient(net, X, y);
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXd dW = oracle::gaussian(10, 8, 1000 + k);
      const Eigen::VectorXd dv = oracle::gaussian_vector(10, 2000 + k);
      const double analytic = (g.W.array() * dW.array()).sum() + g.v.dot(dv);
      const double fd = loss_directional_fd(net, X, y, dW, dv, 1e-5);
      CHECK_MESSAGE(oracle::relative_error(analytic, fd) <= 1e-5, act.name());
    }
  }
}

TEST_CASE("gradient is J^T r / n") {
  const TwoLayerNet net = random_init(6, 4, Activation::tanh(), 9);
  const Eigen::MatrixXd X = oracle::gaussian(11, 4, 9);
  const Eigen::VectorXd y = labels(11, 9);
  const Eigen::VectorXd r = forward(net, X) - y;
  const NetGradient g = loss_gradient(net, X, y);
  CHECK((g.W - jacobian_first_layer_transpose_apply(net, X, r) / 11.0).cwiseAbs().maxCoeff() <
        1e-14);
  CHECK((g.v - jacobian_second_layer(net, X).transpose() * r / 11.0).cwiseAbs().maxCoeff() <
        1e-14);
}

TEST_CASE("gd step") {
  const Eigen::MatrixXd X = oracle::gaussian(12, 5, 3);
  TwoLayerNet net = random_init(6, 5, Activation::erf(), 3);
  const TwoLayerNet start = net;

  gd_step(net, X, labels(12, 3), 0.0, 0.0);
  CHECK(net.W == start.W);
  CHECK(net.v == start.v);

  gd_step(net, X, forward(net, X), 0.5, 0.5);
  CHECK(net.W == start.W);
  CHECK(net.v == start.v);

  const Eigen::VectorXd y = labels(12, 4);
  const NetGradient g = loss_gradient(start, X, y);
  const double before = gd_step(net, X, y, 0.3, 0.2);
  CHECK(before == training_loss(start, X, y));
  CHECK((net.W - (start.W - 0.3 * g.W)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((net.v - (start.v - 0.2 * g.v)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("first step lowers the loss") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::MatrixXd X = generate_inputs({CovarianceSpec::identity(10),
                                               BaseDistribution::gaussian, 100, s});
    const Eigen::VectorXd y = labels(100, s);
    TwoLayerNet net = symmetric_init(32, 10, Activation::erf(), s);
    const double l0 = gd_step(net, X, y, 0.1, 0.1);
    CHECK(training_loss(net, X, y) < l0);
  }
}

TEST_CASE("train") {
  const Eigen::MatrixXd X = oracle::gaussian(40, 6, 1);
  const Eigen::VectorXd y = labels(40, 1);
  TwoLayerNet net = symmetric_init(16, 6, Activation::tanh(), 1);
  const TwoLayerNet start = net;

  TrainConfig zero{0.5, 0.0, 0};
  const auto rows0 = train(net, X, y, zero);
  REQUIRE(rows0.size() == 1);
  CHECK(rows0[0].step == 0);
  CHECK(rows0[0].w_move_fro == 0.0);
  CHECK(rows0[0].train_mse == doctest::Approx(y.squaredNorm() / 40.0));

  int seen = 0;
  const auto rows = train(net, X, y, {0.5, 0.0, 25}, [&](const TrainSnapshot& s) {
    CHECK(s.step == seen++);
    CHECK(s.net->v == start.v);
  });
  CHECK(seen == 26);
  CHECK(rows.size() == 26);
  CHECK(net.v == start.v);
  CHECK(rows.back().v_move_l2 == 0.0);
  CHECK(rows.back().w_move_fro == doctest::Approx((net.W - start.W).norm()));

  TwoLayerNet second = start;
  train(second, X, y, {0.0, 0.5, 25});
  CHECK(second.W == start.W);

  TwoLayerNet again = start;
  const auto rows2 = train(again, X, y, {0.5, 0.0, 25});
  CHECK(again.W == net.W);
  for (std::size_t k = 0; k < rows.size(); ++k) CHECK(rows[k].train_mse == rows2[k].train_mse);

  CHECK_THROWS_AS(TrainConfig({0.0, 0.0, 5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig({0.1, 0.0, -1}).validate(), std::invalid_argument);
}

TEST_CASE("divergence aborts training") {
  const Eigen::MatrixXd X = oracle::gaussian(20, 4, 2) * 5.0;
  const Eigen::VectorXd y = labels(20, 2);
  TwoLayerNet net = symmetric_init(8, 4, Activation::identity(), 2);
  CHECK_THROWS_AS(train(net, X, y, {1e3, 1e3, 200}), DivergenceError);
  CHECK_THROWS_AS(check_divergence(NAN, 1.0, 3), DivergenceError);
  CHECK_THROWS_AS(check_divergence(2e6, 1.0, 3), DivergenceError);
  CHECK_NOTHROW(check_divergence(5e5, 1.0, 3));
}

TEST_CASE("horizon") {
  CHECK(horizon_steps(0.25, 50, 0.5) ==
        static_cast<int>(std::floor(0.25 * 50 * std::log(50.0) / 0.5)));
  CHECK(horizon_steps(0.0, 50, 0.5) == 0);
  CHECK_THROWS_AS(horizon_steps(0.25, 50, 0.0), std::invalid_argument);
}

TEST_CASE("trajectory csv") {
  const auto path = std::filesystem::temp_directory_path() / "linphase-traj.csv";
  write_trajectory_csv({{0, 1.0, 0.0, 0.0}, {1, 0.5, 0.25, 0.125}}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,train_mse,w_move_fro,v_move_l2");
  std::getline(in, line);
  CHECK(line.rfind("0,1", 0) == 0);
}

TEST_CASE("parameter movement stays inside sqrt(d log d)") {
  const int d = 32, n = 1024;
  const Eigen::MatrixXd X =
      generate_inputs({CovarianceSpec::identity(d), BaseDistribution::gaussian, n, 5});
  const Eigen::VectorXd y = labels_teacher_sign(X, random_init(5, d, Activation::erf(), 5));
  TwoLayerNet net = symmetric_init(256, d, Activation::erf(), 5);
  const double eta = 0.1 * d / std::log(n);
  const int T = horizon_steps(0.25, d, eta);
  const auto rows = train(net, X, y, {eta, eta, T});
  for (const auto& r : rows) CHECK(r.w_move_fro <= std::sqrt(d * std::log(d)));
}

TEST_CASE("symmetric init keeps the NTK in expectation") {
  const Eigen::MatrixXd X = oracle::gaussian(3, 5, 42);
  const int seeds = 100;
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(3, 3), s2 = s1, r1 = s1, r2 = s1;
  for (int s = 0; s < seeds; ++s) {
    const Eigen::MatrixXd a = ntk_first_layer(symmetric_init(20, 5, Activation::erf(), s), X).values;
    const Eigen::MatrixXd b = ntk_first_layer(random_init(20, 5, Activation::erf(), s), X).values;
    s1 += a;
    s2 += a.cwiseProduct(a);
    r1 += b;
    r2 += b.cwiseProduct(b);
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double ma = s1(i, j) / seeds, mb = r1(i, j) / seeds;
      const double va = s2(i, j) / seeds - ma * ma, vb = r2(i, j) / seeds - mb * mb;
      const double se = std::sqrt((va + vb) / seeds);
      CHECK(std::abs(ma - mb) <= 3.0 * se);
    }
  }
}

TEST_CASE("first-layer jacobian perturbation ratio") {
  const int n = 512, d = 64, m = 256;
  const Eigen::MatrixXd X =
      generate_inputs({CovarianceSpec::identity(d), BaseDistribution::gaussian, n, 3});
  const TwoLayerNet base = symmetric_init(m, d, Activation::erf(), 3);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    TwoLayerNet moved = base;
    Eigen::MatrixXd dW = oracle::gaussian(m, d, 500 + k);
    const double radius = 0.1 * std::pow(2.0, k % 7);
    dW *= radius / dW.norm();
    moved.W += dW;
    const double gap = first_layer_jacobian_gap(moved, base, X);
    const double ratio = gap / (std::sqrt(static_cast<double>(n) / (m * d)) * radius);
    worst = std::max(worst, ratio);
  }
  CHECK(worst <= 10.0);
}

TEST_CASE("circular convolution") {
  const Eigen::VectorXd x = oracle::gaussian_vector(9, 1);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4);
  e1(0) = 1.0;
  CHECK(circular_conv(e1, x) == x);
  CHECK((circular_conv(Eigen::VectorXd::Ones(9), Eigen::VectorXd::Ones(9)).array() == 9.0).all());
  const Eigen::VectorXd w = oracle::gaussian_vector(3, 2);
  const Eigen::VectorXd c = circular_conv(w, x);
  for (int i = 0; i < 9; ++i) {
    double want = 0.0;
    for (int j = 0; j < 3; ++j) want += w(j) * x((i + j) % 9);
    CHECK(c(i) == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK_THROWS_AS(circular_conv(Eigen::VectorXd::Ones(10), x), std::invalid_argument);
  CHECK_THROWS_AS(cnn_init(4, 10, 9, Activation::erf(), 0), std::invalid_argument);
}

TEST_CASE("cnn forward by definition") {
  const Cnn1D cnn = cnn_init(5, 3, 8, Activation::tanh(), 4);
  const Eigen::MatrixXd X = oracle::gaussian(4, 8, 4);
  const Eigen::VectorXd f = cnn_forward(cnn, X);
  for (int i = 0; i < 4; ++i) {
    double want = 0.0;
    for (int r = 0; r < 5; ++r) {
      const Eigen::VectorXd z = circular_conv(cnn.W.row(r).transpose(), X.row(i).transpose());
      for (int k = 0; k < 8; ++k) want += cnn.V(r, k) * std::tanh(z(k) / std::sqrt(3.0));
    }
    CHECK(f(i) == doctest::Approx(want / std::sqrt(40.0)).epsilon(1e-13));
  }
}

TEST_CASE("cnn gradient matches central differences") {
  const Eigen::MatrixXd X = oracle::gaussian(12, 10, 8);
  const Eigen::VectorXd y = labels(12, 8);
  for (const auto& act : {Activation::erf(), Activation::tanh()}) {
    const Cnn1D cnn = cnn_init(6, 4, 10, act, 8);
    const CnnGradient g = cnn_loss_gradient(cnn, X, y);
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXd dW = oracle::gaussian(6, 4, 300 + k);
      const Eigen::MatrixXd dV = oracle::gaussian(6, 10, 400 + k);
      Cnn1D plus = cnn, minus = cnn;
      const double h = 1e-5;
      plus.W += h * dW;
      plus.V += h * dV;
      minus.W -= h * dW;
      minus.V -= h * dV;
      const double fd = (cnn_training_loss(plus, X, y) - cnn_training_loss(minus, X, y)) / (2 * h);
      const double analytic = (g.W.array() * dW.array()).sum() + (g.V.array() * dV.array()).sum();
      CHECK(oracle::relative_error(analytic, fd) <= 1e-5);
    }
  }
  Cnn1D cnn = cnn_init(6, 4, 10, Activation::erf(), 8);
  const Cnn1D start = cnn;
  const double l0 = cnn_gd_step(cnn, X, y, 0.0, 0.5);
  CHECK(cnn.W == start.W);
  CHECK(cnn_training_loss(cnn, X, y) < l0);
}
