#include "linphase/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace linphase {

namespace {

Eigen::MatrixXd data_kernel(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  G.selfadjointView<Eigen::Lower>().rankUpdate(X, 1.0 / static_cast<double>(X.cols()));
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

// A B^T / scale, symmetric when A == B.
Eigen::MatrixXd product_gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, bool same,
                             double scale) {
  const auto n = A.rows();
  Eigen::MatrixXd G(n, B.rows());
  if (same) {
    G.setZero();
    G.selfadjointView<Eigen::Lower>().rankUpdate(A, 1.0 / scale);
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  } else {
    G.noalias() = A * B.transpose();
    G /= scale;
  }
  return G;
}

bool same_params(const TwoLayerNet& a, const TwoLayerNet& b) {
  return &a == &b || (a.W.rows() == b.W.rows() && a.W.cols() == b.W.cols() && a.W == b.W &&
                      a.v == b.v);
}

Eigen::MatrixXd gram_first(const TwoLayerNet& a, const TwoLayerNet& b, const Eigen::MatrixXd& X) {
  const bool same = same_params(a, b);
  const double m = a.width();
  Eigen::MatrixXd Da = phi_prime(a.act, preactivations(a, X));
  Eigen::MatrixXd K;
  if (same) {
    Da.array().rowwise() *= a.v.transpose().array().abs();
    K = product_gram(Da, Da, true, m);
  } else {
    Eigen::MatrixXd Db = phi_prime(b.act, preactivations(b, X));
    Da.array().rowwise() *= a.v.cwiseProduct(b.v).transpose().array();
    K = product_gram(Da, Db, false, m);
  }
  return K.cwiseProduct(data_kernel(X));
}

Eigen::MatrixXd gram_second(const TwoLayerNet& a, const TwoLayerNet& b, const Eigen::MatrixXd& X) {
  const bool same = same_params(a, b);
  const double m = a.width();
  const Eigen::MatrixXd Pa = phi(a.act, preactivations(a, X));
  if (same) return product_gram(Pa, Pa, true, m);
  return product_gram(Pa, phi(b.act, preactivations(b, X)), false, m);
}

void check_expected_args(const Eigen::MatrixXd& X, int order) {
  if (order < 32) throw std::invalid_argument("expected NTK needs quadrature order >= 32");
  if (X.rows() > kMaxExpectedNtkSize) {
    throw std::invalid_argument("expected NTK is limited to n <= " +
                                std::to_string(kMaxExpectedNtkSize) + " (got n = " +
                                std::to_string(X.rows()) + ")");
  }
}

}  // namespace

Mode parse_mode(std::string_view name) {
  if (name == "first") return Mode::first;
  if (name == "second") return Mode::second;
  if (name == "both") return Mode::both;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (first, second, both)");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::first: return "first";
    case Mode::second: return "second";
    case Mode::both: return "both";
  }
  return "unknown";
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::ntk1: return "ntk1";
    case Provenance::ntk2: return "ntk2";
    case Provenance::ntk_full: return "ntk-full";
    case Provenance::expected_ntk1: return "expected-ntk1";
    case Provenance::expected_ntk2: return "expected-ntk2";
    case Provenance::lin1: return "lin1";
    case Provenance::lin2: return "lin2";
    case Provenance::lin_full: return "lin-full";
    case Provenance::cnn_inf: return "cnn-inf";
  }
  return "unknown";
}

Eigen::VectorXd q_vector(const Eigen::MatrixXd& X, const Moments& mom) {
  const double sqrt_d = std::sqrt(static_cast<double>(X.cols()));
  Eigen::VectorXd q(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double e = X.row(i).norm() / sqrt_d - 1.0;
    q[i] = mom.theta0 + mom.theta1() * e + mom.theta2 * e * e;
  }
  return q;
}

KernelMatrix ntk_first_layer(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  return {gram_first(net, net, X), Provenance::ntk1};
}

KernelMatrix ntk_second_layer(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  return {gram_second(net, net, X), Provenance::ntk2};
}

KernelMatrix ntk_full(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  return {gram_first(net, net, X) + gram_second(net, net, X), Provenance::ntk_full};
}

Eigen::MatrixXd cross_gram(const TwoLayerNet& a, const TwoLayerNet& b, const Eigen::MatrixXd& X,
                           Mode mode) {
  if (a.W.rows() != b.W.rows() || a.W.cols() != b.W.cols()) {
    throw std::invalid_argument("cross_gram: networks have different shapes");
  }
  switch (mode) {
    case Mode::first: return gram_first(a, b, X);
    case Mode::second: return gram_second(a, b, X);
    case Mode::both: return gram_first(a, b, X) + gram_second(a, b, X);
  }
  return {};
}

KernelMatrix expected_ntk_first(const Eigen::MatrixXd& X, const Activation& act, int order) {
  check_expected_args(X, order);
  const Quadrature rule = gauss_hermite(order);
  const Eigen::MatrixXd G = data_kernel(X);
  const auto n = X.rows();
  KernelMatrix K{Eigen::MatrixXd(n, n), Provenance::expected_ntk1};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double c = G(i, j);
      const double v = c * derivative_correlation(act, G(i, i), G(j, j), c, rule);
      K.values(i, j) = v;
      K.values(j, i) = v;
    }
  }
  return K;
}

KernelMatrix expected_ntk_second(const Eigen::MatrixXd& X, const Activation& act, int order) {
  check_expected_args(X, order);
  const Quadrature rule = gauss_hermite(order);
  const Eigen::MatrixXd G = data_kernel(X);
  const auto n = X.rows();
  const Eigen::VectorXd s = G.diagonal().cwiseSqrt();
  KernelMatrix K{Eigen::MatrixXd(n, n), Provenance::expected_ntk2};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = value_correlation(act, s[i], s[j], G(i, j), rule);
      K.values(i, j) = v;
      K.values(j, i) = v;
    }
  }
  return K;
}

KernelMatrix linear_kernel(const Eigen::MatrixXd& X, const Moments& mom, double nu, Mode which) {
  const double d = static_cast<double>(X.cols());
  const double z2 = mom.zeta * mom.zeta;
  const double nu2 = nu * nu;
  const Eigen::MatrixXd G = data_kernel(X);
  const auto n = X.rows();
  KernelMatrix K;
  switch (which) {
    case Mode::first:
      K.values = z2 * G;
      K.values.array() += nu2 / d;
      K.provenance = Provenance::lin1;
      return K;
    case Mode::second:
      K.values = z2 * G;
      K.values.array() += 0.5 * nu2 / d;
      K.provenance = Provenance::lin2;
      break;
    case Mode::both:
      K.values = 2.0 * z2 * G;
      K.values.array() += 1.5 * nu2 / d;
      K.provenance = Provenance::lin_full;
      break;
  }
  const Eigen::VectorXd q = q_vector(X, mom);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) K.values(i, j) += q[i] * q[j];
  }
  return K;
}

KernelMatrix cnn_infinite_ntk(const Eigen::MatrixXd& X, int q, const Activation& act, int order) {
  const auto n = X.rows();
  const auto d = static_cast<int>(X.cols());
  if (q < 1 || q > d) {
    throw std::invalid_argument("cnn_infinite_ntk: filter size must satisfy 1 <= q <= d");
  }
  if (!(X.array().abs() == 1.0).all()) {
    throw std::invalid_argument("cnn_infinite_ntk: inputs must be hypercube points (entries +-1)");
  }
  const Quadrature rule = gauss_hermite(order);

  // A patch correlation is s/q with s in {-q, ..., q}; tabulate P + Q rho.
  std::vector<double> table(static_cast<std::size_t>(2 * q + 1));
  for (int s = -q; s <= q; ++s) {
    const double rho = static_cast<double>(s) / q;
    table[static_cast<std::size_t>(s + q)] = cnn_p(act, rho, rule) + cnn_q(act, rho, rule) * rho;
  }

  // Row-major copy so each x_i is contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Xr = X;
  std::vector<int> e(static_cast<std::size_t>(d));
  KernelMatrix K{Eigen::MatrixXd(n, n), Provenance::cnn_inf};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = Xr.row(i).data();
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double* xj = Xr.row(j).data();
      for (int k = 0; k < d; ++k) e[static_cast<std::size_t>(k)] = xi[k] == xj[k] ? 1 : -1;
      int s = 0;
      for (int k = 0; k < q; ++k) s += e[static_cast<std::size_t>(k)];
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        acc += table[static_cast<std::size_t>(s + q)];
        s += e[static_cast<std::size_t>((k + q) % d)] - e[static_cast<std::size_t>(k)];
      }
      K.values(i, j) = acc / d;
      K.values(j, i) = acc / d;
    }
  }
  return K;
}

void write_kernel_csv(const KernelMatrix& K, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  for (Eigen::Index i = 0; i < K.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < K.values.cols(); ++j) {
      if (j > 0) out << ',';
      out << K.values(i, j);
    }
    out << '\n';
  }
  nlohmann::json meta{{"provenance", to_string(K.provenance)},
                      {"rows", K.values.rows()},
                      {"cols", K.values.cols()},
                      {"file", path.filename().string()}};
  std::ofstream side(path.string() + ".json");
  if (!side) throw std::runtime_error("cannot write kernel sidecar for '" + path.string() + "'");
  side << meta.dump(2) << '\n';
}

}  // namespace linphase
