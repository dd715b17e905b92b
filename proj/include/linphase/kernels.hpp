#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <string_view>

#include "linphase/activations.hpp"
#include "linphase/network.hpp"

namespace linphase {

// Which layers are trained: first (eta2 = 0), second (eta1 = 0) or both.
enum class Mode { first, second, both };

Mode parse_mode(std::string_view name);
std::string to_string(Mode mode);

enum class Provenance {
  ntk1,
  ntk2,
  ntk_full,
  expected_ntk1,
  expected_ntk2,
  lin1,
  lin2,
  lin_full,
  cnn_inf,
};

std::string to_string(Provenance p);

struct KernelMatrix {
  Eigen::MatrixXd values;
  Provenance provenance = Provenance::ntk1;

  int size() const { return static_cast<int>(values.rows()); }
};

// q_i = theta0 + theta1 e_i + theta2 e_i^2 with e_i = |x_i| / sqrt(d) - 1.
Eigen::VectorXd q_vector(const Eigen::MatrixXd& X, const Moments& mom);

// Empirical NTKs at (W, v).
KernelMatrix ntk_first_layer(const TwoLayerNet& net, const Eigen::MatrixXd& X);
KernelMatrix ntk_second_layer(const TwoLayerNet& net, const Eigen::MatrixXd& X);
KernelMatrix ntk_full(const TwoLayerNet& net, const Eigen::MatrixXd& X);

// J(a) J(b)^T for the layers selected by mode. With a == b this is the NTK.
Eigen::MatrixXd cross_gram(const TwoLayerNet& a, const TwoLayerNet& b, const Eigen::MatrixXd& X,
                           Mode mode);

inline constexpr int kMaxExpectedNtkSize = 1024;

// Infinite-width NTKs by entrywise bivariate quadrature. Order >= 32 and
// n <= 1024, otherwise std::invalid_argument.
KernelMatrix expected_ntk_first(const Eigen::MatrixXd& X, const Activation& act, int order);
KernelMatrix expected_ntk_second(const Eigen::MatrixXd& X, const Activation& act, int order);

// Gram matrices of the linear-model feature maps:
//   first:  (zeta^2 XX^T + nu^2 11^T) / d
//   second: (zeta^2 XX^T + nu^2 11^T / 2) / d + q q^T
//   both:   (2 zeta^2 XX^T + 3 nu^2 11^T / 2) / d + q q^T
KernelMatrix linear_kernel(const Eigen::MatrixXd& X, const Moments& mom, double nu, Mode which);

// Infinite-width NTK of the circular CNN on hypercube data:
//   K[i,j] = (1/d) sum_k P(rho_ijk) + Q(rho_ijk) rho_ijk
// where rho_ijk is the correlation of the length-q patches starting at k.
// Rejects entries other than +-1 and q outside [1, d].
KernelMatrix cnn_infinite_ntk(const Eigen::MatrixXd& X, int q, const Activation& act, int order);

// Dense CSV (no header) plus "<path>.json" with provenance and shape.
void write_kernel_csv(const KernelMatrix& K, const std::filesystem::path& path);

}  // namespace linphase
