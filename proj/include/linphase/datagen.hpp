#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linphase/covariance.hpp"

namespace linphase {

struct TwoLayerNet;

// Per-coordinate base distribution of xbar; all have mean 0 and variance 1.
enum class BaseDistribution { gaussian, rademacher, uniform_scaled };

BaseDistribution parse_base_distribution(std::string_view name);
std::string to_string(BaseDistribution base);

struct DataSpec {
  CovarianceSpec covariance = CovarianceSpec::identity(1);
  BaseDistribution base = BaseDistribution::gaussian;
  int n = 0;
  std::uint64_t seed = 0;

  int dim() const { return covariance.dim(); }
};

struct Dataset {
  Eigen::MatrixXd X;  // n x d
  Eigen::VectorXd y;  // n
  std::string provenance;

  int size() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
};

struct ConcentrationReport {
  double max_norm_dev = 0.0;          // max_i | |x_i|^2 / d - 1 |
  double max_offdiag = 0.0;           // max_{i != j} |<x_i, x_j>| / d
  double gram_spectral_over_n = 0.0;  // |X X^T| / n
};

// x = Sigma^{1/2} xbar with independent xbar coordinates. Row i is a pure
// function of (seed, i), so rows [0, n) do not change when n grows.
Eigen::MatrixXd generate_inputs(const DataSpec& spec);
// Rows [first_row, first_row + count) of the same generator.
Eigen::MatrixXd generate_input_rows(const DataSpec& spec, int first_row, int count);

// Uniform on {-1, +1}^d.
Eigen::MatrixXd generate_hypercube(int n, int d, std::uint64_t seed);

// y_i = sign(f*(x_i)) with sign(0) = +1.
Eigen::VectorXd labels_teacher_sign(const Eigen::MatrixXd& X, const TwoLayerNet& teacher);

struct Labels {
  Eigen::VectorXd y;
  std::vector<std::string> warnings;
};

// y_i = |x_i| / sqrt(d) + relu(a^T x_i). Labels are kept as computed; a
// warning is recorded when some |y_i| > 1.
Labels labels_norm_dependent(const Eigen::MatrixXd& X, const Eigen::VectorXd& a);

// Deterministic direction with |a| = norm drawn from the label_direction stream.
Eigen::VectorXd random_direction(int d, double norm, std::uint64_t seed);

ConcentrationReport concentration_report(const Eigen::MatrixXd& X);

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class LabelBound { enforce, ignore };

// CSV with header x1,...,xd,y; floats written with 17 significant digits.
void save_csv(const Dataset& data, const std::filesystem::path& path);
// Throws CsvError (with the 1-based line number) on a malformed row, or on
// |y| > 1 when the bound is enforced.
Dataset load_csv(const std::filesystem::path& path, LabelBound bound = LabelBound::enforce);

}  // namespace linphase
