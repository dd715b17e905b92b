#include "linphase/datagen.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "linphase/network.hpp"
#include "linphase/rng.hpp"
#include "linphase/spectral.hpp"

namespace linphase {

namespace {

double base_draw(BaseDistribution base, std::uint64_t seed, std::uint64_t row,
                 std::uint64_t col) {
  switch (base) {
    case BaseDistribution::gaussian:
      return rng::standard_normal(seed, rng::Stream::inputs, row, col);
    case BaseDistribution::rademacher:
      return rng::rademacher(seed, rng::Stream::inputs, row, col);
    case BaseDistribution::uniform_scaled:
      return std::sqrt(3.0) * (2.0 * rng::uniform(seed, rng::Stream::inputs, row, col) - 1.0);
  }
  return 0.0;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace

BaseDistribution parse_base_distribution(std::string_view name) {
  if (name == "gaussian") return BaseDistribution::gaussian;
  if (name == "rademacher") return BaseDistribution::rademacher;
  if (name == "uniform" || name == "uniform-scaled") return BaseDistribution::uniform_scaled;
  throw std::invalid_argument("unknown base distribution '" + std::string(name) + "'");
}

std::string to_string(BaseDistribution base) {
  switch (base) {
    case BaseDistribution::gaussian: return "gaussian";
    case BaseDistribution::rademacher: return "rademacher";
    case BaseDistribution::uniform_scaled: return "uniform-scaled";
  }
  return "unknown";
}

Eigen::MatrixXd generate_input_rows(const DataSpec& spec, int first_row, int count) {
  const int d = spec.dim();
  if (d < 1 || count < 0 || first_row < 0) {
    throw std::invalid_argument("generate_inputs: need d >= 1 and a non-negative row range");
  }
  Eigen::VectorXd scale(d);
  for (int j = 0; j < d; ++j) scale[j] = std::sqrt(spec.covariance.entry(j));
  Eigen::MatrixXd X(count, d);
  for (int i = 0; i < count; ++i) {
    const auto row = static_cast<std::uint64_t>(first_row + i);
    for (int j = 0; j < d; ++j) {
      X(i, j) = scale[j] * base_draw(spec.base, spec.seed, row, static_cast<std::uint64_t>(j));
    }
  }
  return X;
}

Eigen::MatrixXd generate_inputs(const DataSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("generate_inputs: n must be >= 1");
  return generate_input_rows(spec, 0, spec.n);
}

Eigen::MatrixXd generate_hypercube(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("generate_hypercube: n, d must be >= 1");
  DataSpec spec{CovarianceSpec::identity(d), BaseDistribution::rademacher, n, seed};
  return generate_inputs(spec);
}

Eigen::VectorXd labels_teacher_sign(const Eigen::MatrixXd& X, const TwoLayerNet& teacher) {
  const Eigen::VectorXd f = forward(teacher, X);
  return f.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

Labels labels_norm_dependent(const Eigen::MatrixXd& X, const Eigen::VectorXd& a) {
  if (a.size() != X.cols()) {
    throw std::invalid_argument("labels_norm_dependent: direction has wrong dimension");
  }
  const double sqrt_d = std::sqrt(static_cast<double>(X.cols()));
  Labels out;
  out.y = X.rowwise().norm() / sqrt_d + (X * a).cwiseMax(0.0);
  const auto outside = (out.y.array().abs() > 1.0).count();
  if (outside > 0) {
    out.warnings.push_back(std::to_string(outside) + " of " + std::to_string(out.y.size()) +
                           " norm-dependent labels have |y| > 1; kept unclipped");
  }
  return out;
}

Eigen::VectorXd random_direction(int d, double norm, std::uint64_t seed) {
  Eigen::VectorXd a(d);
  for (int j = 0; j < d; ++j) {
    a[j] = rng::standard_normal(seed, rng::Stream::label_direction, 0, static_cast<std::uint64_t>(j));
  }
  return a * (norm / a.norm());
}

ConcentrationReport concentration_report(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  const double d = static_cast<double>(X.cols());
  Eigen::MatrixXd G(n, n);
  G.setZero();
  G.selfadjointView<Eigen::Lower>().rankUpdate(X);
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();

  ConcentrationReport r;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.max_norm_dev = std::max(r.max_norm_dev, std::abs(G(i, i) / d - 1.0));
    for (Eigen::Index j = 0; j < i; ++j) {
      r.max_offdiag = std::max(r.max_offdiag, std::abs(G(i, j)) / d);
    }
  }
  r.gram_spectral_over_n = n > 0 ? spectral_norm(G) / static_cast<double>(n) : 0.0;
  return r;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const int d = data.dim();
  for (int j = 0; j < d; ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < d; ++j) out << format_double(data.X(i, j)) << ',';
    out << format_double(data.y[i]) << '\n';
  }
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Dataset load_csv(const std::filesystem::path& path, LabelBound bound) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path.string() + "'", 0);

  std::string line;
  if (!std::getline(in, line)) throw CsvError(path.string() + ": missing header row", 1);
  const auto columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) {
    throw CsvError(path.string() + ":1: header needs at least one feature and a label", 1);
  }
  const int d = columns - 1;

  std::vector<double> values;
  int line_no = 1;
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int fields = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      const auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc() || res.ptr != comma) {
        throw CsvError(path.string() + ":" + std::to_string(line_no) + ": field " +
                           std::to_string(fields + 1) + " is not a number",
                       line_no);
      }
      ++fields;
      if (fields <= columns) values.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    if (fields != columns) {
      throw CsvError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(columns) + " fields, got " + std::to_string(fields),
                     line_no);
    }
    const double label = values.back();
    if (bound == LabelBound::enforce && !(std::abs(label) <= 1.0)) {
      throw CsvError(path.string() + ":" + std::to_string(line_no) + ": label " +
                         format_double(label) + " violates |y| <= 1",
                     line_no);
    }
    ++rows;
  }

  Dataset data;
  data.X.resize(rows, d);
  data.y.resize(rows);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < d; ++j) data.X(i, j) = values[static_cast<std::size_t>(i) * columns + j];
    data.y[i] = values[static_cast<std::size_t>(i) * columns + d];
  }
  data.provenance = "csv:" + path.string();
  return data;
}

}  // namespace linphase
