#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "linphase/datagen.hpp"
#include "linphase/network.hpp"
#include "linphase/rng.hpp"
#include "oracles.hpp"

using namespace linphase;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "linphase-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

DataSpec spec(int n, int d, BaseDistribution base, std::uint64_t seed) {
  return {CovarianceSpec::identity(d), base, n, seed};
}

}  // namespace

TEST_CASE("rng streams are pure functions of their key") {
  using rng::Stream;
  CHECK(rng::hash(1, Stream::inputs, 2, 3) == rng::hash(1, Stream::inputs, 2, 3));
  CHECK(rng::hash(1, Stream::inputs, 2, 3) != rng::hash(1, Stream::init_first_layer, 2, 3));
  CHECK(rng::hash(1, Stream::inputs, 2, 3) != rng::hash(2, Stream::inputs, 2, 3));
  const double u = rng::uniform(5, Stream::inputs, 0, 0);
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
  CHECK(rng::derive_seed(3, 0) != rng::derive_seed(3, 1));
}

TEST_CASE("rademacher rows lie on the hypercube") {
  const Eigen::MatrixXd X = generate_inputs(spec(4, 8, BaseDistribution::rademacher, 1));
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 8; ++j) CHECK(std::abs(X(i, j)) == 1.0);
    CHECK(X.row(i).squaredNorm() == 8.0);
  }
}

TEST_CASE("hypercube generator") {
  const Eigen::MatrixXd small = generate_hypercube(2, 4, 3);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) CHECK((small(i, j) == 1.0 || small(i, j) == -1.0));
  }
  const Eigen::MatrixXd X = generate_hypercube(1000, 64, 3);
  for (int i = 0; i < X.rows(); ++i) CHECK(X.row(i).squaredNorm() == 64.0);
  const ConcentrationReport r = concentration_report(X);
  CHECK(r.max_norm_dev == 0.0);
  CHECK(r.max_offdiag <= 5.0 * std::sqrt(std::log(1000.0) / 64.0));
}

TEST_CASE("gaussian concentration at n=2000, d=200") {
  const Eigen::MatrixXd X = generate_inputs(spec(2000, 200, BaseDistribution::gaussian, 17));
  const ConcentrationReport r = concentration_report(X);
  const double bound = 5.0 * std::sqrt(std::log(2000.0) / 200.0);
  CHECK(r.max_norm_dev <= bound);
  CHECK(r.max_offdiag <= bound);
  CHECK(r.gram_spectral_over_n >= 0.5);
  CHECK(r.gram_spectral_over_n <= 20.0);
  // Oracle: recompute the three statistics densely.
  const Eigen::MatrixXd G = X * X.transpose();
  double norm_dev = 0.0, offdiag = 0.0;
  for (int i = 0; i < 2000; ++i) {
    norm_dev = std::max(norm_dev, std::abs(G(i, i) / 200.0 - 1.0));
    for (int j = 0; j < i; ++j) offdiag = std::max(offdiag, std::abs(G(i, j)) / 200.0);
  }
  CHECK(r.max_norm_dev == doctest::Approx(norm_dev).epsilon(1e-12));
  CHECK(r.max_offdiag == doctest::Approx(offdiag).epsilon(1e-12));
  CHECK(r.gram_spectral_over_n ==
        doctest::Approx(oracle::max_abs_eigenvalue(X.transpose() * X) / 2000.0).epsilon(1e-5));
}

TEST_CASE("concentration of duplicated rows") {
  Eigen::MatrixXd X = oracle::gaussian(5, 30, 8);
  X.row(3) = X.row(1);
  const ConcentrationReport r = concentration_report(X);
  CHECK(r.max_offdiag >= X.row(1).squaredNorm() / 30.0 - 1e-12);
  CHECK(r.max_norm_dev >= 0.0);
}

TEST_CASE("diagonal spectrum of ones matches identity") {
  for (auto base : {BaseDistribution::gaussian, BaseDistribution::rademacher,
                    BaseDistribution::uniform_scaled}) {
    const DataSpec a{CovarianceSpec::identity(6), base, 20, 4};
    const DataSpec b{CovarianceSpec::diagonal(std::vector<double>(6, 1.0)), base, 20, 4};
    CHECK(generate_inputs(a) == generate_inputs(b));
  }
}

TEST_CASE("rows do not depend on n") {
  const auto big = generate_inputs(spec(50, 7, BaseDistribution::gaussian, 9));
  const auto small = generate_inputs(spec(20, 7, BaseDistribution::gaussian, 9));
  CHECK(big.topRows(20) == small);
  const DataSpec s = spec(50, 7, BaseDistribution::gaussian, 9);
  CHECK(generate_input_rows(s, 30, 10) == big.middleRows(30, 10));
  CHECK(generate_inputs(s) == big);
}

TEST_CASE("base distribution moments") {
  const int n = 100000;
  for (auto base : {BaseDistribution::gaussian, BaseDistribution::rademacher,
                    BaseDistribution::uniform_scaled}) {
    const DataSpec s{CovarianceSpec::diagonal({0.5, 1.0, 1.5}), base, n, 21};
    const Eigen::MatrixXd X = generate_inputs(s);
    for (int j = 0; j < 3; ++j) {
      const double mean = X.col(j).mean();
      const double var = (X.col(j).array() - mean).square().sum() / n;
      CHECK_MESSAGE(std::abs(mean) <= 5.0 / std::sqrt(n), to_string(base));
      CHECK_MESSAGE(std::abs(var / s.covariance.entry(j) - 1.0) <= 0.05, to_string(base));
    }
    if (base == BaseDistribution::uniform_scaled) {
      CHECK(X.col(1).cwiseAbs().maxCoeff() <= std::sqrt(3.0));
    }
  }
}

TEST_CASE("norm deviation shrinks with d") {
  const int n = 2000;
  const auto r1 = concentration_report(generate_inputs(spec(n, 100, BaseDistribution::gaussian, 2)));
  const auto r4 = concentration_report(generate_inputs(spec(n, 400, BaseDistribution::gaussian, 2)));
  const double factor = r1.max_norm_dev / r4.max_norm_dev;
  CHECK(factor >= 1.4);
  CHECK(factor <= 3.0);
}

TEST_CASE("base distribution names") {
  CHECK(parse_base_distribution("uniform-scaled") == BaseDistribution::uniform_scaled);
  CHECK(to_string(BaseDistribution::rademacher) == "rademacher");
  CHECK_THROWS_AS(parse_base_distribution("laplace"), std::invalid_argument);
}

TEST_CASE("teacher sign labels") {
  const Eigen::MatrixXd X = generate_inputs(spec(10000, 50, BaseDistribution::gaussian, 3));
  TwoLayerNet teacher = random_init(5, 50, Activation::erf(), 3);

  const Eigen::VectorXd y = labels_teacher_sign(X, teacher);
  const double positive = (y.array() > 0.0).cast<double>().mean();
  CHECK(positive >= 0.3);
  CHECK(positive <= 0.7);
  for (int i = 0; i < y.size(); ++i) CHECK(std::abs(y(i)) == 1.0);

  TwoLayerNet flipped = teacher;
  flipped.v = -teacher.v;
  const Eigen::VectorXd f = forward(teacher, X);
  const Eigen::VectorXd yf = labels_teacher_sign(X, flipped);
  for (int i = 0; i < y.size(); ++i) {
    if (f(i) != 0.0) CHECK(yf(i) == -y(i));
  }

  TwoLayerNet silent = teacher;
  silent.v.setZero();
  CHECK((labels_teacher_sign(X, silent).array() == 1.0).all());
}

TEST_CASE("norm-dependent labels") {
  Eigen::MatrixXd X = oracle::gaussian(4, 6, 1);
  X.row(2).setZero();
  const Eigen::VectorXd a = random_direction(6, 0.5, 1);
  CHECK(a.norm() == doctest::Approx(0.5).epsilon(1e-14));
  const Labels l = labels_norm_dependent(X, a);
  CHECK(l.y(2) == 0.0);

  const Labels flat = labels_norm_dependent(X, Eigen::VectorXd::Zero(6));
  for (int i = 0; i < 4; ++i) {
    CHECK(flat.y(i) == doctest::Approx(X.row(i).norm() / std::sqrt(6.0)).epsilon(1e-15));
  }
}

TEST_CASE("norm-dependent label mean against Monte Carlo") {
  const int d = 50;
  const Eigen::MatrixXd X = generate_inputs(spec(20000, d, BaseDistribution::gaussian, 12));
  const Eigen::VectorXd a = random_direction(d, 0.5, 12);
  const Labels l = labels_norm_dependent(X, a);
  CHECK_FALSE(l.warnings.empty());  // some labels exceed 1

  // a^T x ~ N(0, |a|^2) and |x| / sqrt(d) has mean close to 1.
  oracle::Normal g(31);
  const auto relu = oracle::monte_carlo(1'000'000, [&] { return std::max(0.5 * g(), 0.0); });
  const auto norm = oracle::monte_carlo(20000, [&] {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double z = g();
      s += z * z;
    }
    return std::sqrt(s / d);
  });
  CHECK(std::abs(l.y.mean() - (norm.mean + relu.mean)) < 0.02);
}

TEST_CASE("csv round trip") {
  Dataset data;
  data.X = oracle::gaussian(7, 4, 77) * 1e-3;
  data.X(0, 0) = 1.0 / 3.0;
  data.y = Eigen::VectorXd::LinSpaced(7, -1.0, 1.0);
  data.y(3) = 0.1 + 0.2;
  const auto path = temp_file("round.csv");
  save_csv(data, path);
  const Dataset back = load_csv(path);
  CHECK(back.X == data.X);
  CHECK(back.y == data.y);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x1,x2,x3,x4,y");
}

TEST_CASE("csv errors carry the line number") {
  const auto path = temp_file("bad.csv");
  {
    std::ofstream out(path);
    out << "x1,x2,x3,x4,y\n1,2,3,4,0.5\n1,2,0.5\n";
  }
  try {
    load_csv(path);
    FAIL("expected a parse error");
  } catch (const CsvError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "x1,x2,y\n1,2,1.5\n";
  }
  CHECK_THROWS_AS(load_csv(path), CsvError);
  CHECK(load_csv(path, LabelBound::ignore).y(0) == 1.5);

  {
    std::ofstream out(path);
    out << "x1,y\nabc,0.5\n";
  }
  CHECK_THROWS_AS(load_csv(path), CsvError);
  CHECK_THROWS_AS(load_csv(temp_file("missing-file.csv")), std::exception);
}
