#include <doctest.h>

#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "linphase/harness.hpp"
#include "oracles.hpp"

using namespace linphase;

namespace {

CoupledRunConfig small_config(Mode mode) {
  CoupledRunConfig cfg;
  cfg.mode = mode;
  cfg.d = 12;
  cfg.n = 300;
  cfg.n_test = 100;
  cfg.m = 64;
  cfg.seed = 5;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("label kinds") {
  CHECK(parse_label_kind("norm-dependent") == LabelKind::norm_dependent);
  CHECK(to_string(LabelKind::teacher_sign) == "teacher-sign");
  CHECK_THROWS_AS(parse_label_kind("xor"), std::invalid_argument);
}

TEST_CASE("default learning rates") {
  const Moments erf = moments(Activation::erf());
  const Moments relu = moments(Activation::relu());
  CHECK(default_learning_rate(Mode::first, 50, 5000, erf) == doctest::Approx(5.0));
  CHECK(default_learning_rate(Mode::both, 50, 5000, erf) ==
        doctest::Approx(5.0 / std::log(5000.0)));
  CHECK(default_learning_rate(Mode::second, 50, 5000, relu) == doctest::Approx(0.1));
}

TEST_CASE("coupled run invariants") {
  for (Mode mode : {Mode::first, Mode::second, Mode::both}) {
    CoupledRunConfig cfg = small_config(mode);
    cfg.keep_snapshots = true;
    const CoupledRunResult r = coupled_run(cfg);
    REQUIRE(!r.records.empty());
    CHECK(r.records.front().step == 0);
    CHECK(r.records.back().step == r.T);
    CHECK(r.records.front().train_gap == 0.0);
    CHECK(r.records.front().test_gap_clipped == 0.0);
    CHECK(r.T == horizon_steps(0.25, cfg.d, r.eta));
    for (const auto& rec : r.records) {
      CHECK(rec.train_gap >= 0.0);
      CHECK(rec.test_gap_clipped >= 0.0);
      CHECK(rec.test_gap_clipped <= 1.0);
    }
    const TwoLayerNet& first = r.snapshots.front().net;
    for (const auto& s : r.snapshots) {
      if (mode == Mode::second) CHECK(s.net.W == first.W);
      if (mode == Mode::first) CHECK(s.net.v == first.v);
    }
  }
}

TEST_CASE("coupled run is deterministic") {
  CoupledRunConfig cfg = small_config(Mode::both);
  cfg.record_stride = 3;
  const CoupledRunResult a = coupled_run(cfg);
  const CoupledRunResult b = coupled_run(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].train_gap == b.records[k].train_gap);
    CHECK(a.records[k].train_mse_net == b.records[k].train_mse_net);
    CHECK(a.records[k].beta_norm == b.records[k].beta_norm);
  }
  const auto dir = std::filesystem::temp_directory_path();
  write_agreement_csv(a.records, (dir / "agree-a.csv").string());
  write_agreement_csv(b.records, (dir / "agree-b.csv").string());
  CHECK(slurp(dir / "agree-a.csv") == slurp(dir / "agree-b.csv"));
  CHECK(slurp(dir / "agree-a.csv").rfind("step,train_mse_net,train_mse_lin,train_gap", 0) == 0);
}

TEST_CASE("coupled run matches standalone training") {
  const CoupledRunConfig cfg = small_config(Mode::first);
  const CoupledRunResult r = coupled_run(cfg);
  Problem p = make_problem(cfg);
  const auto rows = train(p.net, p.train.X, p.train.y, {p.eta, 0.0, p.T});
  const LinTrainResult lin = lin_gd_train(p.map, p.train.X, p.train.y, p.eta, p.T);
  CHECK(rows.back().train_mse == r.records.back().train_mse_net);
  CHECK(lin.rows.back().train_mse == doctest::Approx(r.records.back().train_mse_lin).epsilon(1e-14));
}

TEST_CASE("zero labels keep every discrepancy at zero") {
  const CoupledRunConfig cfg = small_config(Mode::both);
  Problem p = make_problem(cfg);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(cfg.n);
  LinearGd lin(p.map, p.train.X, y, p.eta);
  LinearGd naive(naive_map(p.map), p.train.X, y, p.eta);
  for (int t = 0; t < 10; ++t) {
    gd_step(p.net, p.train.X, y, p.eta, p.eta);
    lin.step();
    naive.step();
  }
  CHECK(forward(p.net, p.train.X).isZero(0.0));
  CHECK(lin.predictions().isZero(0.0));
  CHECK(naive.predictions().isZero(0.0));
}

TEST_CASE("norm-dependent labels report out-of-range values") {
  CoupledRunConfig cfg = small_config(Mode::both);
  cfg.labels = LabelKind::norm_dependent;
  cfg.act = Activation::relu();
  const Problem p = make_problem(cfg);
  CHECK_FALSE(p.warnings.empty());
  CHECK(p.eta == doctest::Approx(0.1));
}

TEST_CASE("dimension sweep bookkeeping") {
  CoupledRunConfig base = small_config(Mode::both);
  base.n_test = 0;
  const DimensionSweep one = discrepancy_vs_dimension({8}, base, 2);
  CHECK(one.median.size() == 1);
  CHECK(one.strictly_decreasing);
  CHECK(one.window == one.horizons[0]);

  const DimensionSweep dup = discrepancy_vs_dimension({8, 8}, base, 2);
  CHECK(dup.gaps[0] == dup.gaps[1]);
  CHECK(dup.median[0] == dup.median[1]);
  CHECK_FALSE(dup.strictly_decreasing);
  CHECK(dup.median[0] == one.median[0]);

  const DimensionSweep three = discrepancy_vs_dimension({6, 9, 12}, base, 2);
  CHECK(three.seeds.size() == 2);
  CHECK(three.window == horizon_steps(0.25, 6, three.eta));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t s = 0; s < 2; ++s) CHECK(three.gaps[k][s] <= three.horizon_gaps[k][s]);
  }
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(discrepancy_vs_dimension({}, base, 2), std::invalid_argument);
}

TEST_CASE("jacobian deviation probe") {
  const CoupledRunConfig cfg = small_config(Mode::both);
  const Problem p = make_problem(cfg);
  const Eigen::MatrixXd K0 = ntk_full(p.net, p.train.X).values;
  const auto at_init = jacobian_deviation_probe({{0, p.net}}, p.net, p.train.X, K0, Mode::both);
  REQUIRE(at_init.size() == 1);
  CHECK(at_init[0].eps == 0.0);

  CoupledRunConfig id = small_config(Mode::first);
  id.act = Activation::identity();
  id.keep_snapshots = true;
  id.record_stride = 5;
  const CoupledRunResult r = coupled_run(id);
  const Problem q = make_problem(id);
  CHECK(q.nu == 0.0);
  const Eigen::MatrixXd L = linear_kernel(q.train.X, q.moments, q.nu, Mode::first).values;
  for (const auto& d : jacobian_deviation_probe(r.snapshots, q.net, q.train.X, L, Mode::first)) {
    CHECK(d.eps <= 1e-12 * L.norm());
    CHECK(d.eps_rel == doctest::Approx(d.eps / (300.0 / 12.0)));
  }
}

TEST_CASE("jacobian deviation stays small in the early phase") {
  CoupledRunConfig cfg;
  cfg.mode = Mode::both;
  cfg.d = 64;
  cfg.n = 4096;
  cfg.n_test = 0;
  cfg.m = 1024;
  cfg.seed = 11;
  cfg.record_stride = 20;
  cfg.keep_snapshots = true;
  const CoupledRunResult r = coupled_run(cfg);
  const Problem p = make_problem(cfg);
  const Eigen::MatrixXd L = linear_kernel(p.train.X, p.moments, p.nu, Mode::both).values;
  const auto dev = jacobian_deviation_probe(r.snapshots, p.net, p.train.X, L, Mode::both);
  REQUIRE(dev.size() >= 2);
  CHECK(dev.front().eps_rel < 0.5);
  for (const auto& d : dev) CHECK_MESSAGE(d.eps <= 1.05 * dev.front().eps, "step " << d.step);
}

TEST_CASE("residual subspace decomposition") {
  const Eigen::MatrixXd X = oracle::gaussian(40, 6, 3);
  const Eigen::VectorXd inside = X * oracle::gaussian_vector(6, 4);
  const SubspaceEnergy a = residual_subspace_decomposition(inside, X);
  CHECK(a.rank == 6);
  CHECK(a.complement <= 1e-20 * inside.squaredNorm() + 1e-24);
  CHECK(a.in_span == doctest::Approx(inside.squaredNorm()).epsilon(1e-12));

  const Eigen::VectorXd z = oracle::gaussian_vector(40, 5);
  const Eigen::VectorXd perp = z - X * X.colPivHouseholderQr().solve(z);
  const SubspaceEnergy b = residual_subspace_decomposition(perp, X);
  CHECK(b.in_span <= 1e-20 * perp.squaredNorm() + 1e-24);

  const SubspaceEnergy c = residual_subspace_decomposition(z, X);
  CHECK(std::abs(c.in_span + c.complement - z.squaredNorm()) <= 1e-10 * z.squaredNorm());

  Eigen::MatrixXd dup = X;
  dup.col(5) = dup.col(0);
  CHECK(residual_subspace_decomposition(z, dup).rank == 5);
  CHECK_THROWS_AS(residual_subspace_decomposition(z.head(6), X.topRows(6)), std::invalid_argument);
}

TEST_CASE("ablation is a no-op for erf") {
  CoupledRunConfig cfg = small_config(Mode::both);
  cfg.labels = LabelKind::norm_dependent;
  const AblationResult r = norm_feature_ablation_experiment(cfg);
  for (const auto& s : r.steps) CHECK(s.gap_full == s.gap_naive);
  CHECK(r.fraction_full_better == 0.0);
}

TEST_CASE("spectral decay rejects the identity activation") {
  CHECK_THROWS_AS(spectral_decay_experiment({4, 8, 16}, 50, 20, Activation::identity(), 1, 0),
                  std::invalid_argument);
}

TEST_CASE("spectral norm decays faster than the Frobenius norm") {
  const SpectralDecayResult r =
      spectral_decay_experiment({16, 32, 64, 128}, 600, 1200, Activation::erf(), 2, 4);
  CHECK(r.mean_spectral.size() == 4);
  CHECK(r.frobenius_fit.slope - r.spectral_fit.slope >= 0.2);
}
