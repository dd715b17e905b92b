#include "linphase/harness.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "linphase/rng.hpp"

namespace linphase {

namespace {

CovarianceSpec covariance_of(const CoupledRunConfig& cfg) {
  if (cfg.spectrum.empty()) return CovarianceSpec::identity(cfg.d);
  if (static_cast<int>(cfg.spectrum.size()) != cfg.d) {
    throw std::invalid_argument("covariance spectrum has " + std::to_string(cfg.spectrum.size()) +
                                " entries, expected d = " + std::to_string(cfg.d));
  }
  return CovarianceSpec::diagonal(cfg.spectrum);
}

bool recorded(int t, int T, int stride) { return t % stride == 0 || t == T; }

double mean_sq_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double clipped_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).array().square().min(1.0).mean();
}

}  // namespace

LabelKind parse_label_kind(std::string_view name) {
  if (name == "teacher-sign") return LabelKind::teacher_sign;
  if (name == "norm-dependent") return LabelKind::norm_dependent;
  throw std::invalid_argument("unknown label kind '" + std::string(name) +
                              "' (teacher-sign, norm-dependent)");
}

std::string to_string(LabelKind kind) {
  return kind == LabelKind::teacher_sign ? "teacher-sign" : "norm-dependent";
}

double default_learning_rate(Mode mode, int d, int n, const Moments& mom) {
  if (mode == Mode::first) return 0.1 * d;
  if (std::abs(mom.theta0) < 1e-12) return 0.1 * d / std::log(static_cast<double>(n));
  return 0.1;
}

Problem make_problem(const CoupledRunConfig& cfg) {
  if (cfg.n < 1 || cfg.d < 1) throw std::invalid_argument("n and d must be >= 1");
  if (cfg.n_test < 0) throw std::invalid_argument("test size must be non-negative");
  if (cfg.record_stride < 1) throw std::invalid_argument("record stride must be >= 1");

  Problem p;
  const CovarianceSpec cov = covariance_of(cfg);
  const DataSpec spec{cov, cfg.base, cfg.n, cfg.seed};
  p.train.X = generate_inputs(spec);
  p.test.X = generate_input_rows(spec, cfg.n, cfg.n_test);

  switch (cfg.labels) {
    case LabelKind::teacher_sign: {
      const TwoLayerNet teacher = random_init(cfg.teacher_width, cfg.d, Activation::erf(), cfg.seed);
      p.train.y = labels_teacher_sign(p.train.X, teacher);
      p.test.y = labels_teacher_sign(p.test.X, teacher);
      break;
    }
    case LabelKind::norm_dependent: {
      const Eigen::VectorXd a = random_direction(cfg.d, cfg.direction_norm, cfg.seed);
      Labels tr = labels_norm_dependent(p.train.X, a);
      Labels te = labels_norm_dependent(p.test.X, a);
      p.train.y = std::move(tr.y);
      p.test.y = std::move(te.y);
      for (auto& w : tr.warnings) p.warnings.push_back("train: " + w);
      for (auto& w : te.warnings) p.warnings.push_back("test: " + w);
      break;
    }
  }
  p.train.provenance = "generated:train";
  p.test.provenance = "generated:test";

  const int order = cfg.quad_order > 0 ? cfg.quad_order : default_quadrature_order(cfg.act);
  p.moments = moments(cfg.act, order);
  p.nu = nu(p.moments, cov);
  p.map = FeatureMap{cfg.mode, p.moments, p.nu, cfg.d};
  p.net = symmetric_init(cfg.m, cfg.d, cfg.act, cfg.seed);
  p.eta = cfg.eta ? *cfg.eta : default_learning_rate(cfg.mode, cfg.d, cfg.n, p.moments);
  if (!(p.eta > 0.0) || !std::isfinite(p.eta)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  p.T = cfg.T ? *cfg.T : horizon_steps(cfg.horizon_c, cfg.d, p.eta);
  if (p.T < 0) throw std::invalid_argument("step count T must be non-negative");
  return p;
}

CoupledRunResult coupled_run(const CoupledRunConfig& cfg) {
  Problem p = make_problem(cfg);
  const double eta1 = cfg.mode == Mode::second ? 0.0 : p.eta;
  const double eta2 = cfg.mode == Mode::first ? 0.0 : p.eta;

  CoupledRunResult out;
  out.eta = p.eta;
  out.T = p.T;
  out.moments = p.moments;
  out.nu = p.nu;
  out.warnings = p.warnings;

  TwoLayerNet& net = p.net;
  const Eigen::MatrixXd W0 = net.W;
  const Eigen::VectorXd v0 = net.v;
  LinearGd lin(p.map, p.train.X, p.train.y, p.eta);
  const Eigen::MatrixXd Psi_test = feature_matrix(p.map, p.test.X);
  const double n = cfg.n;

  double initial_net = 0.0;
  double initial_lin = 0.0;
  for (int t = 0; t <= p.T; ++t) {
    const Eigen::VectorXd u = forward(net, p.train.X);
    const double loss_net = 0.5 * (u - p.train.y).squaredNorm() / n;
    const double loss_lin = lin.loss();
    if (t == 0) {
      initial_net = loss_net;
      initial_lin = loss_lin;
    }
    check_divergence(loss_net, initial_net, t);
    check_divergence(loss_lin, initial_lin, t);

    if (recorded(t, p.T, cfg.record_stride)) {
      AgreementRecord r;
      r.step = t;
      r.train_mse_net = 2.0 * loss_net;
      r.train_mse_lin = 2.0 * loss_lin;
      r.train_gap = mean_sq_diff(u, lin.predictions());
      r.test_gap_clipped = clipped_gap(forward(net, p.test.X), Psi_test * lin.beta());
      r.w_move_fro = (net.W - W0).norm();
      r.v_move_l2 = (net.v - v0).norm();
      r.beta_norm = lin.beta().norm();
      out.records.push_back(r);
      if (cfg.keep_snapshots) out.snapshots.push_back({t, net});
    }
    if (t == p.T) break;
    gd_step(net, p.train.X, p.train.y, eta1, eta2);
    lin.step();
  }
  return out;
}

void write_agreement_csv(const std::vector<AgreementRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.precision(17);
  out << "step,train_mse_net,train_mse_lin,train_gap,test_gap_clipped,w_move_fro,v_move_l2,"
         "beta_norm\n";
  for (const auto& r : records) {
    out << r.step << ',' << r.train_mse_net << ',' << r.train_mse_lin << ',' << r.train_gap << ','
        << r.test_gap_clipped << ',' << r.w_move_fro << ',' << r.v_move_l2 << ',' << r.beta_norm
        << '\n';
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t k = values.size();
  return k % 2 == 1 ? values[k / 2] : 0.5 * (values[k / 2 - 1] + values[k / 2]);
}

DimensionSweep discrepancy_vs_dimension(const std::vector<int>& ds, const CoupledRunConfig& base,
                                        int num_seeds) {
  if (ds.empty()) throw std::invalid_argument("dimension sweep needs at least one d");
  if (num_seeds < 1) throw std::invalid_argument("dimension sweep needs at least one seed");
  DimensionSweep sweep;
  sweep.ds = ds;
  for (int s = 0; s < num_seeds; ++s) sweep.seeds.push_back(rng::derive_seed(base.seed, s));

  const int d_min = *std::min_element(ds.begin(), ds.end());
  if (base.eta) {
    sweep.eta = *base.eta;
  } else {
    const int order = base.quad_order > 0 ? base.quad_order : default_quadrature_order(base.act);
    sweep.eta = default_learning_rate(base.mode, d_min, base.n, moments(base.act, order));
  }
  sweep.window = base.T ? *base.T : horizon_steps(base.horizon_c, d_min, sweep.eta);

  for (int d : ds) {
    const int horizon = std::max(sweep.window, horizon_steps(base.horizon_c, d, sweep.eta));
    sweep.horizons.push_back(horizon);
    std::vector<double> in_window, in_horizon;
    for (std::uint64_t seed : sweep.seeds) {
      CoupledRunConfig cfg = base;
      cfg.d = d;
      cfg.seed = seed;
      cfg.spectrum.clear();
      cfg.keep_snapshots = false;
      cfg.eta = sweep.eta;
      cfg.T = horizon;
      cfg.n_test = 0;
      cfg.record_stride = 1;
      const CoupledRunResult res = coupled_run(cfg);
      double w = 0.0, h = 0.0;
      for (const auto& r : res.records) {
        if (r.step <= sweep.window) w = std::max(w, r.train_gap);
        h = std::max(h, r.train_gap);
      }
      in_window.push_back(w);
      in_horizon.push_back(h);
    }
    sweep.median.push_back(median(in_window));
    sweep.horizon_median.push_back(median(in_horizon));
    sweep.gaps.push_back(std::move(in_window));
    sweep.horizon_gaps.push_back(std::move(in_horizon));
  }
  sweep.strictly_decreasing = true;
  for (std::size_t k = 1; k < sweep.median.size(); ++k) {
    if (!(sweep.median[k] < sweep.median[k - 1])) sweep.strictly_decreasing = false;
  }
  return sweep;
}

std::vector<DeviationRecord> jacobian_deviation_probe(const std::vector<Snapshot>& snapshots,
                                                      const TwoLayerNet& initial,
                                                      const Eigen::MatrixXd& X,
                                                      const Eigen::MatrixXd& K_lin, Mode mode) {
  if (K_lin.rows() != X.rows() || K_lin.cols() != X.rows()) {
    throw std::invalid_argument("jacobian_deviation_probe: K must be n x n");
  }
  const double scale = static_cast<double>(X.rows()) / static_cast<double>(X.cols());
  std::vector<DeviationRecord> out;
  out.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    const Eigen::MatrixXd D = cross_gram(s.net, initial, X, mode) - K_lin;
    const double eps = spectral_norm(D);
    out.push_back({s.step, eps, eps / scale});
  }
  return out;
}

SubspaceEnergy residual_subspace_decomposition(const Eigen::VectorXd& residual,
                                               const Eigen::MatrixXd& X_test) {
  if (residual.size() != X_test.rows()) {
    throw std::invalid_argument("residual length does not match the number of test points");
  }
  if (X_test.rows() <= X_test.cols()) {
    throw std::invalid_argument("subspace decomposition needs n_test > d (complement is empty)");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X_test);
  const auto rank = qr.rank();
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(X_test.rows(), rank);
  const Eigen::VectorXd coef = Q.transpose() * residual;
  SubspaceEnergy e;
  e.rank = static_cast<int>(rank);
  e.in_span = coef.squaredNorm();
  e.complement = (residual - Q * coef).squaredNorm();
  return e;
}

AblationResult norm_feature_ablation_experiment(const CoupledRunConfig& cfg) {
  Problem p = make_problem(cfg);
  const double eta1 = cfg.mode == Mode::second ? 0.0 : p.eta;
  const double eta2 = cfg.mode == Mode::first ? 0.0 : p.eta;

  AblationResult out;
  out.eta = p.eta;
  out.T = p.T;
  out.warnings = p.warnings;

  LinearGd full(p.map, p.train.X, p.train.y, p.eta);
  LinearGd naive(naive_map(p.map), p.train.X, p.train.y, p.eta);
  const double n = cfg.n;
  double initial = 0.0;
  int counted = 0;
  int better = 0;
  for (int t = 0; t <= p.T; ++t) {
    const Eigen::VectorXd u = forward(p.net, p.train.X);
    const double loss = 0.5 * (u - p.train.y).squaredNorm() / n;
    if (t == 0) initial = loss;
    check_divergence(loss, initial, t);
    if (recorded(t, p.T, cfg.record_stride)) {
      AblationStep s{t, mean_sq_diff(u, full.predictions()), mean_sq_diff(u, naive.predictions())};
      out.steps.push_back(s);
      if (t > 0) {
        ++counted;
        if (s.gap_full < s.gap_naive) ++better;
      }
    }
    if (t == p.T) break;
    gd_step(p.net, p.train.X, p.train.y, eta1, eta2);
    full.step();
    naive.step();
  }
  out.fraction_full_better = counted > 0 ? static_cast<double>(better) / counted : 0.0;
  return out;
}

SpectralDecayResult spectral_decay_experiment(const std::vector<int>& ds, int n, int m,
                                              const Activation& act, int num_seeds,
                                              std::uint64_t seed) {
  if (num_seeds < 1) throw std::invalid_argument("spectral decay needs at least one seed");
  SpectralDecayResult out;
  out.ds = ds;
  const Moments mom = moments(act);
  for (int d : ds) {
    const CovarianceSpec cov = CovarianceSpec::identity(d);
    const double nu_value = nu(mom, cov);
    std::vector<double> spec_norms, fro_norms;
    for (int s = 0; s < num_seeds; ++s) {
      const std::uint64_t run_seed = rng::derive_seed(seed, static_cast<std::uint64_t>(s));
      const Eigen::MatrixXd X =
          generate_inputs(DataSpec{cov, BaseDistribution::gaussian, n, run_seed});
      const TwoLayerNet net = symmetric_init(m, d, act, run_seed);
      Eigen::MatrixXd D = ntk_first_layer(net, X).values;
      D -= linear_kernel(X, mom, nu_value, Mode::first).values;
      spec_norms.push_back(spectral_norm(D));
      fro_norms.push_back(frobenius_norm(D));
    }
    double ms = 0.0, mf = 0.0;
    for (int s = 0; s < num_seeds; ++s) {
      ms += spec_norms[static_cast<std::size_t>(s)];
      mf += fro_norms[static_cast<std::size_t>(s)];
    }
    out.mean_spectral.push_back(ms / num_seeds);
    out.mean_frobenius.push_back(mf / num_seeds);
    out.spectral.push_back(std::move(spec_norms));
    out.frobenius.push_back(std::move(fro_norms));
  }
  out.spectral_fit = decay_fit(out.ds, out.mean_spectral);
  out.frobenius_fit = decay_fit(out.ds, out.mean_frobenius);
  return out;
}

}  // namespace linphase
