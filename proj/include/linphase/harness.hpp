#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "linphase/activations.hpp"
#include "linphase/datagen.hpp"
#include "linphase/kernels.hpp"
#include "linphase/linmodel.hpp"
#include "linphase/network.hpp"
#include "linphase/spectral.hpp"

namespace linphase {

enum class LabelKind { teacher_sign, norm_dependent };

LabelKind parse_label_kind(std::string_view name);
std::string to_string(LabelKind kind);

struct CoupledRunConfig {
  Mode mode = Mode::both;
  // data
  int d = 50;
  int n = 5000;
  int n_test = 2000;
  BaseDistribution base = BaseDistribution::gaussian;
  std::vector<double> spectrum;  // empty means Sigma = I
  LabelKind labels = LabelKind::teacher_sign;
  int teacher_width = 5;
  double direction_norm = 0.5;  // |a| for the norm-dependent target
  // network
  int m = 256;
  Activation act = Activation::erf();
  std::uint64_t seed = 0;
  // schedule
  std::optional<double> eta;  // default: default_learning_rate
  std::optional<int> T;       // default: horizon_steps(horizon_c, d, eta)
  double horizon_c = 0.25;
  int record_stride = 1;
  int quad_order = 0;  // 0 selects the activation default
  bool keep_snapshots = false;
};

// first: 0.1 d. second / both: 0.1 d / log n when theta0 == 0, else 0.1.
double default_learning_rate(Mode mode, int d, int n, const Moments& mom);

// Data, models and schedule for one coupled run, before any training.
struct Problem {
  Dataset train;
  Dataset test;
  Moments moments;
  double nu = 0.0;
  FeatureMap map;
  TwoLayerNet net;
  double eta = 0.0;
  int T = 0;
  std::vector<std::string> warnings;
};

Problem make_problem(const CoupledRunConfig& cfg);

struct AgreementRecord {
  int step = 0;
  double train_mse_net = 0.0;
  double train_mse_lin = 0.0;
  double train_gap = 0.0;         // (1/n) sum (f_t - f_t^lin)^2
  double test_gap_clipped = 0.0;  // mean over test of min{(f_t - f_t^lin)^2, 1}
  double w_move_fro = 0.0;
  double v_move_l2 = 0.0;
  double beta_norm = 0.0;
};

struct Snapshot {
  int step = 0;
  TwoLayerNet net;
};

struct CoupledRunResult {
  double eta = 0.0;
  int T = 0;
  Moments moments;
  double nu = 0.0;
  std::vector<AgreementRecord> records;
  std::vector<Snapshot> snapshots;  // only with keep_snapshots
  std::vector<std::string> warnings;
};

// Network and matching linear model trained in lockstep with the same eta.
CoupledRunResult coupled_run(const CoupledRunConfig& cfg);

void write_agreement_csv(const std::vector<AgreementRecord>& records, const std::string& path);

struct DimensionSweep {
  std::vector<int> ds;
  std::vector<std::uint64_t> seeds;
  double eta = 0.0;       // shared by every d
  int window = 0;         // common early window [0, window] in steps
  std::vector<int> horizons;  // per-d horizon c d log d / eta
  std::vector<std::vector<double>> gaps;          // [d][seed] max train_gap over the window
  std::vector<std::vector<double>> horizon_gaps;  // [d][seed] max train_gap over the own horizon
  std::vector<double> median;          // of gaps
  std::vector<double> horizon_median;  // of horizon_gaps
  bool strictly_decreasing = false;    // median, consecutive d
};

// Every d runs with the same eta (base.eta, else the default rule at the
// smallest d) up to its own horizon. The gaps compare all d on the common
// window: base.T if set, else the horizon of the smallest d.
DimensionSweep discrepancy_vs_dimension(const std::vector<int>& ds, const CoupledRunConfig& base,
                                        int num_seeds);

struct DeviationRecord {
  int step = 0;
  double eps = 0.0;       // |J(theta_t) J(theta_0)^T - K|
  double eps_rel = 0.0;   // eps / (n / d)
};

// Spectral norm of the Jacobian cross-Gram deviation at every snapshot,
// with the layers picked by mode.
std::vector<DeviationRecord> jacobian_deviation_probe(const std::vector<Snapshot>& snapshots,
                                                      const TwoLayerNet& initial,
                                                      const Eigen::MatrixXd& X,
                                                      const Eigen::MatrixXd& K_lin, Mode mode);

struct SubspaceEnergy {
  double in_span = 0.0;     // energy in the column span of X_test
  double complement = 0.0;  // energy in its orthogonal complement
  int rank = 0;
};

// Throws std::invalid_argument unless n_test > d.
SubspaceEnergy residual_subspace_decomposition(const Eigen::VectorXd& residual,
                                               const Eigen::MatrixXd& X_test);

struct AblationStep {
  int step = 0;
  double gap_full = 0.0;   // (1/n) sum (f_t - f_t^lin)^2
  double gap_naive = 0.0;  // same with theta1 = theta2 = 0
};

struct AblationResult {
  std::vector<AblationStep> steps;
  double eta = 0.0;
  int T = 0;
  // Share of recorded steps t >= 1 where the full model is strictly closer.
  double fraction_full_better = 0.0;
  std::vector<std::string> warnings;
};

AblationResult norm_feature_ablation_experiment(const CoupledRunConfig& cfg);

struct SpectralDecayResult {
  std::vector<int> ds;
  std::vector<std::vector<double>> spectral;   // [d][seed]
  std::vector<std::vector<double>> frobenius;  // [d][seed]
  std::vector<double> mean_spectral;
  std::vector<double> mean_frobenius;
  DecayFit spectral_fit;
  DecayFit frobenius_fit;
};

// Norms of Theta1(W(0)) - Theta^lin1 on Gaussian data with fixed (n, m).
// Throws std::invalid_argument ("degenerate fit") if any mean norm is 0.
SpectralDecayResult spectral_decay_experiment(const std::vector<int>& ds, int n, int m,
                                              const Activation& act, int num_seeds,
                                              std::uint64_t seed);

double median(std::vector<double> values);

}  // namespace linphase
