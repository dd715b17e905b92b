#include "linphase/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "linphase/harness.hpp"
#include "linphase/rng.hpp"

namespace linphase::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class Kind { integer, uinteger, number, string, boolean, int_list, num_list };

struct KeySpec {
  const char* name;
  Kind kind;
  bool nullable;
};

// Every accepted config key. Defaults live in defaults_for().
const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> keys = {
      {"mode", Kind::string, false},
      {"act", Kind::string, false},
      {"slope", Kind::number, false},
      {"order", Kind::integer, false},
      {"d", Kind::integer, false},
      {"n", Kind::integer, false},
      {"n_test", Kind::integer, false},
      {"m", Kind::integer, false},
      {"base", Kind::string, false},
      {"spectrum", Kind::num_list, true},
      {"labels", Kind::string, false},
      {"teacher_width", Kind::integer, false},
      {"direction_norm", Kind::number, false},
      {"seed", Kind::uinteger, false},
      {"eta", Kind::number, true},
      {"T", Kind::integer, true},
      {"horizon_c", Kind::number, false},
      {"record_stride", Kind::integer, false},
      {"seeds", Kind::integer, false},
      {"d_list", Kind::int_list, false},
      {"q", Kind::integer, false},
      {"input", Kind::string, true},
      {"probe_stride", Kind::integer, false},
      {"export_kernel", Kind::boolean, false},
      {"max_train_gap", Kind::number, false},
      {"max_test_gap", Kind::number, false},
      {"max_spectral_slope", Kind::number, false},
      {"min_frobenius_slope", Kind::number, false},
      {"min_r_squared", Kind::number, false},
      {"max_cnn_ratio", Kind::number, false},
      {"min_full_better", Kind::number, false},
      {"concentration_constant", Kind::number, false},
      {"min_gram_over_n", Kind::number, false},
      {"max_gram_over_n", Kind::number, false},
  };
  return keys;
}

json defaults_for(std::string_view sub) {
  json c = {
      {"mode", "both"},
      {"act", "erf"},
      {"slope", 0.01},
      {"order", 0},
      {"d", 50},
      {"n", 5000},
      {"n_test", 2000},
      {"m", 256},
      {"base", "gaussian"},
      {"spectrum", nullptr},
      {"labels", "teacher-sign"},
      {"teacher_width", 5},
      {"direction_norm", 0.5},
      {"seed", 0},
      {"eta", nullptr},
      {"T", nullptr},
      {"horizon_c", 0.25},
      {"record_stride", 1},
      {"seeds", 3},
      {"d_list", json::array()},
      {"q", 16},
      {"input", nullptr},
      {"probe_stride", 0},
      {"export_kernel", false},
      {"max_train_gap", 0.05},
      {"max_test_gap", 0.1},
      {"max_spectral_slope", -1.05},
      {"min_frobenius_slope", -0.95},
      {"min_r_squared", 0.95},
      {"max_cnn_ratio", 0.15},
      {"min_full_better", 0.8},
      {"concentration_constant", 5.0},
      {"min_gram_over_n", 0.5},
      {"max_gram_over_n", 20.0},
  };
  if (sub == "spectral-decay") {
    c["n"] = 2000;
    c["m"] = 4000;
    c["d_list"] = {16, 32, 64, 128};
  } else if (sub == "discrepancy-sweep") {
    c["d_list"] = {10, 30, 50};
    c["seeds"] = 5;
  } else if (sub == "cnn-ntk") {
    c["d"] = 64;
    c["n"] = 512;
    c["d_list"] = {64, 128};
  } else if (sub == "concentration") {
    c["n"] = 2000;
    c["d"] = 200;
  } else if (sub == "norm-ablation") {
    c["act"] = "relu";
    c["labels"] = "norm-dependent";
  }
  return c;
}

std::string describe(const std::string& sub) {
  if (sub == "moments") return "Gaussian moments of an activation";
  if (sub == "spectral-decay") return "spectral and Frobenius norms of the first-layer kernel gap vs d";
  if (sub == "agreement") return "train the network and its linear model side by side";
  if (sub == "discrepancy-sweep") return "early-window discrepancy across dimensions and seeds";
  if (sub == "cnn-ntk") return "infinite-width CNN kernel vs its linear approximation";
  if (sub == "concentration") return "norm and inner-product concentration of a dataset";
  if (sub == "norm-ablation") return "linear model with and without the norm feature";
  return "split a residual into the span of X and its complement";
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::integer: return "integer";
    case Kind::uinteger: return "non-negative integer";
    case Kind::number: return "number";
    case Kind::string: return "string";
    case Kind::boolean: return "boolean";
    case Kind::int_list: return "array of integers";
    case Kind::num_list: return "array of numbers";
  }
  return "value";
}

bool has_kind(const json& v, Kind k) {
  switch (k) {
    case Kind::integer: return v.is_number_integer();
    case Kind::uinteger: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case Kind::number: return v.is_number();
    case Kind::string: return v.is_string();
    case Kind::boolean: return v.is_boolean();
    case Kind::int_list:
      if (!v.is_array()) return false;
      for (const auto& e : v) {
        if (!e.is_number_integer()) return false;
      }
      return true;
    case Kind::num_list:
      if (!v.is_array()) return false;
      for (const auto& e : v) {
        if (!e.is_number()) return false;
      }
      return true;
  }
  return false;
}

std::string type_of(const json& v) { return v.type_name(); }

bool is_network_command(std::string_view sub) {
  return sub == "agreement" || sub == "discrepancy-sweep" || sub == "norm-ablation" ||
         sub == "spectral-decay";
}

void check_regime(const json& c, std::string_view sub, std::vector<std::string>& warnings) {
  if (sub == "moments" || sub == "decompose") return;
  std::vector<int> ds;
  if (sub == "spectral-decay" || sub == "discrepancy-sweep") {
    ds = c["d_list"].get<std::vector<int>>();
  } else {
    ds.push_back(c["d"].get<int>());
  }
  const int n = c["n"].get<int>();
  const int m = c["m"].get<int>();
  for (int d : ds) {
    const double bound = std::pow(static_cast<double>(d), 1.1);
    if (n < bound) {
      std::ostringstream w;
      w << "n = " << n << " < d^1.1 = " << bound << " at d = " << d
        << ": the agreement theory assumes n >~ d^(1+alpha)";
      warnings.push_back(w.str());
    }
    if (is_network_command(sub) && m < bound) {
      std::ostringstream w;
      w << "m = " << m << " < d^1.1 = " << bound << " at d = " << d
        << ": the agreement theory assumes m >~ d^(1+alpha)";
      warnings.push_back(w.str());
    }
  }
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> subs = {
      "moments", "spectral-decay", "agreement",     "discrepancy-sweep",
      "cnn-ntk", "concentration",  "norm-ablation", "decompose"};
  return subs;
}

Validation validate_config(const json& raw, std::string_view subcommand) {
  Validation v;
  v.config = defaults_for(subcommand);
  if (!raw.is_object()) {
    v.errors.push_back(": config must be a JSON object, got " + type_of(raw));
    return v;
  }
  for (const auto& [key, value] : raw.items()) {
    const KeySpec* spec = nullptr;
    for (const auto& k : key_specs()) {
      if (key == k.name) spec = &k;
    }
    if (spec == nullptr) {
      v.errors.push_back("/" + key + ": unknown key");
      continue;
    }
    if (value.is_null() && spec->nullable) {
      v.config[key] = nullptr;
      continue;
    }
    if (!has_kind(value, spec->kind)) {
      v.errors.push_back("/" + key + ": expected " + kind_name(spec->kind) + ", got " +
                         type_of(value));
      continue;
    }
    v.config[key] = value;
  }
  if (!v.errors.empty()) return v;

  json& c = v.config;
  auto err = [&](const std::string& key, const std::string& msg) {
    v.errors.push_back("/" + key + ": " + msg);
  };
  auto positive_int = [&](const char* key, int min) {
    if (c[key].get<std::int64_t>() < min) err(key, "must be >= " + std::to_string(min));
  };

  try {
    parse_mode(c["mode"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    err("mode", e.what());
  }
  if (!std::isfinite(c["slope"].get<double>())) err("slope", "must be finite");
  try {
    Activation::parse(c["act"].get<std::string>(), c["slope"].get<double>());
  } catch (const std::invalid_argument& e) {
    err("act", e.what());
  }
  try {
    parse_base_distribution(c["base"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    err("base", e.what());
  }
  try {
    parse_label_kind(c["labels"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    err("labels", e.what());
  }

  const auto order = c["order"].get<std::int64_t>();
  if (order != 0 && (order < 1 || order > kMaxQuadratureOrder)) {
    err("order", "must be 0 (activation default) or in [1, " +
                     std::to_string(kMaxQuadratureOrder) + "]");
  }
  positive_int("d", 1);
  positive_int("n", 1);
  positive_int("n_test", 0);
  positive_int("teacher_width", 1);
  positive_int("record_stride", 1);
  positive_int("seeds", 1);
  positive_int("probe_stride", 0);
  const auto m = c["m"].get<std::int64_t>();
  if (m < 2 || m % 2 != 0) err("m", "width must be even (symmetric initialization)");
  const auto q = c["q"].get<std::int64_t>();
  if (q < 1) err("q", "must be >= 1");
  if (subcommand == "cnn-ntk") {
    for (const auto& d : c["d_list"]) {
      if (q > d.get<std::int64_t>()) err("q", "filter size exceeds d = " + d.dump());
    }
    if (c["d_list"].empty() && q > c["d"].get<std::int64_t>()) {
      err("q", "filter size exceeds d");
    }
  }
  for (std::size_t k = 0; k < c["d_list"].size(); ++k) {
    if (c["d_list"][k].get<std::int64_t>() < 1) {
      err("d_list/" + std::to_string(k), "must be >= 1");
    }
  }
  if ((subcommand == "spectral-decay") && c["d_list"].size() < 3) {
    err("d_list", "the decay fit needs at least 3 dimensions");
  }
  if (subcommand == "discrepancy-sweep" && c["d_list"].empty()) {
    err("d_list", "needs at least one dimension");
  }
  if (!c["eta"].is_null() && !(c["eta"].get<double>() > 0.0)) err("eta", "must be positive");
  if (!c["T"].is_null() && c["T"].get<std::int64_t>() < 0) err("T", "must be >= 0");
  if (!(c["horizon_c"].get<double>() >= 0.0)) err("horizon_c", "must be >= 0");
  if (!(c["direction_norm"].get<double>() >= 0.0)) err("direction_norm", "must be >= 0");
  if (!c["spectrum"].is_null()) {
    if (static_cast<std::int64_t>(c["spectrum"].size()) != c["d"].get<std::int64_t>()) {
      err("spectrum", "needs exactly d entries");
    } else {
      try {
        CovarianceSpec::diagonal(c["spectrum"].get<std::vector<double>>());
      } catch (const std::invalid_argument& e) {
        err("spectrum", e.what());
      }
    }
  }
  if (subcommand == "decompose" && c["input"].is_null()) {
    err("input", "decompose needs an input CSV (features, then the residual column)");
  }
  if (v.errors.empty()) check_regime(c, subcommand, v.warnings);
  return v;
}

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  std::string subcommand;
  fs::path out;
  json config;
  json raw = nullptr;
  json overrides = json::object();
  std::string config_path;
  std::vector<std::string> warnings;
  json assertions = json::array();
  json results = json::object();
  json seeds = json::array();
  std::vector<std::string> outputs;
  int verbosity = 1;

  void log(const std::string& msg) const {
    if (verbosity > 0) std::cerr << "[" << subcommand << "] " << msg << '\n';
  }

  void check(const std::string& name, bool passed, const json& value, const json& limit) {
    assertions.push_back({{"name", name}, {"passed", passed}, {"value", value}, {"limit", limit}});
    log(std::string(passed ? "PASS " : "FAIL ") + name + " value=" + value.dump() +
        " limit=" + limit.dump());
  }

  bool all_passed() const {
    for (const auto& a : assertions) {
      if (!a["passed"].get<bool>()) return false;
    }
    return true;
  }

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

CoupledRunConfig coupled_config(const json& c) {
  CoupledRunConfig cfg;
  cfg.mode = parse_mode(c["mode"].get<std::string>());
  cfg.d = c["d"].get<int>();
  cfg.n = c["n"].get<int>();
  cfg.n_test = c["n_test"].get<int>();
  cfg.base = parse_base_distribution(c["base"].get<std::string>());
  if (!c["spectrum"].is_null()) cfg.spectrum = c["spectrum"].get<std::vector<double>>();
  cfg.labels = parse_label_kind(c["labels"].get<std::string>());
  cfg.teacher_width = c["teacher_width"].get<int>();
  cfg.direction_norm = c["direction_norm"].get<double>();
  cfg.m = c["m"].get<int>();
  cfg.act = Activation::parse(c["act"].get<std::string>(), c["slope"].get<double>());
  cfg.seed = c["seed"].get<std::uint64_t>();
  if (!c["eta"].is_null()) cfg.eta = c["eta"].get<double>();
  if (!c["T"].is_null()) cfg.T = c["T"].get<int>();
  cfg.horizon_c = c["horizon_c"].get<double>();
  cfg.record_stride = c["record_stride"].get<int>();
  cfg.quad_order = c["order"].get<int>();
  return cfg;
}

json moments_json(const Moments& m) {
  return {{"zeta", m.zeta},     {"g_phi_prime", m.g_phi_prime}, {"theta0", m.theta0},
          {"theta1", m.theta1()}, {"theta2", m.theta2},          {"gamma", m.gamma},
          {"quad_order", m.quad_order}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

template <typename Row>
void write_rows(const fs::path& path, const std::string& header, const std::vector<Row>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string s;
  for (const auto& f : fields) {
    if (!s.empty()) s += ',';
    s += f;
  }
  return s;
}

std::string num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

// --- subcommands -----------------------------------------------------------

void cmd_moments(Context& ctx) {
  const json& c = ctx.config;
  const Activation act = Activation::parse(c["act"].get<std::string>(), c["slope"].get<double>());
  const int order = c["order"].get<int>() > 0 ? c["order"].get<int>() : default_quadrature_order(act);
  const Moments mom = moments(act, order);
  json out = moments_json(mom);
  out["act"] = act.name();
  out["nu_identity"] = nu(mom, CovarianceSpec::identity(1));
  ctx.results = out;
  write_json(ctx.file("moments.json"), out);
  std::cout << out.dump(2) << '\n';
  ctx.check("gamma >= zeta^2", mom.gamma >= mom.zeta * mom.zeta - 1e-12, mom.gamma - mom.zeta * mom.zeta,
            -1e-12);
}

void cmd_spectral_decay(Context& ctx) {
  const json& c = ctx.config;
  const auto ds = c["d_list"].get<std::vector<int>>();
  const Activation act = Activation::parse(c["act"].get<std::string>(), c["slope"].get<double>());
  const std::uint64_t seed = c["seed"].get<std::uint64_t>();
  const int seeds = c["seeds"].get<int>();
  for (int s = 0; s < seeds; ++s) ctx.seeds.push_back(rng::derive_seed(seed, s));
  ctx.log("n=" + std::to_string(c["n"].get<int>()) + " m=" + std::to_string(c["m"].get<int>()));

  const SpectralDecayResult r =
      spectral_decay_experiment(ds, c["n"].get<int>(), c["m"].get<int>(), act, seeds, seed);

  std::vector<std::string> per_seed, summary;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (std::size_t s = 0; s < r.spectral[k].size(); ++s) {
      per_seed.push_back(csv_line({std::to_string(ds[k]), std::to_string(ctx.seeds[s].get<std::uint64_t>()),
                                   num(r.spectral[k][s]), num(r.frobenius[k][s])}));
    }
    summary.push_back(csv_line({std::to_string(ds[k]), num(r.mean_spectral[k]), num(r.mean_frobenius[k])}));
  }
  write_rows(ctx.file("decay.csv"), "d,seed,spectral,frobenius", per_seed);
  write_rows(ctx.file("summary.csv"), "d,mean_spectral,mean_frobenius", summary);
  ctx.results = {{"spectral_fit", {{"slope", r.spectral_fit.slope},
                                    {"intercept", r.spectral_fit.intercept},
                                    {"r_squared", r.spectral_fit.r_squared}}},
                 {"frobenius_fit", {{"slope", r.frobenius_fit.slope},
                                     {"intercept", r.frobenius_fit.intercept},
                                     {"r_squared", r.frobenius_fit.r_squared}}}};
  ctx.check("spectral slope", r.spectral_fit.slope <= c["max_spectral_slope"].get<double>(),
            r.spectral_fit.slope, c["max_spectral_slope"]);
  ctx.check("frobenius slope", r.frobenius_fit.slope >= c["min_frobenius_slope"].get<double>(),
            r.frobenius_fit.slope, c["min_frobenius_slope"]);
  ctx.check("spectral fit r^2", r.spectral_fit.r_squared >= c["min_r_squared"].get<double>(),
            r.spectral_fit.r_squared, c["min_r_squared"]);
  ctx.check("frobenius fit r^2", r.frobenius_fit.r_squared >= c["min_r_squared"].get<double>(),
            r.frobenius_fit.r_squared, c["min_r_squared"]);
}

void cmd_agreement(Context& ctx) {
  const json& c = ctx.config;
  CoupledRunConfig cfg = coupled_config(c);
  const int probe_stride = c["probe_stride"].get<int>();
  cfg.keep_snapshots = probe_stride > 0;
  if (cfg.keep_snapshots) cfg.record_stride = std::min(cfg.record_stride, probe_stride);
  ctx.seeds.push_back(cfg.seed);

  const CoupledRunResult res = coupled_run(cfg);
  for (const auto& w : res.warnings) ctx.warnings.push_back(w);
  write_agreement_csv(res.records, ctx.file("agreement.csv").string());

  std::vector<TrajectoryRow> net_rows, lin_rows;
  double max_train = 0.0, max_test = 0.0;
  for (const auto& r : res.records) {
    net_rows.push_back({r.step, r.train_mse_net, r.w_move_fro, r.v_move_l2});
    lin_rows.push_back({r.step, r.train_mse_lin, r.beta_norm, 0.0});
    max_train = std::max(max_train, r.train_gap);
    max_test = std::max(max_test, r.test_gap_clipped);
  }
  write_trajectory_csv(net_rows, ctx.file("network.csv"));
  write_trajectory_csv(lin_rows, ctx.file("linear.csv"));

  ctx.results = {{"eta", res.eta},
                 {"T", res.T},
                 {"moments", moments_json(res.moments)},
                 {"nu", res.nu},
                 {"max_train_gap", max_train},
                 {"max_test_gap_clipped", max_test}};

  if (cfg.keep_snapshots) {
    const Problem p = make_problem(cfg);
    const Eigen::MatrixXd K = linear_kernel(p.train.X, p.moments, p.nu, cfg.mode).values;
    std::vector<Snapshot> probes;
    for (const auto& s : res.snapshots) {
      if (s.step % probe_stride == 0 || s.step == res.T) probes.push_back(s);
    }
    const auto dev = jacobian_deviation_probe(probes, p.net, p.train.X, K, cfg.mode);
    std::vector<std::string> rows;
    double worst = 0.0;
    for (const auto& d : dev) {
      rows.push_back(csv_line({std::to_string(d.step), num(d.eps), num(d.eps_rel)}));
      worst = std::max(worst, d.eps_rel);
    }
    write_rows(ctx.file("deviation.csv"), "step,eps,eps_over_n_d", rows);
    ctx.results["max_eps_over_n_d"] = worst;
  }

  ctx.check("max train_gap over horizon", max_train <= c["max_train_gap"].get<double>(), max_train,
            c["max_train_gap"]);
  if (cfg.n_test > 0) {
    ctx.check("max test_gap_clipped over horizon", max_test <= c["max_test_gap"].get<double>(),
              max_test, c["max_test_gap"]);
  }
}

void cmd_discrepancy_sweep(Context& ctx) {
  const json& c = ctx.config;
  const CoupledRunConfig base = coupled_config(c);
  const auto ds = c["d_list"].get<std::vector<int>>();
  const DimensionSweep sw = discrepancy_vs_dimension(ds, base, c["seeds"].get<int>());
  for (auto s : sw.seeds) ctx.seeds.push_back(s);

  std::vector<std::string> rows, summary;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (std::size_t s = 0; s < sw.seeds.size(); ++s) {
      rows.push_back(csv_line({std::to_string(ds[k]), std::to_string(sw.seeds[s]),
                               num(sw.gaps[k][s]), num(sw.horizon_gaps[k][s])}));
    }
    summary.push_back(csv_line({std::to_string(ds[k]), std::to_string(sw.horizons[k]),
                                num(sw.median[k]), num(sw.horizon_median[k])}));
  }
  write_rows(ctx.file("sweep.csv"), "d,seed,max_gap_window,max_gap_horizon", rows);
  write_rows(ctx.file("summary.csv"), "d,horizon,median_gap_window,median_gap_horizon", summary);
  ctx.results = {{"eta", sw.eta},
                 {"window", sw.window},
                 {"median_gap_window", sw.median},
                 {"median_gap_horizon", sw.horizon_median}};
  ctx.check("median window gap strictly decreasing in d", sw.strictly_decreasing, sw.median,
            "strictly decreasing");
}

double cnn_ratio(const Eigen::MatrixXd& X, int q, const Activation& act, int order) {
  const KernelMatrix K = cnn_infinite_ntk(X, q, act, order);
  const Moments mom = moments(act, order);
  const double d = static_cast<double>(X.cols());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(X.rows(), X.rows());
  L.selfadjointView<Eigen::Lower>().rankUpdate(X, 2.0 * mom.zeta * mom.zeta / d);
  L.triangularView<Eigen::StrictlyUpper>() = L.transpose();
  return spectral_norm(K.values - L) / spectral_norm(L);
}

void cmd_cnn_ntk(Context& ctx) {
  const json& c = ctx.config;
  const Activation act = Activation::parse(c["act"].get<std::string>(), c["slope"].get<double>());
  const int order = c["order"].get<int>() > 0 ? c["order"].get<int>() : default_quadrature_order(act);
  const int q = c["q"].get<int>();
  const std::uint64_t seed = c["seed"].get<std::uint64_t>();
  ctx.seeds.push_back(seed);
  std::vector<int> ds = c["d_list"].get<std::vector<int>>();
  if (ds.empty()) ds.push_back(c["d"].get<int>());
  const int n0 = c["n"].get<int>();
  const double d0 = ds.front();

  std::vector<std::string> rows;
  std::vector<double> ratios;
  for (int d : ds) {
    // Keep n / d^1.1 fixed across the sweep.
    const int n = static_cast<int>(std::lround(n0 * std::pow(d / d0, 1.1)));
    const Eigen::MatrixXd X = generate_hypercube(n, d, seed);
    const double ratio = cnn_ratio(X, q, act, order);
    ratios.push_back(ratio);
    rows.push_back(csv_line({std::to_string(d), std::to_string(n), std::to_string(q), num(ratio)}));
    ctx.log("d=" + std::to_string(d) + " n=" + std::to_string(n) + " ratio=" + num(ratio));
    if (c["export_kernel"].get<bool>()) {
      write_kernel_csv(cnn_infinite_ntk(X, q, act, order),
                       ctx.file("cnn_kernel_d" + std::to_string(d) + ".csv"));
      ctx.outputs.push_back("cnn_kernel_d" + std::to_string(d) + ".csv.json");
    }
  }
  write_rows(ctx.file("cnn.csv"), "d,n,q,relative_error", rows);
  ctx.results = {{"relative_error", ratios}};
  ctx.check("relative error at first d", ratios.front() <= c["max_cnn_ratio"].get<double>(),
            ratios.front(), c["max_cnn_ratio"]);
  bool decreasing = true;
  for (std::size_t k = 1; k < ratios.size(); ++k) decreasing = decreasing && ratios[k] < ratios[k - 1];
  if (ratios.size() > 1) ctx.check("relative error decreasing in d", decreasing, ratios, "decreasing");
}

void cmd_concentration(Context& ctx) {
  const json& c = ctx.config;
  Eigen::MatrixXd X;
  if (!c["input"].is_null()) {
    X = load_csv(c["input"].get<std::string>(), LabelBound::ignore).X;
  } else {
    CovarianceSpec cov = c["spectrum"].is_null()
                             ? CovarianceSpec::identity(c["d"].get<int>())
                             : CovarianceSpec::diagonal(c["spectrum"].get<std::vector<double>>());
    const DataSpec spec{cov, parse_base_distribution(c["base"].get<std::string>()),
                        c["n"].get<int>(), c["seed"].get<std::uint64_t>()};
    X = generate_inputs(spec);
    ctx.seeds.push_back(spec.seed);
  }
  const ConcentrationReport r = concentration_report(X);
  const double n = static_cast<double>(X.rows());
  const double d = static_cast<double>(X.cols());
  const double bound = c["concentration_constant"].get<double>() * std::sqrt(std::log(n) / d);
  ctx.results = {{"n", X.rows()},
                 {"d", X.cols()},
                 {"max_norm_dev", r.max_norm_dev},
                 {"max_offdiag", r.max_offdiag},
                 {"gram_spectral_over_n", r.gram_spectral_over_n},
                 {"bound", bound}};
  write_json(ctx.file("concentration.json"), ctx.results);
  ctx.check("max_norm_dev", r.max_norm_dev <= bound, r.max_norm_dev, bound);
  ctx.check("max_offdiag", r.max_offdiag <= bound, r.max_offdiag, bound);
  const double lo = c["min_gram_over_n"].get<double>();
  const double hi = c["max_gram_over_n"].get<double>();
  ctx.check("gram_spectral_over_n", r.gram_spectral_over_n >= lo && r.gram_spectral_over_n <= hi,
            r.gram_spectral_over_n, json::array({lo, hi}));
}

void cmd_norm_ablation(Context& ctx) {
  const json& c = ctx.config;
  const CoupledRunConfig cfg = coupled_config(c);
  ctx.seeds.push_back(cfg.seed);
  const AblationResult r = norm_feature_ablation_experiment(cfg);
  for (const auto& w : r.warnings) ctx.warnings.push_back(w);
  std::vector<std::string> rows;
  for (const auto& s : r.steps) {
    rows.push_back(csv_line({std::to_string(s.step), num(s.gap_full), num(s.gap_naive)}));
  }
  write_rows(ctx.file("ablation.csv"), "step,gap_full,gap_naive", rows);
  ctx.results = {{"eta", r.eta}, {"T", r.T}, {"fraction_full_better", r.fraction_full_better}};
  ctx.check("full model closer at share of steps",
            r.fraction_full_better >= c["min_full_better"].get<double>(), r.fraction_full_better,
            c["min_full_better"]);
}

void cmd_decompose(Context& ctx) {
  const json& c = ctx.config;
  const Dataset data = load_csv(c["input"].get<std::string>(), LabelBound::ignore);
  const SubspaceEnergy e = residual_subspace_decomposition(data.y, data.X);
  const double total = data.y.squaredNorm();
  ctx.results = {{"n_test", data.size()},
                 {"d", data.dim()},
                 {"rank", e.rank},
                 {"energy_in_span", e.in_span},
                 {"energy_in_complement", e.complement},
                 {"energy_total", total}};
  write_json(ctx.file("decompose.json"), ctx.results);
  const double err = std::abs(e.in_span + e.complement - total) / std::max(total, 1e-300);
  ctx.check("energies sum to |r|^2", total == 0.0 || err <= 1e-10, err, 1e-10);
}

void write_manifest(Context& ctx, const std::string& status, const std::string& error) {
  json m = {{"schema_version", kSchemaVersion},
            {"tool", "linphase"},
            {"version", kVersion},
            {"subcommand", ctx.subcommand},
            {"config_file", ctx.config_path.empty() ? json(nullptr) : json(ctx.config_path)},
            {"config_raw", ctx.raw},
            {"overrides", ctx.overrides},
            {"config", ctx.config},
            {"seeds", ctx.seeds},
            {"warnings", ctx.warnings},
            {"assertions", ctx.assertions},
            {"results", ctx.results},
            {"outputs", ctx.outputs},
            {"status", status}};
  if (!error.empty()) m["error"] = error;
  write_json(ctx.out / "manifest.json", m);
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Early-phase linear-model verification toolkit", "linphase"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int verbose = 0;
  bool quiet = false;

  std::optional<std::string> act, mode, base, labels, input;
  std::optional<double> slope, eta, horizon_c;
  std::optional<int> order, d, n, n_test, m, T, stride, seeds, q, probe_stride;
  std::optional<std::uint64_t> seed;
  std::vector<int> d_list;
  bool export_kernel = false;

  for (const auto& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", config_path, "JSON config file (flat keys)");
    sub->add_option("--out", out_dir, "output directory (default linphase-out/<subcommand>)");
    sub->add_flag("-v,--verbose", verbose, "more progress output");
    sub->add_flag("--quiet", quiet, "no progress output");
    sub->add_option("--seed", seed, "base seed");
    sub->add_option("--act", act, "erf, tanh, sigmoid, softplus, relu, leaky-relu, identity");
    sub->add_option("--slope", slope, "leaky-relu negative slope");
    sub->add_option("--order", order, "quadrature order (0: activation default)");
    sub->add_option("--mode", mode, "first, second or both");
    sub->add_option("--d", d, "input dimension");
    sub->add_option("--n", n, "training points");
    sub->add_option("--n-test", n_test, "held-out points");
    sub->add_option("--m", m, "width (even)");
    sub->add_option("--base", base, "gaussian, rademacher, uniform-scaled");
    sub->add_option("--labels", labels, "teacher-sign or norm-dependent");
    sub->add_option("--eta", eta, "learning rate");
    sub->add_option("--T", T, "steps (default: horizon)");
    sub->add_option("--c", horizon_c, "horizon constant c in T = c d log d / eta");
    sub->add_option("--stride", stride, "record every k steps");
    sub->add_option("--seeds", seeds, "number of seeds");
    sub->add_option("--d-list", d_list, "dimensions, comma separated")->delimiter(',');
    sub->add_option("--q", q, "CNN filter size");
    sub->add_option("--input", input, "input CSV");
    sub->add_option("--probe-stride", probe_stride, "Jacobian deviation probe every k steps");
    sub->add_flag("--export-kernel", export_kernel, "write kernel matrices as CSV");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  Context ctx;
  ctx.subcommand = app.get_subcommands().front()->get_name();
  ctx.verbosity = quiet ? 0 : 1 + verbose;
  ctx.config_path = config_path;

  json merged = json::object();
  try {
    if (!config_path.empty()) {
      ctx.raw = read_config_file(config_path);
      if (!ctx.raw.is_object()) throw ConfigError("config file '" + config_path + "' must hold a JSON object");
      merged = ctx.raw;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  auto over = [&](const char* key, const auto& opt) {
    if (opt) ctx.overrides[key] = *opt;
  };
  over("act", act);
  over("mode", mode);
  over("base", base);
  over("labels", labels);
  over("input", input);
  over("slope", slope);
  over("eta", eta);
  over("horizon_c", horizon_c);
  over("order", order);
  over("d", d);
  over("n", n);
  over("n_test", n_test);
  over("m", m);
  over("T", T);
  over("record_stride", stride);
  over("seeds", seeds);
  over("q", q);
  over("probe_stride", probe_stride);
  over("seed", seed);
  if (!d_list.empty()) ctx.overrides["d_list"] = d_list;
  if (export_kernel) ctx.overrides["export_kernel"] = true;
  for (const auto& [k, v] : ctx.overrides.items()) merged[k] = v;

  Validation val = validate_config(merged, ctx.subcommand);
  if (!val.ok()) {
    for (const auto& e : val.errors) std::cerr << "config error: " << e << '\n';
    return kExitConfig;
  }
  ctx.config = val.config;
  ctx.warnings = val.warnings;
  for (const auto& w : ctx.warnings) std::cerr << "warning: " << w << '\n';

  ctx.out = out_dir.empty() ? fs::path("linphase-out") / ctx.subcommand : fs::path(out_dir);
  try {
    fs::create_directories(ctx.out);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: cannot create output directory '" << ctx.out.string() << "': " << e.what()
              << '\n';
    return kExitConfig;
  }

  const auto start = std::chrono::steady_clock::now();
  std::string status = "pass";
  std::string error;
  int code = kExitOk;
  try {
    const std::string& s = ctx.subcommand;
    if (s == "moments") cmd_moments(ctx);
    else if (s == "spectral-decay") cmd_spectral_decay(ctx);
    else if (s == "agreement") cmd_agreement(ctx);
    else if (s == "discrepancy-sweep") cmd_discrepancy_sweep(ctx);
    else if (s == "cnn-ntk") cmd_cnn_ntk(ctx);
    else if (s == "concentration") cmd_concentration(ctx);
    else if (s == "norm-ablation") cmd_norm_ablation(ctx);
    else if (s == "decompose") cmd_decompose(ctx);
    if (!ctx.all_passed()) {
      status = "fail";
      code = kExitAssertion;
    }
  } catch (const CsvError& e) {
    status = "error";
    error = e.what();
    code = kExitConfig;
  } catch (const std::invalid_argument& e) {
    status = "error";
    error = e.what();
    code = kExitConfig;
  } catch (const std::exception& e) {
    // Divergence, non-convergence and I/O failures.
    status = "fail";
    error = e.what();
    code = kExitAssertion;
  }
  if (!error.empty()) std::cerr << "error: " << error << '\n';
  try {
    write_manifest(ctx, status, error);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAssertion;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.log(status + " in " + num(std::round(secs * 100.0) / 100.0) + " s, output in " +
          ctx.out.string());
  return code;
}

}  // namespace linphase::cli
