#include "linphase/spectral.hpp"

#include <cmath>
#include <string>

#include "linphase/rng.hpp"

namespace linphase {

namespace {

struct PowerResult {
  double lambda = 0.0;
  bool converged = false;
};

PowerResult power_iterate(const Eigen::MatrixXd& A, Eigen::VectorXd v,
                          const PowerIterationOptions& opts) {
  v.normalize();
  Eigen::VectorXd Av(A.rows());
  Eigen::VectorXd Bv(A.cols());
  PowerResult res;
  for (int it = 0; it < opts.max_iters; ++it) {
    Av.noalias() = A * v;
    Bv.noalias() = A.transpose() * Av;
    const double lambda = v.dot(Bv);
    if (!(lambda > 0.0)) {
      // v is in the null space of A; the caller restarts from another vector.
      res.lambda = 0.0;
      res.converged = Bv.norm() == 0.0;
      return res;
    }
    const double residual = (Bv - lambda * v).norm();
    res.lambda = lambda;
    if (residual <= opts.tol * lambda) {
      res.converged = true;
      return res;
    }
    v = Bv / Bv.norm();
  }
  return res;
}

Eigen::VectorXd start_vector(Eigen::Index n, std::uint64_t seed) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v[i] = rng::standard_normal(seed, rng::Stream::power_iteration, 0,
                                static_cast<std::uint64_t>(i));
  }
  return v;
}

}  // namespace

double spectral_norm(const Eigen::MatrixXd& A, const PowerIterationOptions& opts) {
  if (A.size() == 0) return 0.0;
  if (A.cwiseAbs().maxCoeff() == 0.0) return 0.0;

  double best = 0.0;
  bool any_converged = false;
  // Seeded start, then one restart from an independent vector.
  for (std::uint64_t seed : {0x1234ULL, 0xfeedULL}) {
    const PowerResult r = power_iterate(A, start_vector(A.cols(), seed), opts);
    if (r.converged) {
      any_converged = true;
      best = std::max(best, r.lambda);
    }
  }
  if (!any_converged) {
    throw ConvergenceError("spectral_norm: power iteration did not converge in " +
                           std::to_string(opts.max_iters) + " iterations");
  }
  return std::sqrt(best);
}

double frobenius_norm(const Eigen::MatrixXd& A) { return A.norm(); }

DecayFit decay_fit(std::span<const int> ds, std::span<const double> norms) {
  if (ds.size() != norms.size()) {
    throw std::invalid_argument("decay_fit: dimension and norm lists differ in length");
  }
  if (ds.size() < 3) throw std::invalid_argument("decay_fit: need at least 3 points");
  const auto k = static_cast<double>(ds.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds[i] <= 0) throw std::invalid_argument("decay_fit: dimensions must be positive");
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      throw std::invalid_argument("decay_fit: degenerate fit, norm " + std::to_string(norms[i]) +
                                  " at d=" + std::to_string(ds[i]) + " is not positive");
    }
    mx += std::log(static_cast<double>(ds[i]));
    my += std::log(norms[i]);
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double dx = std::log(static_cast<double>(ds[i])) - mx;
    const double dy = std::log(norms[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("decay_fit: all dimensions are equal");
  DecayFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double pred = fit.intercept + fit.slope * std::log(static_cast<double>(ds[i]));
    const double e = std::log(norms[i]) - pred;
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? std::max(0.0, 1.0 - ss_res / syy) : 1.0;
  return fit;
}

}  // namespace linphase
