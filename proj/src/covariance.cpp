#include "linphase/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace linphase {

CovarianceSpec CovarianceSpec::identity(int d) {
  if (d < 1) throw std::invalid_argument("covariance dimension must be >= 1");
  CovarianceSpec s;
  s.kind_ = Kind::identity;
  s.d_ = d;
  return s;
}

CovarianceSpec CovarianceSpec::diagonal(std::vector<double> spectrum, double bound) {
  if (spectrum.empty()) throw std::invalid_argument("covariance spectrum is empty");
  double trace = 0.0;
  for (double v : spectrum) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("covariance spectrum entries must be positive and finite");
    }
    trace += v;
  }
  const double d = static_cast<double>(spectrum.size());
  if (std::abs(trace - d) > 1e-9 * std::max(1.0, d)) {
    throw std::invalid_argument("covariance trace must equal the dimension " +
                                std::to_string(spectrum.size()) + ", got " +
                                std::to_string(trace));
  }
  const double top = *std::max_element(spectrum.begin(), spectrum.end());
  if (top > bound) {
    throw std::invalid_argument("covariance spectral norm " + std::to_string(top) +
                                " exceeds bound " + std::to_string(bound));
  }
  CovarianceSpec s;
  s.kind_ = Kind::diagonal;
  s.d_ = static_cast<int>(spectrum.size());
  s.spectrum_ = std::move(spectrum);
  return s;
}

double CovarianceSpec::trace() const {
  if (kind_ == Kind::identity) return d_;
  double t = 0.0;
  for (double v : spectrum_) t += v;
  return t;
}

double CovarianceSpec::trace_sq() const {
  if (kind_ == Kind::identity) return d_;
  double t = 0.0;
  for (double v : spectrum_) t += v * v;
  return t;
}

double CovarianceSpec::max_entry() const {
  if (kind_ == Kind::identity) return 1.0;
  return *std::max_element(spectrum_.begin(), spectrum_.end());
}

}  // namespace linphase
