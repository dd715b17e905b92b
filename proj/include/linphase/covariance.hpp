#pragma once

#include <vector>

namespace linphase {

// Diagonal input covariance Sigma normalized to Tr[Sigma] = d.
class CovarianceSpec {
 public:
  enum class Kind { identity, diagonal };

  static constexpr double kDefaultSpectralBound = 10.0;

  static CovarianceSpec identity(int d);
  // Throws std::invalid_argument unless every entry is positive, the trace
  // equals the dimension to 1e-9 and max entry <= bound.
  static CovarianceSpec diagonal(std::vector<double> spectrum,
                                 double bound = kDefaultSpectralBound);

  Kind kind() const { return kind_; }
  int dim() const { return d_; }
  // Eigenvalue of coordinate j.
  double entry(int j) const { return kind_ == Kind::identity ? 1.0 : spectrum_[j]; }
  const std::vector<double>& spectrum() const { return spectrum_; }
  double trace() const;
  double trace_sq() const;
  double max_entry() const;

 private:
  Kind kind_ = Kind::identity;
  int d_ = 0;
  std::vector<double> spectrum_;
};

}  // namespace linphase
