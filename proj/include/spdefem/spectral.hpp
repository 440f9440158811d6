#pragma once

#include <Eigen/Core>
#include <functional>

namespace spdefem {

/// Coefficients in the sine eigenbasis; entry `k-1` multiplies e_k.
struct SpectralCoeffs {
  Eigen::VectorXd coeffs;

  SpectralCoeffs() = default;
  explicit SpectralCoeffs(Eigen::VectorXd c) : coeffs(std::move(c)) {}
  static SpectralCoeffs zero(int k_max) { return SpectralCoeffs(Eigen::VectorXd::Zero(k_max)); }
  static SpectralCoeffs unit(int k_max, int k);

  int size() const { return static_cast<int>(coeffs.size()); }
  double norm() const { return coeffs.norm(); }
};

/// Dirichlet Laplacian on [0, L]: eigenvalues (k pi / L)^2 and modes
/// e_k(x) = sqrt(2/L) sin(k pi x / L), k = 1..k_max.
class SpectralBasis {
 public:
  static constexpr int kDefaultModes = 4096;

  explicit SpectralBasis(double length = 1.0, int k_max = kDefaultModes);

  double length() const { return length_; }
  int k_max() const { return k_max_; }

  double eigenvalue(int k) const;
  /// All retained eigenvalues, index k-1.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  double eval_mode(int k, double x) const;
  /// Sum of coefficient-weighted modes at x.
  double evaluate(const SpectralCoeffs& x, double point) const;

  SpectralCoeffs semigroup_apply(double t, const SpectralCoeffs& x) const;
  /// Multiplies mode k by lambda_k^{r/2}; negative r gives inverse powers.
  SpectralCoeffs fractional_power_apply(double r, const SpectralCoeffs& x) const;
  /// ||A^{r/2} x|| over the retained modes.
  double hr_norm(double r, const SpectralCoeffs& x) const;

  /// <f, e_k> by composite Gauss-Legendre quadrature, with at least eight
  /// panels per half-wavelength of the highest retained mode.
  SpectralCoeffs project_function(const std::function<double(double)>& f) const;

  /// Composite Gauss-Legendre rule used by project_function.
  struct Quadrature {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
  };
  Quadrature quadrature(int panels) const;
  int default_panels() const;

 private:
  void check_mode(int k) const;
  void check_size(const SpectralCoeffs& x) const;

  double length_;
  int k_max_;
  Eigen::VectorXd eigenvalues_;
};

}  // namespace spdefem
