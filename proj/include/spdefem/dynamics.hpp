#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "spdefem/fem.hpp"
#include "spdefem/noise.hpp"

namespace spdefem {

/// f(x) = a_0 + a_1 x + ... + a_K x^K with K <= 4, one-sided Lipschitz.
class PolynomialDrift {
 public:
  static constexpr int kMaxDegree = 4;

  /// Trailing zero coefficients are dropped before validation.
  explicit PolynomialDrift(std::vector<double> coeffs);

  /// f(x) = x - x^3.
  static PolynomialDrift allen_cahn();
  static PolynomialDrift zero();

  const std::vector<double>& coeffs() const { return coeffs_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  /// sup_x f'(x).
  double one_sided_constant() const { return one_sided_; }

  double value(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;

  /// a_0 = a_2 = 0 (and a_4 = 0): the flow has a closed form.
  bool is_odd_cubic() const;
  bool is_zero() const { return coeffs_.size() == 1 && coeffs_[0] == 0.0; }

 private:
  std::vector<double> coeffs_;
  double one_sided_ = 0.0;
};

/// Phi_t(x): solution of x' = f(x) at time t.
double flow_map(const PolynomialDrift& drift, double t, double x);
/// d Phi_t(x) / dx.
double flow_derivative(const PolynomialDrift& drift, double t, double x);
/// Psi_dt(x) = (Phi_dt(x) - x) / dt, with Psi_0 = f.
double psi(const PolynomialDrift& drift, double dt, double x);

/// Reference integrator for the drift ODE: fixed-step RK4 with `steps` steps.
double flow_map_rk4(const PolynomialDrift& drift, double t, double x, int steps);

enum class Scheme { kSplitting, kExponentialEuler, kSemiImplicit };

struct SchemeConfig {
  Scheme scheme = Scheme::kSplitting;
  double dt = 0.0;
  std::size_t n_steps = 0;
  /// Scales A_h in the linear part; 0 removes diffusion (test hook).
  double diffusion_scale = 1.0;

  double final_time() const { return dt * static_cast<double>(n_steps); }
  void validate() const;
};

/// |u| above this aborts a sample.
inline constexpr double kOverflowBound = 1e6;

/// One time step of a scheme on a fixed space, applied column-wise to a
/// batch of nodal states. Noise arrives as discrete-eigenbasis increments:
/// the exact convolution for splitting and exponential Euler, E Delta W for
/// the semi-implicit scheme.
class Propagator {
 public:
  Propagator(const FemSpace& space, const PolynomialDrift& drift, Scheme scheme, double dt,
             double diffusion_scale = 1.0);

  const FemSpace& space() const { return *space_; }
  Scheme scheme() const { return scheme_; }
  double dt() const { return dt_; }
  /// Per-mode linear factor: e^{-lambda dt} or 1 / (1 + lambda dt).
  const Eigen::VectorXd& linear_factor() const { return linear_; }
  /// e^{-lambda dt}; used to aggregate exact convolutions over sub-steps.
  const Eigen::VectorXd& decay() const { return decay_; }

  /// `noise` may be null for the noise-free step.
  void step(Eigen::Ref<Eigen::MatrixXd> nodal, const Eigen::MatrixXd* noise) const;
  /// Linearised step along `base` (the state at the start of the step).
  void tangent_step(const Eigen::VectorXd& base, Eigen::VectorXd& eta) const;

 private:
  void apply_drift(Eigen::Ref<Eigen::MatrixXd> nodal) const;

  const FemSpace* space_;
  PolynomialDrift drift_;
  Scheme scheme_;
  double dt_;
  Eigen::VectorXd linear_, decay_;
};

FemField step_splitting(const FemSpace& space, const PolynomialDrift& drift,
                        const ConvolutionSampler& noise, const FemField& state, const StreamKey& stream);
FemField step_exponential_euler(const FemSpace& space, const PolynomialDrift& drift,
                                const ConvolutionSampler& noise, const FemField& state,
                                const StreamKey& stream);
FemField step_semi_implicit(const FemSpace& space, const PolynomialDrift& drift,
                            const IncrementProjector& noise, const FemField& state,
                            const StreamKey& stream);

/// Nodal states at t_0 = 0, t_1 = dt, ..., t_N.
struct Trajectory {
  double dt = 0.0;
  std::vector<Eigen::VectorXd> states;
};

/// Noise matching `scheme` for a single space (null when Q = 0).
std::unique_ptr<ModalNoise> make_path_noise(const FemSpace& space, const CovarianceSpec& spec,
                                            Scheme scheme, double dt);

/// Integrates n_steps steps of the configured scheme from x0. Step n draws
/// its noise from `stream.with_step(n)`. Throws IntegrationError when the
/// state overflows.
FemField integrate(const FemSpace& space, const PolynomialDrift& drift, const ModalNoise* noise,
                   const SchemeConfig& scheme, const FemField& x0, const StreamKey& stream,
                   Trajectory* record = nullptr);
FemField integrate(const FemSpace& space, const PolynomialDrift& drift, const CovarianceSpec& spec,
                   const SchemeConfig& scheme, const FemField& x0, const StreamKey& stream,
                   Trajectory* record = nullptr);

/// First-variation process along a recorded trajectory, started at time
/// `start` with value `direction` (already in V_h).
FemField tangent_integrate(const FemSpace& space, const PolynomialDrift& drift, const Trajectory& base,
                           double start, const FemField& direction, const SchemeConfig& scheme);
/// Same, with the direction projected by P^h first.
FemField tangent_integrate(const FemSpace& space, const PolynomialDrift& drift, const Trajectory& base,
                           double start, const SpectralBasis& basis, const SpectralCoeffs& direction,
                           const SchemeConfig& scheme);

}  // namespace spdefem
