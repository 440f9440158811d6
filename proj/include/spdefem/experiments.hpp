#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdefem/dynamics.hpp"
#include "spdefem/ensemble.hpp"
#include "spdefem/fem.hpp"
#include "spdefem/fit.hpp"
#include "spdefem/noise.hpp"
#include "spdefem/spectral.hpp"

namespace spdefem {

enum class StudyKind { kStrong, kWeak, kMoments, kOperators, kSplittingDt };

/// Time step selection for MC studies.
///  kFixed:   every level uses `dt`.
///  kCoupled: level h uses the largest T/2^m not above h^{2 beta}.
///  kProbe:   start from `dt` and halve until the dt-halving probe passes.
enum class DtPolicy { kFixed, kCoupled, kProbe };

/// Test functional phi: V_h -> R. All shipped functionals are in C_b^2.
///   exp_neg_norm_sq       phi(x) = exp(-||x||^2)
///   cos_inner             phi(x) = cos(<x, v>), v = sum_k direction_k e_k
///   inv_one_plus_norm_sq  phi(x) = 1 / (1 + ||x||^2)
///   constant              phi(x) = value
struct TestFunctional {
  std::string id = "exp_neg_norm_sq";
  std::vector<double> direction{1.0};
  double value = 1.0;

  static bool is_shipped(const std::string& id);
};

/// Evaluates a functional on the nodal states of one space.
class FunctionalEvaluator {
 public:
  FunctionalEvaluator(const TestFunctional& phi, const FemSpace& space);
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& nodal) const;

 private:
  TestFunctional phi_;
  const FemSpace* space_;
  Eigen::VectorXd direction_load_;  // <phi_i, v>
};

struct OperatorCase {
  double s = 0.0;
  double r = 2.0;
  ErrorOperator which = ErrorOperator::kL2Projection;
  double t = 0.0;  // semigroup error only
};

struct MeshPolicy {
  bool jittered = false;
  double jitter = 0.0;
  std::uint64_t seed = 1;
};

struct StudyConfig {
  std::string name = "study";
  StudyKind kind = StudyKind::kStrong;
  double length = 1.0;
  std::vector<double> h;        // tested mesh sizes
  double h_ref = 0.0;           // 0: min(h) / 4
  MeshPolicy mesh;
  double final_time = 1.0;
  double dt = 1.0 / 1024.0;
  DtPolicy dt_policy = DtPolicy::kFixed;
  std::vector<double> dt_levels;  // splitting_dt
  double dt_ref = 0.0;            // splitting_dt
  std::size_t samples = 400;
  double p = 2.0;
  Scheme scheme = Scheme::kSplitting;
  TestFunctional functional;
  CovarianceSpec noise = CovarianceSpec::power_decay(2.0);
  PolynomialDrift drift = PolynomialDrift::allen_cahn();
  /// X_0 = sum_k initial_modes[k-1] sin(k pi x/L), projected by P^h.
  std::vector<double> initial_modes{1.0, 0.5};
  std::uint64_t seed = 20240917;
  std::vector<OperatorCase> operators;
  std::size_t checkpoints = 16;  // moments
  std::size_t probe_samples = 32;
  std::size_t probe_halvings = 4;
  double probe_tolerance = 0.1;
  /// Spectral modes for operator norms; 0 picks 4 N_h of the finest mesh.
  int spectral_modes = 0;

  double reference_h() const;
};

struct Diagnostics {
  std::size_t aborted = 0;
  bool noise_floor = false;
  bool monotone = true;
  double dt_used = 0.0;
  std::optional<double> temporal_probe_ratio;
  std::vector<std::string> notes;
};

struct RateReport {
  std::string name;
  std::string abscissa = "h";
  std::vector<LevelEstimate> levels;
  /// Weak studies: E[phi(X^{h_ref}) - phi(X^h)] before taking |.|.
  std::vector<double> signed_errors;
  std::optional<RateFit> fit;
  Diagnostics diagnostics;
};

struct MomentLevel {
  double h = 0.0;
  double z_sup_sq = 0.0, z_sup_sq_se = 0.0;     // E ||Z^h(T)||_inf^2
  double z_l2_sq = 0.0, z_l2_sq_se = 0.0;       // E ||Z^h(T)||^2
  double x_sup_sq = 0.0, x_sup_sq_se = 0.0;     // sup_t E ||X^h(t)||_inf^2
};

/// Growth of each moment against log(1 + log(1/h)) (slope of log moment):
/// 0 for bounded moments, p/2 for a (1 + log(1/h))^{p/2} envelope.
struct MomentReport {
  std::string name;
  std::vector<MomentLevel> levels;
  RateReport z_sup, z_l2, x_sup;  // growth fits, abscissa 1 + log(1/h)
  Diagnostics diagnostics;
};

/// Uniform (or jittered) mesh with L/h elements; h must divide L.
Mesh1D make_mesh(const StudyConfig& cfg, double h);
/// P^h X_0 for the configured initial modes.
Eigen::VectorXd initial_nodal(const StudyConfig& cfg, const FemSpace& space);

RateReport run_strong_study(const StudyConfig& cfg, int workers = 1);
RateReport run_weak_study(const StudyConfig& cfg, int workers = 1);
MomentReport run_moment_study(const StudyConfig& cfg, int workers = 1);
std::vector<RateReport> run_operator_study(const StudyConfig& cfg);
RateReport run_splitting_dt_study(const StudyConfig& cfg, int workers = 1);

/// E phi(X^h(T)) in closed form for zero drift and phi = cos(<x, v>). With
/// f = 0 the exponential schemes reproduce the Ornstein-Uhlenbeck law of
/// the semi-discrete equation exactly, so <X^h(T), v> is Gaussian with
/// mean <S^h(T) P^h x0, v> and variance a^T C(T) a, a_i = <e_i^h, v>.
double linear_cos_expectation(const StudyConfig& cfg, double h);

/// Mean and standard error with compensated summation, in index order.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};
MeanEstimate estimate_mean(std::span<const double> values, std::span<const std::uint8_t> skip = {});

}  // namespace spdefem
