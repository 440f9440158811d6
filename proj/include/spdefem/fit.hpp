#pragma once

#include <span>
#include <vector>

namespace spdefem {

/// Error estimate at one resolution. `h` is the abscissa of the fit (mesh
/// size, time step, or a transformed variable for growth fits).
struct LevelEstimate {
  double h = 0.0;
  double error = 0.0;
  double std_error = 0.0;
  bool usable = true;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t used = 0;
};

/// A Monte-Carlo level enters a fit only when |error| > 4 std_error.
inline constexpr double kNoiseFloorFactor = 4.0;
/// Relative standard error above which a report is flagged.
inline constexpr double kNoiseFloorRelative = 0.25;

bool above_noise_floor(double error, double std_error);

/// Least squares on (log h, log error) over the usable levels. Weights are
/// (error/std_error)^2, the inverse variance of log error; with any zero
/// standard error the fit is unweighted. The 95% interval uses the
/// parameter covariance, scaled by the reduced chi-square when it exceeds
/// one (weighted) or estimated from the residuals (unweighted).
RateFit fit_rate(std::span<const LevelEstimate> levels);

}  // namespace spdefem
