#include "spdefem/fit.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <string>

#include "spdefem/errors.hpp"

namespace spdefem {

bool above_noise_floor(double error, double std_error) {
  return std::abs(error) > kNoiseFloorFactor * std_error;
}

RateFit fit_rate(std::span<const LevelEstimate> levels) {
  std::vector<LevelEstimate> use;
  bool weighted = true;
  for (const auto& l : levels) {
    if (!l.usable) continue;
    if (!(l.error > 0.0) || !(l.h > 0.0))
      throw ArgumentError("rate fits need positive errors and abscissae");
    use.push_back(l);
    if (!(l.std_error > 0.0)) weighted = false;
  }
  if (use.size() < 3)
    throw InsufficientDataError("rate fit needs at least 3 usable levels, got " +
                                std::to_string(use.size()));

  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& l : use) {
    const double w = weighted ? std::pow(l.error / l.std_error, 2) : 1.0;
    const double x = std::log(l.h), y = std::log(l.error);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) throw InsufficientDataError("rate fit abscissae are degenerate");
  RateFit fit;
  fit.used = use.size();
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sy - fit.slope * sx) / sw;

  double chi2 = 0;
  for (const auto& l : use) {
    const double w = weighted ? std::pow(l.error / l.std_error, 2) : 1.0;
    const double r = std::log(l.error) - fit.intercept - fit.slope * std::log(l.h);
    chi2 += w * r * r;
  }
  const double dof = static_cast<double>(use.size()) - 2.0;
  const double var_slope_unit = sw / det;  // (X^T W X)^{-1}_{slope}
  double half_width = 0.0;
  if (weighted) {
    const double scale = std::max(1.0, chi2 / dof);
    const boost::math::normal_distribution<> normal;
    half_width = boost::math::quantile(normal, 0.975) * std::sqrt(var_slope_unit * scale);
  } else {
    const boost::math::students_t_distribution<> t(dof);
    half_width = boost::math::quantile(t, 0.975) * std::sqrt(var_slope_unit * chi2 / dof);
  }
  fit.ci_lo = fit.slope - half_width;
  fit.ci_hi = fit.slope + half_width;
  return fit;
}

}  // namespace spdefem
