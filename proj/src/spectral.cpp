#include "spdefem/spectral.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>
#include <string>

#include "spdefem/errors.hpp"

namespace spdefem {

namespace {
constexpr int kGaussPoints = 8;
constexpr int kPanelsPerHalfWave = 8;

// (cos k theta, sin k theta) by repeated rotation; the error grows linearly
// in k, unlike the three-term sine recurrence near theta = 0.
struct ModeRotation {
  explicit ModeRotation(double theta)
      : step_cos(std::cos(theta)), step_sin(std::sin(theta)), cos(step_cos), sin(step_sin) {}
  void advance() {
    const double c = cos * step_cos - sin * step_sin;
    sin = sin * step_cos + cos * step_sin;
    cos = c;
  }
  double step_cos, step_sin, cos, sin;
};
}  // namespace

SpectralCoeffs SpectralCoeffs::unit(int k_max, int k) {
  if (k < 1 || k > k_max) throw IndexError("mode index " + std::to_string(k) + " out of range");
  SpectralCoeffs c = zero(k_max);
  c.coeffs[k - 1] = 1.0;
  return c;
}

SpectralBasis::SpectralBasis(double length, int k_max) : length_(length), k_max_(k_max) {
  if (!(length > 0.0)) throw ArgumentError("interval length must be positive");
  if (k_max < 1) throw ArgumentError("k_max must be at least 1");
  eigenvalues_.resize(k_max);
  for (int k = 1; k <= k_max; ++k) {
    const double w = k * std::numbers::pi / length_;
    eigenvalues_[k - 1] = w * w;
  }
}

void SpectralBasis::check_mode(int k) const {
  if (k < 1 || k > k_max_)
    throw IndexError("mode index " + std::to_string(k) + " outside 1.." + std::to_string(k_max_));
}

void SpectralBasis::check_size(const SpectralCoeffs& x) const {
  if (x.size() != k_max_)
    throw IndexError("coefficient vector has " + std::to_string(x.size()) + " modes, basis has " +
                     std::to_string(k_max_));
}

double SpectralBasis::eigenvalue(int k) const {
  check_mode(k);
  return eigenvalues_[k - 1];
}

double SpectralBasis::eval_mode(int k, double x) const {
  check_mode(k);
  return std::sqrt(2.0 / length_) * std::sin(k * std::numbers::pi * x / length_);
}

double SpectralBasis::evaluate(const SpectralCoeffs& x, double point) const {
  check_size(x);
  ModeRotation rot(std::numbers::pi * point / length_);
  double acc = 0.0;
  for (int k = 0; k < k_max_; ++k, rot.advance()) acc += x.coeffs[k] * rot.sin;
  return std::sqrt(2.0 / length_) * acc;
}

SpectralCoeffs SpectralBasis::semigroup_apply(double t, const SpectralCoeffs& x) const {
  if (t < 0.0) throw ArgumentError("semigroup time must be non-negative");
  check_size(x);
  return SpectralCoeffs((x.coeffs.array() * (-eigenvalues_.array() * t).exp()).matrix());
}

SpectralCoeffs SpectralBasis::fractional_power_apply(double r, const SpectralCoeffs& x) const {
  check_size(x);
  if (r == 0.0) return x;
  return SpectralCoeffs((x.coeffs.array() * eigenvalues_.array().pow(0.5 * r)).matrix());
}

double SpectralBasis::hr_norm(double r, const SpectralCoeffs& x) const {
  return fractional_power_apply(r, x).norm();
}

int SpectralBasis::default_panels() const { return kPanelsPerHalfWave * k_max_; }

SpectralBasis::Quadrature SpectralBasis::quadrature(int panels) const {
  using Rule = boost::math::quadrature::gauss<double, kGaussPoints>;
  const auto& abscissa = Rule::abscissa();
  const auto& weight = Rule::weights();
  // Boost stores the non-negative half of the symmetric rule.
  std::vector<std::pair<double, double>> ref;
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    ref.emplace_back(abscissa[i], weight[i]);
    if (abscissa[i] != 0.0) ref.emplace_back(-abscissa[i], weight[i]);
  }
  Quadrature q;
  const auto npts = static_cast<Eigen::Index>(panels) * static_cast<Eigen::Index>(ref.size());
  q.nodes.resize(npts);
  q.weights.resize(npts);
  const double width = length_ / panels;
  Eigen::Index idx = 0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * width;
    for (const auto& [x, w] : ref) {
      q.nodes[idx] = mid + 0.5 * width * x;
      q.weights[idx] = 0.5 * width * w;
      ++idx;
    }
  }
  return q;
}

SpectralCoeffs SpectralBasis::project_function(const std::function<double(double)>& f) const {
  const Quadrature q = quadrature(default_panels());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(k_max_);
  const double scale = std::sqrt(2.0 / length_);
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) {
    const double fx = f(q.nodes[i]);
    if (!std::isfinite(fx))
      throw EvaluationError("non-finite function value at x=" + std::to_string(q.nodes[i]));
    const double wf = q.weights[i] * fx * scale;
    if (wf == 0.0) continue;
    ModeRotation rot(std::numbers::pi * q.nodes[i] / length_);
    for (int k = 0; k < k_max_; ++k, rot.advance()) acc[k] += wf * rot.sin;
  }
  return SpectralCoeffs(std::move(acc));
}

}  // namespace spdefem
