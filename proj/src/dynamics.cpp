#include "spdefem/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdefem/errors.hpp"

namespace spdefem {

// ------------------------------------------------------- PolynomialDrift

PolynomialDrift::PolynomialDrift(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
  if (coeffs_.empty()) coeffs_.push_back(0.0);
  for (double a : coeffs_)
    if (!std::isfinite(a)) throw ArgumentError("drift coefficients must be finite");
  const int k = degree();
  if (k > kMaxDegree)
    throw ArgumentError("drift degree K=" + std::to_string(k) + " exceeds 4 (moment bounds need K < 5)");
  const double lead = coeffs_.back();
  if (k >= 2 && (k % 2 == 0 || lead > 0.0))
    throw ArgumentError("one-sided Lipschitz violated: f' is unbounded above for degree " +
                        std::to_string(k) + " with leading coefficient " + std::to_string(lead));
  switch (k) {
    case 0:
      one_sided_ = 0.0;
      break;
    case 1:
      one_sided_ = coeffs_[1];
      break;
    default:  // k == 3, a_3 < 0: f' = 3 a3 x^2 + 2 a2 x + a1 peaks at -a2 / (3 a3)
      one_sided_ = coeffs_[1] - coeffs_[2] * coeffs_[2] / (3.0 * coeffs_[3]);
      break;
  }
}

PolynomialDrift PolynomialDrift::allen_cahn() { return PolynomialDrift({0.0, 1.0, 0.0, -1.0}); }
PolynomialDrift PolynomialDrift::zero() { return PolynomialDrift({0.0}); }

double PolynomialDrift::value(double x) const {
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
  return acc;
}

double PolynomialDrift::derivative(double x) const {
  double acc = 0.0;
  for (int j = degree(); j >= 1; --j) acc = acc * x + j * coeffs_[j];
  return acc;
}

double PolynomialDrift::second_derivative(double x) const {
  double acc = 0.0;
  for (int j = degree(); j >= 2; --j) acc = acc * x + j * (j - 1) * coeffs_[j];
  return acc;
}

bool PolynomialDrift::is_odd_cubic() const {
  return degree() == 3 && coeffs_[0] == 0.0 && coeffs_[2] == 0.0;
}

// ------------------------------------------------------------------ flow

namespace {

struct FlowValue {
  double x;
  double dx;
};

// RK4 on (x, dx/dx0) where d(dx)/dt = f'(x) dx.
FlowValue rk4_step(const PolynomialDrift& f, FlowValue s, double h) {
  const double k1 = f.value(s.x), m1 = f.derivative(s.x) * s.dx;
  const double x2 = s.x + 0.5 * h * k1, d2 = s.dx + 0.5 * h * m1;
  const double k2 = f.value(x2), m2 = f.derivative(x2) * d2;
  const double x3 = s.x + 0.5 * h * k2, d3 = s.dx + 0.5 * h * m2;
  const double k3 = f.value(x3), m3 = f.derivative(x3) * d3;
  const double x4 = s.x + h * k3, d4 = s.dx + h * m3;
  const double k4 = f.value(x4), m4 = f.derivative(x4) * d4;
  return {s.x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
          s.dx + h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)};
}

// Step-doubling control: local error below 1e-12 relative to max(1, |x|).
FlowValue adaptive_flow(const PolynomialDrift& f, double t, double x) {
  FlowValue s{x, 1.0};
  double elapsed = 0.0;
  double h = std::min(t, 0.1 / (1.0 + std::abs(f.derivative(x))));
  while (elapsed < t) {
    h = std::min(h, t - elapsed);
    const FlowValue full = rk4_step(f, s, h);
    const FlowValue half = rk4_step(f, rk4_step(f, s, 0.5 * h), 0.5 * h);
    const double err = std::max(std::abs(full.x - half.x) / std::max(1.0, std::abs(half.x)),
                                std::abs(full.dx - half.dx) / std::max(1.0, std::abs(half.dx))) /
                       15.0;
    constexpr double tol = 1e-12;
    const double factor = err == 0.0 ? 2.0 : std::clamp(0.9 * std::pow(tol / err, 0.2), 0.1, 2.0);
    if (err <= tol) {
      s = half;
      elapsed += h;
    } else if (h < 1e-14 * std::max(t, 1e-300)) {
      throw NumericalError("flow step size underflow");
    }
    h *= factor;
  }
  return s;
}

// Closed forms where available; the adaptive integrator otherwise.
FlowValue flow(const PolynomialDrift& f, double t, double x) {
  if (t == 0.0) return {x, 1.0};
  const auto& a = f.coeffs();
  const double a1 = a.size() > 1 ? a[1] : 0.0;
  if (f.degree() <= 1) {
    const double a0 = a[0];
    const double growth = std::exp(a1 * t);
    const double integral = a1 == 0.0 ? t : std::expm1(a1 * t) / a1;
    return {x * growth + a0 * integral, growth};
  }
  if (f.is_odd_cubic()) {
    // x' = a1 x + a3 x^3 is a Bernoulli equation: 1/x^2 is affine-linear.
    const double a3 = a[3];
    const double growth = std::exp(a1 * t);
    const double g = a1 == 0.0 ? t : std::expm1(2.0 * a1 * t) / (2.0 * a1);
    const double d = 1.0 - 2.0 * a3 * x * x * g;
    const double inv_sqrt = 1.0 / std::sqrt(d);
    return {x * growth * inv_sqrt, growth * inv_sqrt * inv_sqrt * inv_sqrt};
  }
  return adaptive_flow(f, t, x);
}

void check_time(double t) {
  if (!(t >= 0.0)) throw ArgumentError("flow time must be non-negative");
}

}  // namespace

double flow_map(const PolynomialDrift& drift, double t, double x) {
  check_time(t);
  return flow(drift, t, x).x;
}

double flow_derivative(const PolynomialDrift& drift, double t, double x) {
  check_time(t);
  return flow(drift, t, x).dx;
}

double psi(const PolynomialDrift& drift, double dt, double x) {
  check_time(dt);
  if (dt == 0.0) return drift.value(x);
  return (flow(drift, dt, x).x - x) / dt;
}

double flow_map_rk4(const PolynomialDrift& drift, double t, double x, int steps) {
  FlowValue s{x, 1.0};
  const double h = t / steps;
  for (int i = 0; i < steps; ++i) s = rk4_step(drift, s, h);
  return s.x;
}

// ------------------------------------------------------------ Propagator

void SchemeConfig::validate() const {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  if (!(diffusion_scale >= 0.0)) throw ArgumentError("diffusion scale must be non-negative");
}

Propagator::Propagator(const FemSpace& space, const PolynomialDrift& drift, Scheme scheme, double dt,
                       double diffusion_scale)
    : space_(&space), drift_(drift), scheme_(scheme), dt_(dt) {
  if (!(diffusion_scale >= 0.0)) throw ArgumentError("diffusion scale must be non-negative");
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  const Eigen::ArrayXd lambda = space.eig_values().array() * diffusion_scale;
  decay_ = (-lambda * dt).exp().matrix();
  linear_ = scheme == Scheme::kSemiImplicit ? (1.0 / (1.0 + lambda * dt)).matrix() : decay_;
}

void Propagator::apply_drift(Eigen::Ref<Eigen::MatrixXd> nodal) const {
  if (drift_.is_zero()) return;
  if (scheme_ == Scheme::kSplitting) {
    nodal = nodal.unaryExpr([this](double x) { return flow(drift_, dt_, x).x; });
  } else {
    nodal = nodal.unaryExpr([this](double x) { return x + dt_ * drift_.value(x); });
  }
}

void Propagator::step(Eigen::Ref<Eigen::MatrixXd> nodal, const Eigen::MatrixXd* noise) const {
  apply_drift(nodal);
  Eigen::MatrixXd modal = space_->to_modal() * nodal;
  if (scheme_ == Scheme::kSemiImplicit) {
    if (noise) modal += *noise;
    modal = linear_.asDiagonal() * modal;
  } else {
    modal = linear_.asDiagonal() * modal;
    if (noise) modal += *noise;
  }
  nodal.noalias() = space_->eig_vectors() * modal;
}

void Propagator::tangent_step(const Eigen::VectorXd& base, Eigen::VectorXd& eta) const {
  if (!drift_.is_zero()) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (scheme_ == Scheme::kSplitting)
        eta[i] *= flow(drift_, dt_, base[i]).dx;
      else
        eta[i] += dt_ * drift_.derivative(base[i]) * eta[i];
    }
  }
  const Eigen::VectorXd modal = linear_.asDiagonal() * (space_->to_modal() * eta);
  eta.noalias() = space_->eig_vectors() * modal;
}

namespace {

FemField single_step(const FemSpace& space, const PolynomialDrift& drift, Scheme scheme,
                     const ModalNoise& noise, const FemField& state, const StreamKey& stream) {
  space.check(state);
  if (noise.spaces() != 1 || noise.dim(0) != space.dim())
    throw ArgumentError("noise source was built for a different space");
  const Propagator prop(space, drift, scheme, noise.dt());
  Eigen::MatrixXd nodal = state.nodal;
  const std::uint64_t sample = stream.sample;
  const Eigen::MatrixXd g = noise.draw(stream, {&sample, 1}, stream.step);
  prop.step(nodal, &g);
  return space.field(nodal.col(0));
}

void check_overflow(const Eigen::Ref<const Eigen::MatrixXd>& nodal, std::size_t step) {
  if (!nodal.allFinite() || (nodal.size() && nodal.cwiseAbs().maxCoeff() > kOverflowBound))
    throw IntegrationError("state left the admissible range |u| <= 1e6", step);
}

}  // namespace

FemField step_splitting(const FemSpace& space, const PolynomialDrift& drift,
                        const ConvolutionSampler& noise, const FemField& state, const StreamKey& stream) {
  return single_step(space, drift, Scheme::kSplitting, noise, state, stream);
}

FemField step_exponential_euler(const FemSpace& space, const PolynomialDrift& drift,
                                const ConvolutionSampler& noise, const FemField& state,
                                const StreamKey& stream) {
  return single_step(space, drift, Scheme::kExponentialEuler, noise, state, stream);
}

FemField step_semi_implicit(const FemSpace& space, const PolynomialDrift& drift,
                            const IncrementProjector& noise, const FemField& state,
                            const StreamKey& stream) {
  return single_step(space, drift, Scheme::kSemiImplicit, noise, state, stream);
}

std::unique_ptr<ModalNoise> make_path_noise(const FemSpace& space, const CovarianceSpec& spec,
                                            Scheme scheme, double dt) {
  if (spec.is_zero()) return nullptr;
  const FemSpace* ptr = &space;
  if (scheme == Scheme::kSemiImplicit)
    return std::make_unique<IncrementProjector>(std::span<const FemSpace* const>(&ptr, 1), spec, dt);
  return std::make_unique<ConvolutionSampler>(std::span<const FemSpace* const>(&ptr, 1), spec, dt);
}

FemField integrate(const FemSpace& space, const PolynomialDrift& drift, const ModalNoise* noise,
                   const SchemeConfig& scheme, const FemField& x0, const StreamKey& stream,
                   Trajectory* record) {
  scheme.validate();
  space.check(x0);
  if (noise) {
    if (noise->spaces() != 1 || noise->dim(0) != space.dim())
      throw ArgumentError("noise source was built for a different space");
    if (std::abs(noise->dt() - scheme.dt) > 1e-15 * scheme.dt)
      throw ArgumentError("noise source time step differs from the scheme time step");
    if (noise->exact_convolution() == (scheme.scheme == Scheme::kSemiImplicit))
      throw ArgumentError("noise source does not match the scheme");
    if (scheme.diffusion_scale != 1.0)
      throw ArgumentError("diffusion scaling is only available without noise");
  }
  const Propagator prop(space, drift, scheme.scheme, scheme.dt, scheme.diffusion_scale);
  Eigen::MatrixXd nodal = x0.nodal;
  if (record) {
    record->dt = scheme.dt;
    record->states.assign(1, x0.nodal);
    record->states.reserve(scheme.n_steps + 1);
  }
  const std::uint64_t sample = stream.sample;
  for (std::size_t n = 0; n < scheme.n_steps; ++n) {
    if (noise) {
      const Eigen::MatrixXd g = noise->draw(stream, {&sample, 1}, n);
      prop.step(nodal, &g);
    } else {
      prop.step(nodal, nullptr);
    }
    check_overflow(nodal, n);
    if (record) record->states.push_back(nodal.col(0));
  }
  return space.field(nodal.col(0));
}

FemField integrate(const FemSpace& space, const PolynomialDrift& drift, const CovarianceSpec& spec,
                   const SchemeConfig& scheme, const FemField& x0, const StreamKey& stream,
                   Trajectory* record) {
  scheme.validate();
  const auto noise = make_path_noise(space, spec, scheme.scheme, scheme.dt);
  return integrate(space, drift, noise.get(), scheme, x0, stream, record);
}

FemField tangent_integrate(const FemSpace& space, const PolynomialDrift& drift, const Trajectory& base,
                           double start, const FemField& direction, const SchemeConfig& scheme) {
  scheme.validate();
  space.check(direction);
  if (std::abs(base.dt - scheme.dt) > 1e-15 * scheme.dt)
    throw StateError("trajectory was recorded with a different time step");
  if (base.states.size() < scheme.n_steps + 1)
    throw StateError("trajectory is missing checkpoints: have " + std::to_string(base.states.size()) +
                     ", need " + std::to_string(scheme.n_steps + 1));
  const double pos = start / scheme.dt;
  const auto first = static_cast<std::size_t>(std::llround(pos));
  if (start < 0.0 || std::abs(pos - static_cast<double>(first)) > 1e-9 || first > scheme.n_steps)
    throw StateError("start time is not a checkpoint of the trajectory");
  const Propagator prop(space, drift, scheme.scheme, scheme.dt, scheme.diffusion_scale);
  Eigen::VectorXd eta = direction.nodal;
  for (std::size_t n = first; n < scheme.n_steps; ++n) prop.tangent_step(base.states[n], eta);
  return space.field(std::move(eta));
}

FemField tangent_integrate(const FemSpace& space, const PolynomialDrift& drift, const Trajectory& base,
                           double start, const SpectralBasis& basis, const SpectralCoeffs& direction,
                           const SchemeConfig& scheme) {
  return tangent_integrate(space, drift, base, start, l2_project(space, basis, direction), scheme);
}

}  // namespace spdefem
