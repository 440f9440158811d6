#include "spdefem/noise.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <string>

#include "spdefem/errors.hpp"

namespace spdefem {

// -------------------------------------------------------- CovarianceSpec

CovarianceSpec CovarianceSpec::power_decay(double rho, int k_trunc) {
  CovarianceSpec s;
  s.kind = rho == 0.0 ? CovarianceKind::kWhite : CovarianceKind::kPowerDecay;
  s.rho = rho;
  s.k_trunc = k_trunc;
  s.validate();
  return s;
}

CovarianceSpec CovarianceSpec::white(int k_trunc) { return power_decay(0.0, k_trunc); }

CovarianceSpec CovarianceSpec::custom_sequence(std::vector<double> q, double beta) {
  CovarianceSpec s;
  s.kind = CovarianceKind::kCustom;
  s.k_trunc = static_cast<int>(q.size());
  s.custom = std::move(q);
  s.beta = beta;
  s.validate();
  return s;
}

CovarianceSpec CovarianceSpec::none() { return custom_sequence({0.0}, 1.0); }

double CovarianceSpec::q(int k) const {
  if (k < 1 || k > k_trunc) throw IndexError("noise mode " + std::to_string(k) + " out of range");
  switch (kind) {
    case CovarianceKind::kWhite:
      return 1.0;
    case CovarianceKind::kPowerDecay:
      return std::pow(static_cast<double>(k), -rho);
    case CovarianceKind::kCustom:
      return custom[k - 1];
  }
  return 0.0;
}

Eigen::VectorXd CovarianceSpec::eigenvalues() const {
  Eigen::VectorXd out(k_trunc);
  for (int k = 1; k <= k_trunc; ++k) out[k - 1] = q(k);
  return out;
}

bool CovarianceSpec::is_zero() const {
  if (kind != CovarianceKind::kCustom) return false;
  for (double v : custom)
    if (v != 0.0) return false;
  return true;
}

bool CovarianceSpec::trace_class() const {
  switch (kind) {
    case CovarianceKind::kWhite:
      return false;
    case CovarianceKind::kPowerDecay:
      return rho > 1.0;
    case CovarianceKind::kCustom:
      return true;  // finite sequence
  }
  return false;
}

double CovarianceSpec::regularity() const {
  if (beta) return *beta;
  return implied_beta(*this).value;
}

void CovarianceSpec::validate() const {
  if (k_trunc < 1) throw ArgumentError("noise truncation must retain at least one mode");
  switch (kind) {
    case CovarianceKind::kWhite:
      if (rho != 0.0) throw ArgumentError("white noise has rho = 0");
      break;
    case CovarianceKind::kPowerDecay:
      if (!(rho > -1.0) || !std::isfinite(rho))
        throw ArgumentError("power decay needs rho > -1 for a positive regularity index");
      break;
    case CovarianceKind::kCustom:
      if (static_cast<int>(custom.size()) != k_trunc)
        throw ArgumentError("custom sequence length must equal the truncation");
      for (double v : custom)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("covariance eigenvalues must be >= 0");
      if (!beta || !(*beta > 0.0 && *beta <= 1.0))
        throw ArgumentError("custom covariance needs a supplied beta in (0, 1]");
      break;
  }
}

ImpliedBeta implied_beta(const CovarianceSpec& spec) {
  if (spec.kind == CovarianceKind::kCustom)
    throw UnsupportedError("custom covariance: the caller must supply beta");
  // sum_k lambda_k^{beta-1} q_k ~ sum_k k^{2 beta - 2 - rho} converges iff
  // beta < (rho + 1) / 2.
  const double sup = 0.5 * (spec.rho + 1.0);
  if (sup > 1.0) return {1.0, true};
  return {sup, false};
}

// ------------------------------------------------------------ increments

NoiseIncrementBatch sample_increments(const CovarianceSpec& spec, double dt, int n_steps,
                                      const StreamKey& stream) {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  if (n_steps < 0) throw ArgumentError("step count must be non-negative");
  NoiseIncrementBatch batch;
  batch.dt = dt;
  batch.increments.resize(spec.k_trunc, n_steps);
  const Eigen::ArrayXd scale = (spec.eigenvalues().array() * dt).sqrt();
  Eigen::VectorXd z(spec.k_trunc);
  for (int n = 0; n < n_steps; ++n) {
    fill_normal(stream.with_purpose(StreamPurpose::kIncrements).with_step(stream.step + n),
                {z.data(), static_cast<std::size_t>(z.size())});
    batch.increments.col(n) = (scale * z.array()).matrix();
  }
  return batch;
}

FemField project_increment(const FemSpace& space, const ModeCoupling& coupling,
                           const Eigen::Ref<const Eigen::VectorXd>& amplitudes) {
  if (amplitudes.size() > coupling.hat_sine.cols())
    throw IndexError("more amplitudes than coupled modes");
  const auto k = amplitudes.size();
  return space.field(space.solve_mass(coupling.hat_sine.leftCols(k) * amplitudes));
}

// ---------------------------------------------------- ConvolutionSampler

namespace {

// Stacked E = V^T B for all spaces, with the truncation of `spec`.
Eigen::MatrixXd stacked_modal(std::span<const FemSpace* const> spaces, const CovarianceSpec& spec,
                              std::vector<int>& offsets) {
  if (spaces.empty()) throw ArgumentError("noise needs at least one space");
  const double length = spaces.front()->mesh().length();
  const SpectralBasis basis(length, spec.k_trunc);
  int total = 0;
  offsets.assign(1, 0);
  for (const FemSpace* s : spaces) {
    total += s->dim();
    offsets.push_back(total);
  }
  Eigen::MatrixXd stacked(total, spec.k_trunc);
  for (std::size_t i = 0; i < spaces.size(); ++i)
    stacked.middleRows(offsets[i], spaces[i]->dim()) = ModeCoupling::build(*spaces[i], basis).modal;
  return stacked;
}

void keyed_normals(const StreamKey& base, StreamPurpose purpose,
                   std::span<const std::uint64_t> samples, std::uint64_t step, Eigen::MatrixXd& z) {
  for (std::size_t c = 0; c < samples.size(); ++c) {
    const StreamKey key = base.with_purpose(purpose).with_sample(samples[c]).with_step(step);
    fill_normal(key, {z.col(static_cast<Eigen::Index>(c)).data(), static_cast<std::size_t>(z.rows())});
  }
}

}  // namespace

ConvolutionSampler::ConvolutionSampler(std::span<const FemSpace* const> spaces,
                                       const CovarianceSpec& spec, double dt) {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  spec.validate();
  dt_ = dt;
  const Eigen::MatrixXd modal = stacked_modal(spaces, spec, offsets_);
  const int total = total_dim();
  Eigen::VectorXd lambda(total);
  for (std::size_t i = 0; i < spaces.size(); ++i)
    lambda.segment(offsets_[i], spaces[i]->dim()) = spaces[i]->eig_values();

  zero_ = spec.is_zero();
  if (zero_) {
    covariance_ = Eigen::MatrixXd::Zero(total, total);
    factor_ = covariance_;
    return;
  }
  const Eigen::MatrixXd weighted = modal * spec.eigenvalues().array().sqrt().matrix().asDiagonal();
  covariance_.resize(total, total);
  covariance_.triangularView<Eigen::Lower>() = weighted * weighted.transpose();
  for (int j = 0; j < total; ++j)
    for (int i = j; i < total; ++i) {
      const double rate = lambda[i] + lambda[j];
      covariance_(i, j) *= -std::expm1(-rate * dt) / rate;
    }
  covariance_.triangularView<Eigen::StrictlyUpper>() = covariance_.transpose();

  const double trace = covariance_.trace();
  for (const double eps : {0.0, 1e-16, 1e-15, 1e-14}) {
    regularization_ = eps * trace;
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_ +
                                    regularization_ * Eigen::MatrixXd::Identity(total, total));
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      return;
    }
  }
  throw NumericalError("convolution covariance is not positive definite after 1e-14*trace "
                       "regularization");
}

Eigen::MatrixXd ConvolutionSampler::draw(const StreamKey& base, std::span<const std::uint64_t> samples,
                                         std::uint64_t step) const {
  const auto cols = static_cast<Eigen::Index>(samples.size());
  if (zero_) return Eigen::MatrixXd::Zero(total_dim(), cols);
  Eigen::MatrixXd z(total_dim(), cols);
  keyed_normals(base, StreamPurpose::kConvolution, samples, step, z);
  return factor_.triangularView<Eigen::Lower>() * z;
}

IncrementProjector::IncrementProjector(std::span<const FemSpace* const> spaces,
                                       const CovarianceSpec& spec, double dt) {
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  spec.validate();
  dt_ = dt;
  modal_ = stacked_modal(spaces, spec, offsets_);
  scale_ = (spec.eigenvalues().array() * dt).sqrt().matrix();
  zero_ = spec.is_zero();
}

Eigen::MatrixXd IncrementProjector::draw(const StreamKey& base, std::span<const std::uint64_t> samples,
                                         std::uint64_t step) const {
  const auto cols = static_cast<Eigen::Index>(samples.size());
  if (zero_) return Eigen::MatrixXd::Zero(total_dim(), cols);
  Eigen::MatrixXd z(scale_.size(), cols);
  keyed_normals(base, StreamPurpose::kIncrements, samples, step, z);
  return modal_ * (scale_.asDiagonal() * z);
}

FemField convolution_step(const FemSpace& space, const ConvolutionSampler& sampler,
                          const FemField& state, const StreamKey& stream) {
  if (sampler.spaces() != 1 || sampler.dim(0) != space.dim())
    throw ArgumentError("sampler was built for a different space");
  Eigen::VectorXd c = space.modal(state);
  c.array() *= (-space.eig_values().array() * sampler.dt()).exp();
  const std::uint64_t sample = stream.sample;
  c += sampler.draw(stream, {&sample, 1}, stream.step).col(0);
  return space.from_modal(c);
}

FemField convolution_step(const FemSpace& space, const CovarianceSpec& spec, double dt,
                          const FemField& state, const StreamKey& stream) {
  const FemSpace* ptr = &space;
  const ConvolutionSampler sampler({&ptr, 1}, spec, dt);
  return convolution_step(space, sampler, state, stream);
}

}  // namespace spdefem
