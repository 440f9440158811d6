#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "spdefem/fem.hpp"
#include "spdefem/rng.hpp"
#include "spdefem/spectral.hpp"

namespace spdefem {

enum class CovarianceKind { kPowerDecay, kWhite, kCustom };

/// Covariance operator Q, diagonal in the sine basis with eigenvalues q_k.
struct CovarianceSpec {
  static constexpr int kDefaultTruncation = 4096;

  CovarianceKind kind = CovarianceKind::kWhite;
  double rho = 0.0;              // power decay exponent, q_k = k^{-rho}
  std::vector<double> custom;    // q_1.. for kCustom
  int k_trunc = kDefaultTruncation;
  std::optional<double> beta;    // caller-supplied regularity for kCustom

  static CovarianceSpec power_decay(double rho, int k_trunc = kDefaultTruncation);
  static CovarianceSpec white(int k_trunc = kDefaultTruncation);
  static CovarianceSpec custom_sequence(std::vector<double> q, double beta);
  /// Q = 0: deterministic runs.
  static CovarianceSpec none();

  double q(int k) const;
  Eigen::VectorXd eigenvalues() const;
  bool is_zero() const;
  /// Sum q_k < infinity (decided from the series, not the truncation).
  bool trace_class() const;
  /// Regularity index used by studies: the supplied beta if any, else the implied one.
  double regularity() const;
  void validate() const;
};

/// Supremum of admissible beta in (0, 1]; `attained` is false when the
/// series only converges strictly below `value`.
struct ImpliedBeta {
  double value;
  bool attained;
};

ImpliedBeta implied_beta(const CovarianceSpec& spec);

/// Brownian amplitude increments: column n holds the step-n increments
/// Delta W_k ~ N(0, q_k dt) of the k_trunc retained modes.
struct NoiseIncrementBatch {
  double dt = 0.0;
  Eigen::MatrixXd increments;
};

/// Step n of the batch is drawn from `stream.with_step(stream.step + n)`.
NoiseIncrementBatch sample_increments(const CovarianceSpec& spec, double dt, int n_steps,
                                      const StreamKey& stream);

/// P^h (sum_k amplitudes_k e_k).
FemField project_increment(const FemSpace& space, const ModeCoupling& coupling,
                           const Eigen::Ref<const Eigen::VectorXd>& amplitudes);

/// Source of per-step noise for a set of spaces, returned as stacked
/// discrete-eigenbasis coefficients (rows `offset(s)`..`offset(s)+dim(s)`).
class ModalNoise {
 public:
  virtual ~ModalNoise() = default;

  /// One column per sample index, all at base step `step`.
  virtual Eigen::MatrixXd draw(const StreamKey& base, std::span<const std::uint64_t> samples,
                               std::uint64_t step) const = 0;
  virtual bool exact_convolution() const = 0;

  int total_dim() const { return offsets_.empty() ? 0 : offsets_.back(); }
  int offset(std::size_t s) const { return offsets_[s]; }
  int dim(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
  std::size_t spaces() const { return offsets_.size() - 1; }
  double dt() const { return dt_; }

 protected:
  std::vector<int> offsets_{0};
  double dt_ = 0.0;
};

/// Exact stochastic convolution over one step,
///   G = int_0^dt S^h(dt - s) P^h dW(s),
/// sampled jointly for all given spaces so that every mesh sees the same
/// Brownian path. The joint covariance in the discrete eigenbases is
///   C_ij = sum_k q_k <e_k, e_i^a><e_k, e_j^b> (1 - e^{-(l_i^a + l_j^b) dt}) / (l_i^a + l_j^b)
/// and is factorised by Cholesky.
class ConvolutionSampler final : public ModalNoise {
 public:
  ConvolutionSampler(std::span<const FemSpace* const> spaces, const CovarianceSpec& spec, double dt);

  Eigen::MatrixXd draw(const StreamKey& base, std::span<const std::uint64_t> samples,
                       std::uint64_t step) const override;
  bool exact_convolution() const override { return true; }

  const Eigen::MatrixXd& covariance() const { return covariance_; }
  /// Diagonal shift that was needed for the factorisation.
  double regularization() const { return regularization_; }

 private:
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;
  double regularization_ = 0.0;
  bool zero_ = false;
};

/// Projected Brownian increments P^h Delta W in the discrete eigenbases,
/// i.e. E Delta W with E_ik = <e_k, e_i^h>. Drives the semi-implicit scheme.
class IncrementProjector final : public ModalNoise {
 public:
  IncrementProjector(std::span<const FemSpace* const> spaces, const CovarianceSpec& spec, double dt);

  Eigen::MatrixXd draw(const StreamKey& base, std::span<const std::uint64_t> samples,
                       std::uint64_t step) const override;
  bool exact_convolution() const override { return false; }

 private:
  Eigen::MatrixXd modal_;  // stacked E, total_dim x k_trunc
  Eigen::VectorXd scale_;  // sqrt(q_k dt)
  bool zero_ = false;
};

/// e^{-A_h dt} state + G with G drawn from `sampler` at `stream`.
FemField convolution_step(const FemSpace& space, const ConvolutionSampler& sampler,
                          const FemField& state, const StreamKey& stream);
FemField convolution_step(const FemSpace& space, const CovarianceSpec& spec, double dt,
                          const FemField& state, const StreamKey& stream);

}  // namespace spdefem
