#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "spdefem/dynamics.hpp"
#include "spdefem/fem.hpp"
#include "spdefem/noise.hpp"

namespace spdefem {

/// Samples are simulated in chunks of this many columns. The chunk layout
/// depends only on the sample count, so results do not depend on how many
/// workers process the chunks.
inline constexpr std::size_t kChunkSize = 32;

/// One simulated resolution: a space plus a step of `dt_ratio` base steps.
struct EnsembleLevel {
  std::size_t space = 0;
  std::size_t dt_ratio = 1;
};

struct EnsembleSpec {
  std::vector<std::shared_ptr<const FemSpace>> spaces;
  std::vector<EnsembleLevel> levels;
  PolynomialDrift drift = PolynomialDrift::zero();
  Scheme scheme = Scheme::kSplitting;
  CovarianceSpec noise = CovarianceSpec::none();
  double base_dt = 0.0;
  std::size_t base_steps = 0;
  /// Initial nodal values, one per space.
  std::vector<Eigen::VectorXd> initial;
  std::uint64_t seed = 0;
  /// Record ||X||_inf^2 every this many base steps (and at t = 0); 0 = off.
  std::size_t checkpoint_every = 0;
};

/// Coupled Monte-Carlo simulation of several resolutions: every level of
/// a sample is driven by the same Brownian path.
class Ensemble {
 public:
  explicit Ensemble(EnsembleSpec spec);

  struct Chunk {
    /// Per level, nodal states at the final time (dim x count).
    std::vector<Eigen::MatrixXd> finals;
    /// Per level, squared sup norms at the checkpoints (checkpoints x count).
    std::vector<Eigen::MatrixXd> sup_sq;
    /// Sample aborted by overflow on any level.
    std::vector<std::uint8_t> aborted;
  };

  Chunk run(std::uint64_t first_sample, std::size_t count) const;

  const EnsembleSpec& spec() const { return spec_; }
  std::size_t checkpoints() const;

 private:
  EnsembleSpec spec_;
  std::unique_ptr<ModalNoise> noise_;
  std::vector<Propagator> propagators_;  // per level
  std::vector<Eigen::VectorXd> base_decay_;
};

/// Runs `fn(first, count)` over [0, total) in kChunkSize pieces on up to
/// `workers` threads. Exceptions from workers are rethrown.
void parallel_chunks(std::size_t total, int workers,
                     const std::function<void(std::size_t first, std::size_t count)>& fn);

}  // namespace spdefem
