#include "spdefem/ensemble.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "spdefem/errors.hpp"

namespace spdefem {

Ensemble::Ensemble(EnsembleSpec spec) : spec_(std::move(spec)) {
  if (spec_.spaces.empty() || spec_.levels.empty()) throw ArgumentError("ensemble needs levels");
  if (spec_.initial.size() != spec_.spaces.size())
    throw ArgumentError("one initial state per space is required");
  for (std::size_t s = 0; s < spec_.spaces.size(); ++s)
    if (spec_.initial[s].size() != spec_.spaces[s]->dim())
      throw ArgumentError("initial state has the wrong dimension");
  for (const auto& lvl : spec_.levels) {
    if (lvl.space >= spec_.spaces.size()) throw ArgumentError("level refers to an unknown space");
    if (lvl.dt_ratio == 0 || spec_.base_steps % lvl.dt_ratio != 0)
      throw ArgumentError("level step must divide the number of base steps");
    if (spec_.checkpoint_every && spec_.checkpoint_every % lvl.dt_ratio != 0)
      throw ArgumentError("checkpoint interval must be a multiple of every level step");
  }
  if (spec_.checkpoint_every && spec_.base_steps % spec_.checkpoint_every != 0)
    throw ArgumentError("checkpoint interval must divide the number of base steps");

  std::vector<const FemSpace*> raw;
  for (const auto& s : spec_.spaces) raw.push_back(s.get());
  if (!spec_.noise.is_zero()) {
    if (spec_.scheme == Scheme::kSemiImplicit)
      noise_ = std::make_unique<IncrementProjector>(raw, spec_.noise, spec_.base_dt);
    else
      noise_ = std::make_unique<ConvolutionSampler>(raw, spec_.noise, spec_.base_dt);
  }
  for (const auto& lvl : spec_.levels) {
    propagators_.emplace_back(*spec_.spaces[lvl.space], spec_.drift, spec_.scheme,
                              spec_.base_dt * static_cast<double>(lvl.dt_ratio));
    base_decay_.push_back(
        (-spec_.spaces[lvl.space]->eig_values().array() * spec_.base_dt).exp().matrix());
  }
}

std::size_t Ensemble::checkpoints() const {
  return spec_.checkpoint_every ? spec_.base_steps / spec_.checkpoint_every + 1 : 0;
}

Ensemble::Chunk Ensemble::run(std::uint64_t first_sample, std::size_t count) const {
  const auto cols = static_cast<Eigen::Index>(count);
  const std::size_t nlev = spec_.levels.size();
  std::vector<std::uint64_t> samples(count);
  std::iota(samples.begin(), samples.end(), first_sample);

  Chunk out;
  out.aborted.assign(count, 0);
  std::vector<Eigen::MatrixXd> state(nlev), pending(nlev);
  for (std::size_t l = 0; l < nlev; ++l) {
    const std::size_t s = spec_.levels[l].space;
    state[l] = spec_.initial[s].replicate(1, cols);
    pending[l] = Eigen::MatrixXd::Zero(spec_.spaces[s]->dim(), cols);
  }
  const std::size_t nck = checkpoints();
  if (nck) {
    out.sup_sq.assign(nlev, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nck), cols));
    for (std::size_t l = 0; l < nlev; ++l)
      out.sup_sq[l].row(0) = state[l].cwiseAbs().colwise().maxCoeff().array().square().matrix();
  }
  const StreamKey base{spec_.seed, 0, 0, StreamPurpose::kConvolution};
  const bool exact = noise_ && noise_->exact_convolution();

  for (std::size_t j = 0; j < spec_.base_steps; ++j) {
    Eigen::MatrixXd g;
    if (noise_) g = noise_->draw(base, samples, j);
    for (std::size_t l = 0; l < nlev; ++l) {
      const auto& lvl = spec_.levels[l];
      const int off = noise_ ? noise_->offset(lvl.space) : 0;
      const int dim = spec_.spaces[lvl.space]->dim();
      if (noise_) {
        // Sub-step aggregation: exact convolutions are propagated by the
        // base-step semigroup, Brownian increments simply add up.
        if (exact && lvl.dt_ratio > 1) pending[l] = base_decay_[l].asDiagonal() * pending[l];
        pending[l] += g.middleRows(off, dim);
      }
      if ((j + 1) % lvl.dt_ratio != 0) continue;
      propagators_[l].step(state[l], noise_ ? &pending[l] : nullptr);
      if (noise_) pending[l].setZero();
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (out.aborted[c]) continue;
        const auto col = state[l].col(c);
        if (!col.allFinite() || col.cwiseAbs().maxCoeff() > kOverflowBound) {
          out.aborted[c] = 1;
          for (auto& st : state) st.col(c).setZero();
        }
      }
    }
    if (nck && (j + 1) % spec_.checkpoint_every == 0) {
      const auto row = static_cast<Eigen::Index>((j + 1) / spec_.checkpoint_every);
      for (std::size_t l = 0; l < nlev; ++l)
        out.sup_sq[l].row(row) = state[l].cwiseAbs().colwise().maxCoeff().array().square().matrix();
    }
  }
  out.finals = std::move(state);
  return out;
}

void parallel_chunks(std::size_t total, int workers,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t nchunks = (total + kChunkSize - 1) / kChunkSize;
  const auto nthreads = static_cast<std::size_t>(std::max(1, workers));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        const std::size_t first = c * kChunkSize;
        fn(first, std::min(kChunkSize, total - first));
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = nchunks;
      }
    }
  };
  if (nthreads == 1 || nchunks <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(nthreads, nchunks); ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace spdefem
