#include "spdefem/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spdefem/errors.hpp"

namespace spdefem {

namespace {

// Neumaier summation, visited in index order.
struct CompensatedSum {
  double sum = 0.0, comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

std::size_t steps_for(double final_time, double dt) {
  const double n = final_time / dt;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * std::max(1.0, r))
    throw ArgumentError("time step must divide the final time");
  return static_cast<std::size_t>(r);
}

std::size_t ratio_of(double dt, double base) {
  const double q = dt / base;
  const double r = std::round(q);
  if (r < 1.0 || std::abs(q - r) > 1e-9 * r) throw ArgumentError("time steps must be nested multiples");
  return static_cast<std::size_t>(r);
}

double study_beta(const StudyConfig& cfg) {
  if (cfg.noise.beta) return *cfg.noise.beta;
  if (cfg.noise.kind == CovarianceKind::kCustom) throw ArgumentError("custom covariance needs an explicit beta");
  return implied_beta(cfg.noise).value;
}

// Largest T / 2^m not above h^{2 beta}.
double coupled_dt(const StudyConfig& cfg, double h) {
  const double target = std::pow(h, 2.0 * study_beta(cfg));
  double dt = cfg.final_time;
  while (dt > target * (1.0 + 1e-12)) dt *= 0.5;
  return dt;
}

std::vector<double> sorted_levels(const StudyConfig& cfg) {
  if (cfg.h.empty()) throw ArgumentError("study needs at least one mesh level");
  std::vector<double> h = cfg.h;
  std::sort(h.begin(), h.end(), std::greater<>());
  if (std::adjacent_find(h.begin(), h.end()) != h.end()) throw ArgumentError("duplicate mesh level");
  return h;
}

// Spaces for the tested levels followed by the reference space.
std::vector<std::shared_ptr<const FemSpace>> build_spaces(const StudyConfig& cfg,
                                                         const std::vector<double>& h, bool with_ref) {
  std::vector<std::shared_ptr<const FemSpace>> spaces;
  for (double hi : h) spaces.push_back(std::make_shared<const FemSpace>(make_mesh(cfg, hi)));
  if (with_ref) spaces.push_back(std::make_shared<const FemSpace>(make_mesh(cfg, cfg.reference_h())));
  return spaces;
}

std::vector<Eigen::VectorXd> initial_states(const StudyConfig& cfg,
                                            const std::vector<std::shared_ptr<const FemSpace>>& spaces,
                                            bool zero) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& s : spaces)
    out.push_back(zero ? Eigen::VectorXd::Zero(s->dim()) : initial_nodal(cfg, *s));
  return out;
}

// Per-sample values for every level, filled chunk by chunk.
struct SampleTable {
  std::vector<std::vector<double>> values;  // [level][sample]
  std::vector<std::uint8_t> aborted;

  SampleTable(std::size_t levels, std::size_t samples)
      : values(levels, std::vector<double>(samples, 0.0)), aborted(samples, 0) {}
  std::size_t aborted_count() const {
    return static_cast<std::size_t>(std::count(aborted.begin(), aborted.end(), std::uint8_t{1}));
  }
};

using ChunkReducer = std::function<void(const Ensemble::Chunk&, std::size_t first, SampleTable&)>;

SampleTable run_table(const Ensemble& ens, std::size_t samples, std::size_t levels, int workers,
                      const ChunkReducer& reduce) {
  SampleTable table(levels, samples);
  parallel_chunks(samples, workers, [&](std::size_t first, std::size_t count) {
    const Ensemble::Chunk chunk = ens.run(first, count);
    for (std::size_t c = 0; c < count; ++c) table.aborted[first + c] = chunk.aborted[c];
    reduce(chunk, first, table);
  });
  return table;
}

// (mean d^p)^{1/p} with a delta-method standard error.
LevelEstimate pth_moment_error(double h, std::span<const double> dp, std::span<const std::uint8_t> skip,
                               double p) {
  const MeanEstimate m = estimate_mean(dp, skip);
  LevelEstimate est;
  est.h = h;
  est.error = std::pow(m.mean, 1.0 / p);
  est.std_error = m.mean > 0.0 ? m.std_error * est.error / (p * m.mean) : 0.0;
  return est;
}

void finish_report(RateReport& rep, bool expect_monotone) {
  auto& diag = rep.diagnostics;
  for (auto& lvl : rep.levels) {
    lvl.usable = lvl.error > 0.0 && above_noise_floor(lvl.error, lvl.std_error);
    if (lvl.error > 0.0 && lvl.std_error > kNoiseFloorRelative * lvl.error) diag.noise_floor = true;
  }
  if (expect_monotone) {
    // Levels are ordered from coarse to fine.
    for (std::size_t i = 1; i < rep.levels.size(); ++i)
      if (!(rep.levels[i].error < rep.levels[i - 1].error)) {
        diag.monotone = false;
        std::ostringstream os;
        os << "error does not decrease from " << rep.abscissa << "=" << rep.levels[i - 1].h << " to "
           << rep.levels[i].h;
        diag.notes.push_back(os.str());
      }
  }
  try {
    rep.fit = fit_rate(rep.levels);
  } catch (const InsufficientDataError& e) {
    rep.fit.reset();
    diag.notes.emplace_back(e.what());
  }
}

struct DtChoice {
  double base_dt;
  std::vector<std::size_t> ratios;  // per tested level, then reference
  std::optional<double> probe_ratio;
  std::vector<std::string> notes;
};

// RMS change of the finest coupled level difference when dt is halved,
// relative to the difference itself.
double probe_ratio(const StudyConfig& cfg, const std::vector<std::shared_ptr<const FemSpace>>& all,
                   double dt, int workers) {
  std::vector<std::shared_ptr<const FemSpace>> spaces{all[all.size() - 2], all.back()};
  EnsembleSpec spec;
  spec.spaces = spaces;
  spec.levels = {{0, 2}, {1, 2}, {0, 1}, {1, 1}};
  spec.drift = cfg.drift;
  spec.scheme = cfg.scheme;
  spec.noise = cfg.noise;
  spec.base_dt = 0.5 * dt;
  spec.base_steps = steps_for(cfg.final_time, spec.base_dt);
  spec.initial = initial_states(cfg, spaces, false);
  spec.seed = cfg.seed;
  const Ensemble ens(spec);
  const CrossMeshNorm norm(*spaces[1], *spaces[0]);
  const std::size_t n = std::max<std::size_t>(cfg.probe_samples, 2);
  const SampleTable t = run_table(ens, n, 2, workers, [&](const auto& ch, std::size_t first, SampleTable& tab) {
    // ||(r_dt - r_half) - (h_dt - h_half)|| and ||r_half - h_half|| on the union mesh.
    const Eigen::VectorXd change = norm.distances(ch.finals[1] - ch.finals[3], ch.finals[0] - ch.finals[2]);
    const Eigen::VectorXd level = norm.distances(ch.finals[3], ch.finals[2]);
    for (Eigen::Index c = 0; c < change.size(); ++c) {
      tab.values[0][first + c] = change(c) * change(c);
      tab.values[1][first + c] = level(c) * level(c);
    }
  });
  const double num = estimate_mean(t.values[0], t.aborted).mean;
  const double den = estimate_mean(t.values[1], t.aborted).mean;
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

DtChoice choose_dt(const StudyConfig& cfg, const std::vector<double>& h,
                   const std::vector<std::shared_ptr<const FemSpace>>& spaces, int workers) {
  DtChoice out;
  switch (cfg.dt_policy) {
    case DtPolicy::kFixed:
      out.base_dt = cfg.dt;
      out.ratios.assign(h.size() + 1, 1);
      break;
    case DtPolicy::kCoupled: {
      std::vector<double> dts;
      for (double hi : h) dts.push_back(coupled_dt(cfg, hi));
      dts.push_back(coupled_dt(cfg, cfg.reference_h()));
      out.base_dt = *std::min_element(dts.begin(), dts.end());
      for (double d : dts) out.ratios.push_back(ratio_of(d, out.base_dt));
      break;
    }
    case DtPolicy::kProbe: {
      double dt = cfg.dt;
      for (std::size_t k = 0;; ++k) {
        const double r = probe_ratio(cfg, spaces, dt, workers);
        out.probe_ratio = r;
        if (r <= cfg.probe_tolerance) break;
        if (k == cfg.probe_halvings) {
          std::ostringstream os;
          os << "dt probe did not settle: ratio " << r << " at dt=" << dt;
          out.notes.push_back(os.str());
          break;
        }
        dt *= 0.5;
      }
      out.base_dt = dt;
      out.ratios.assign(h.size() + 1, 1);
      break;
    }
  }
  steps_for(cfg.final_time, out.base_dt);
  return out;
}

EnsembleSpec coupled_spec(const StudyConfig& cfg, const std::vector<std::shared_ptr<const FemSpace>>& spaces,
                          const DtChoice& dt) {
  EnsembleSpec spec;
  spec.spaces = spaces;
  for (std::size_t s = 0; s < spaces.size(); ++s) spec.levels.push_back({s, dt.ratios[s]});
  spec.drift = cfg.drift;
  spec.scheme = cfg.scheme;
  spec.noise = cfg.noise;
  spec.base_dt = dt.base_dt;
  spec.base_steps = steps_for(cfg.final_time, dt.base_dt);
  spec.initial = initial_states(cfg, spaces, false);
  spec.seed = cfg.seed;
  return spec;
}

void check_samples(const StudyConfig& cfg) {
  if (cfg.samples < 2) throw ArgumentError("at least two samples are required");
  if (!(cfg.p >= 1.0)) throw ArgumentError("moment order p must be at least 1");
}

void apply_choice(Diagnostics& diag, const DtChoice& dt) {
  diag.dt_used = dt.base_dt;
  diag.temporal_probe_ratio = dt.probe_ratio;
  diag.notes.insert(diag.notes.end(), dt.notes.begin(), dt.notes.end());
}

}  // namespace

// ------------------------------------------------------------- functionals

bool TestFunctional::is_shipped(const std::string& id) {
  return id == "exp_neg_norm_sq" || id == "cos_inner" || id == "inv_one_plus_norm_sq" || id == "constant";
}

FunctionalEvaluator::FunctionalEvaluator(const TestFunctional& phi, const FemSpace& space)
    : phi_(phi), space_(&space) {
  if (!TestFunctional::is_shipped(phi.id)) throw ArgumentError("unknown test functional '" + phi.id + "'");
  if (phi.id == "cos_inner") {
    if (phi.direction.empty()) throw ArgumentError("cos_inner needs a direction");
    const auto& x = space.mesh().nodes();
    const double len = space.mesh().length();
    direction_load_ = Eigen::VectorXd::Zero(space.dim());
    for (int i = 0; i < space.dim(); ++i)
      for (std::size_t k = 0; k < phi.direction.size(); ++k)
        if (phi.direction[k] != 0.0)
          direction_load_(i) +=
              phi.direction[k] * hat_sine_integral(x[i], x[i + 1], x[i + 2], len, static_cast<int>(k) + 1);
  }
}

double FunctionalEvaluator::operator()(const Eigen::Ref<const Eigen::VectorXd>& nodal) const {
  if (phi_.id == "constant") return phi_.value;
  if (phi_.id == "cos_inner") return std::cos(direction_load_.dot(nodal));
  const double n2 = nodal.dot(space_->mass() * nodal);
  if (phi_.id == "exp_neg_norm_sq") return std::exp(-n2);
  return 1.0 / (1.0 + n2);
}

// ------------------------------------------------------------------ config

double StudyConfig::reference_h() const {
  if (h_ref > 0.0) return h_ref;
  if (h.empty()) throw ArgumentError("study needs at least one mesh level");
  return *std::min_element(h.begin(), h.end()) / 4.0;
}

Mesh1D make_mesh(const StudyConfig& cfg, double h) {
  if (!(h > 0.0)) throw MeshError("mesh size must be positive");
  const double n = cfg.length / h;
  const double r = std::round(n);
  if (r < 2.0 || std::abs(n - r) > 1e-9 * r) throw MeshError("mesh size must divide the interval into >= 2 elements");
  const int elements = static_cast<int>(r);
  if (cfg.mesh.jittered)
    return Mesh1D::jittered(cfg.length, elements, cfg.mesh.jitter,
                            cfg.mesh.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(elements)));
  return Mesh1D::uniform(cfg.length, elements);
}

Eigen::VectorXd initial_nodal(const StudyConfig& cfg, const FemSpace& space) {
  if (cfg.initial_modes.empty()) return Eigen::VectorXd::Zero(space.dim());
  const SpectralBasis basis(cfg.length, static_cast<int>(cfg.initial_modes.size()));
  // sin(k pi x / L) = sqrt(L/2) e_k.
  SpectralCoeffs x0(std::sqrt(0.5 * cfg.length) *
                    Eigen::Map<const Eigen::VectorXd>(cfg.initial_modes.data(),
                                                      static_cast<Eigen::Index>(cfg.initial_modes.size())));
  return l2_project(space, basis, x0).nodal;
}

MeanEstimate estimate_mean(std::span<const double> values, std::span<const std::uint8_t> skip) {
  const bool use_skip = !skip.empty();
  if (use_skip && skip.size() != values.size()) throw ArgumentError("skip mask has the wrong length");
  CompensatedSum sum;
  MeanEstimate out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (use_skip && skip[i]) continue;
    sum.add(values[i]);
    ++out.count;
  }
  if (out.count == 0) return out;
  out.mean = sum.value() / static_cast<double>(out.count);
  if (out.count < 2) return out;
  CompensatedSum sq;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (use_skip && skip[i]) continue;
    const double d = values[i] - out.mean;
    sq.add(d * d);
  }
  const double var = sq.value() / static_cast<double>(out.count - 1);
  out.std_error = std::sqrt(var / static_cast<double>(out.count));
  return out;
}

// ----------------------------------------------------------------- studies

RateReport run_strong_study(const StudyConfig& cfg, int workers) {
  if (cfg.kind != StudyKind::kStrong) throw ArgumentError("run_strong_study needs a strong study");
  check_samples(cfg);
  const auto h = sorted_levels(cfg);
  const auto spaces = build_spaces(cfg, h, true);
  const DtChoice dt = choose_dt(cfg, h, spaces, workers);
  const Ensemble ens(coupled_spec(cfg, spaces, dt));

  const std::size_t nl = h.size();
  std::vector<CrossMeshNorm> norms;
  for (std::size_t l = 0; l < nl; ++l) norms.emplace_back(*spaces.back(), *spaces[l]);
  const double p = cfg.p;
  const SampleTable t = run_table(ens, cfg.samples, nl, workers, [&](const auto& ch, std::size_t first, SampleTable& tab) {
    for (std::size_t l = 0; l < nl; ++l) {
      const Eigen::VectorXd d = norms[l].distances(ch.finals[nl], ch.finals[l]);
      for (Eigen::Index c = 0; c < d.size(); ++c) tab.values[l][first + c] = std::pow(d(c), p);
    }
  });

  RateReport rep;
  rep.name = cfg.name;
  for (std::size_t l = 0; l < nl; ++l) rep.levels.push_back(pth_moment_error(h[l], t.values[l], t.aborted, p));
  rep.diagnostics.aborted = t.aborted_count();
  apply_choice(rep.diagnostics, dt);
  finish_report(rep, true);
  return rep;
}

RateReport run_weak_study(const StudyConfig& cfg, int workers) {
  if (cfg.kind != StudyKind::kWeak) throw ArgumentError("run_weak_study needs a weak study");
  check_samples(cfg);
  const auto h = sorted_levels(cfg);
  const auto spaces = build_spaces(cfg, h, true);
  const DtChoice dt = choose_dt(cfg, h, spaces, workers);
  const Ensemble ens(coupled_spec(cfg, spaces, dt));

  const std::size_t nl = h.size();
  std::vector<FunctionalEvaluator> phi;
  for (const auto& s : spaces) phi.emplace_back(cfg.functional, *s);
  const SampleTable t = run_table(ens, cfg.samples, nl, workers, [&](const auto& ch, std::size_t first, SampleTable& tab) {
    for (Eigen::Index c = 0; c < ch.finals[nl].cols(); ++c) {
      const double ref = phi[nl](ch.finals[nl].col(c));
      for (std::size_t l = 0; l < nl; ++l) tab.values[l][first + c] = ref - phi[l](ch.finals[l].col(c));
    }
  });

  RateReport rep;
  rep.name = cfg.name;
  for (std::size_t l = 0; l < nl; ++l) {
    const MeanEstimate m = estimate_mean(t.values[l], t.aborted);
    rep.levels.push_back({h[l], std::abs(m.mean), m.std_error, true});
    rep.signed_errors.push_back(m.mean);
  }
  rep.diagnostics.aborted = t.aborted_count();
  apply_choice(rep.diagnostics, dt);
  finish_report(rep, false);
  return rep;
}

MomentReport run_moment_study(const StudyConfig& cfg, int workers) {
  if (cfg.kind != StudyKind::kMoments) throw ArgumentError("run_moment_study needs a moment study");
  check_samples(cfg);
  const auto h = sorted_levels(cfg);
  const auto spaces = build_spaces(cfg, h, false);
  const std::size_t nl = h.size();
  DtChoice dt;
  dt.base_dt = cfg.dt;
  dt.ratios.assign(nl, 1);
  if (cfg.dt_policy == DtPolicy::kCoupled) {
    std::vector<double> dts;
    for (double hi : h) dts.push_back(coupled_dt(cfg, hi));
    dt.base_dt = *std::min_element(dts.begin(), dts.end());
    dt.ratios.clear();
    for (double d : dts) dt.ratios.push_back(ratio_of(d, dt.base_dt));
  }

  // Stochastic convolution: zero drift from zero initial data.
  EnsembleSpec zspec = coupled_spec(cfg, spaces, dt);
  zspec.drift = PolynomialDrift::zero();
  zspec.initial = initial_states(cfg, spaces, true);
  const Ensemble zens(zspec);
  const SampleTable zt = run_table(zens, cfg.samples, 2 * nl, workers, [&](const auto& ch, std::size_t first, SampleTable& tab) {
    for (std::size_t l = 0; l < nl; ++l) {
      const Eigen::MatrixXd& z = ch.finals[l];
      const Eigen::MatrixXd mz = spaces[l]->mass() * z;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double s = z.col(c).cwiseAbs().maxCoeff();
        tab.values[l][first + c] = s * s;
        tab.values[nl + l][first + c] = z.col(c).dot(mz.col(c));
      }
    }
  });

  // Full solution, sup over checkpoints of E ||X(t)||_inf^2.
  EnsembleSpec xspec = coupled_spec(cfg, spaces, dt);
  const std::size_t nck = std::max<std::size_t>(cfg.checkpoints, 1);
  std::size_t every = xspec.base_steps / nck;
  const std::size_t lcm_ratio = std::accumulate(dt.ratios.begin(), dt.ratios.end(), std::size_t{1},
                                                [](std::size_t a, std::size_t b) { return std::lcm(a, b); });
  every = std::max<std::size_t>(lcm_ratio, every / lcm_ratio * lcm_ratio);
  while (xspec.base_steps % every != 0) every += lcm_ratio;
  xspec.checkpoint_every = every;
  const Ensemble xens(xspec);
  const std::size_t rows = xens.checkpoints();
  const SampleTable xt = run_table(xens, cfg.samples, nl * rows, workers, [&](const auto& ch, std::size_t first, SampleTable& tab) {
    for (std::size_t l = 0; l < nl; ++l)
      for (std::size_t r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < ch.sup_sq[l].cols(); ++c)
          tab.values[l * rows + r][first + c] = ch.sup_sq[l](static_cast<Eigen::Index>(r), c);
  });

  MomentReport rep;
  rep.name = cfg.name;
  rep.diagnostics.dt_used = dt.base_dt;
  rep.diagnostics.aborted = zt.aborted_count() + xt.aborted_count();
  for (std::size_t l = 0; l < nl; ++l) {
    MomentLevel m;
    m.h = h[l];
    const MeanEstimate zs = estimate_mean(zt.values[l], zt.aborted);
    const MeanEstimate zl = estimate_mean(zt.values[nl + l], zt.aborted);
    m.z_sup_sq = zs.mean;
    m.z_sup_sq_se = zs.std_error;
    m.z_l2_sq = zl.mean;
    m.z_l2_sq_se = zl.std_error;
    for (std::size_t r = 0; r < rows; ++r) {
      const MeanEstimate xs = estimate_mean(xt.values[l * rows + r], xt.aborted);
      if (r == 0 || xs.mean > m.x_sup_sq) {
        m.x_sup_sq = xs.mean;
        m.x_sup_sq_se = xs.std_error;
      }
    }
    rep.levels.push_back(m);
  }

  const auto growth = [&](const char* name, auto value, auto se) {
    RateReport g;
    g.name = cfg.name + "." + name;
    g.abscissa = "1+log(1/h)";
    for (const auto& m : rep.levels) g.levels.push_back({1.0 + std::log(1.0 / m.h), value(m), se(m), true});
    // Growth fits use every level: a flat moment is the expected outcome, so
    // the per-level bias floor of the rate studies does not apply.
    for (auto& lvl : g.levels) {
      lvl.usable = lvl.error > 0.0;
      if (lvl.error > 0.0 && lvl.std_error > kNoiseFloorRelative * lvl.error) g.diagnostics.noise_floor = true;
    }
    try {
      g.fit = fit_rate(g.levels);
    } catch (const InsufficientDataError& e) {
      g.diagnostics.notes.emplace_back(e.what());
    }
    g.diagnostics.dt_used = dt.base_dt;
    return g;
  };
  rep.z_sup = growth("z_sup_sq", [](const MomentLevel& m) { return m.z_sup_sq; },
                     [](const MomentLevel& m) { return m.z_sup_sq_se; });
  rep.z_l2 = growth("z_l2_sq", [](const MomentLevel& m) { return m.z_l2_sq; },
                    [](const MomentLevel& m) { return m.z_l2_sq_se; });
  rep.x_sup = growth("x_sup_sq", [](const MomentLevel& m) { return m.x_sup_sq; },
                     [](const MomentLevel& m) { return m.x_sup_sq_se; });
  return rep;
}

std::vector<RateReport> run_operator_study(const StudyConfig& cfg) {
  if (cfg.kind != StudyKind::kOperators) throw ArgumentError("run_operator_study needs an operator study");
  if (cfg.operators.empty()) throw ArgumentError("operator study needs at least one case");
  const auto h = sorted_levels(cfg);
  const auto spaces = build_spaces(cfg, h, false);
  int modes = cfg.spectral_modes;
  if (modes == 0) modes = std::max(64, 4 * spaces.back()->dim());
  const SpectralBasis basis(cfg.length, modes);

  std::vector<RateReport> out;
  for (const auto& op : cfg.operators) {
    RateReport rep;
    std::ostringstream name;
    const char* tag = op.which == ErrorOperator::kL2Projection     ? "l2"
                      : op.which == ErrorOperator::kRitzProjection ? "ritz"
                                                                   : "semigroup";
    name << cfg.name << "." << tag << "_s" << op.s << "_r" << op.r;
    rep.name = name.str();
    for (std::size_t l = 0; l < h.size(); ++l)
      rep.levels.push_back({h[l], operator_error_norm(*spaces[l], basis, op.s, op.r, op.which, op.t), 0.0, true});
    // A flat norm (r = s) is not expected to decrease.
    finish_report(rep, op.r > op.s || op.which == ErrorOperator::kSemigroup);
    out.push_back(std::move(rep));
  }
  return out;
}

RateReport run_splitting_dt_study(const StudyConfig& cfg, int workers) {
  if (cfg.kind != StudyKind::kSplittingDt) throw ArgumentError("run_splitting_dt_study needs a splitting_dt study");
  check_samples(cfg);
  if (cfg.h.size() != 1) throw ArgumentError("splitting_dt study uses exactly one mesh level");
  if (cfg.dt_levels.empty() || !(cfg.dt_ref > 0.0)) throw ArgumentError("splitting_dt study needs dt levels and dt_ref");
  std::vector<double> dts = cfg.dt_levels;
  std::sort(dts.begin(), dts.end(), std::greater<>());
  if (!(dts.back() > cfg.dt_ref)) throw ArgumentError("dt_ref must be finer than every dt level");

  const auto space = std::make_shared<const FemSpace>(make_mesh(cfg, cfg.h[0]));
  EnsembleSpec spec;
  spec.spaces = {space};
  for (double d : dts) spec.levels.push_back({0, ratio_of(d, cfg.dt_ref)});
  spec.levels.push_back({0, 1});
  spec.drift = cfg.drift;
  spec.scheme = cfg.scheme;
  spec.noise = cfg.noise;
  spec.base_dt = cfg.dt_ref;
  spec.base_steps = steps_for(cfg.final_time, cfg.dt_ref);
  spec.initial = {initial_nodal(cfg, *space)};
  spec.seed = cfg.seed;
  const Ensemble ens(spec);

  const std::size_t nl = dts.size();
  const double p = cfg.p;
  const SampleTable t = run_table(ens, cfg.samples, nl, workers, [&](const auto& ch, std::size_t first, SampleTable& tab) {
    for (std::size_t l = 0; l < nl; ++l) {
      const Eigen::MatrixXd d = ch.finals[nl] - ch.finals[l];
      const Eigen::MatrixXd md = space->mass() * d;
      for (Eigen::Index c = 0; c < d.cols(); ++c)
        tab.values[l][first + c] = std::pow(std::sqrt(std::max(0.0, d.col(c).dot(md.col(c)))), p);
    }
  });

  RateReport rep;
  rep.name = cfg.name;
  rep.abscissa = "dt";
  for (std::size_t l = 0; l < nl; ++l) rep.levels.push_back(pth_moment_error(dts[l], t.values[l], t.aborted, p));
  rep.diagnostics.aborted = t.aborted_count();
  rep.diagnostics.dt_used = cfg.dt_ref;
  finish_report(rep, true);
  return rep;
}

// ---------------------------------------------------------- linear oracle

double linear_cos_expectation(const StudyConfig& cfg, double h) {
  if (!cfg.drift.is_zero()) throw ArgumentError("closed-form expectation needs zero drift");
  if (cfg.functional.id != "cos_inner") throw ArgumentError("closed-form expectation needs cos_inner");
  if (cfg.scheme == Scheme::kSemiImplicit) throw ArgumentError("closed-form expectation needs an exponential scheme");
  const FemSpace space(make_mesh(cfg, h));
  const FunctionalEvaluator phi(cfg.functional, space);
  // a_i = <e_i^h, v>, the load of v in the discrete eigenbasis.
  const auto& x = space.mesh().nodes();
  Eigen::VectorXd load = Eigen::VectorXd::Zero(space.dim());
  for (int i = 0; i < space.dim(); ++i)
    for (std::size_t k = 0; k < cfg.functional.direction.size(); ++k)
      load(i) += cfg.functional.direction[k] *
                 hat_sine_integral(x[i], x[i + 1], x[i + 2], cfg.length, static_cast<int>(k) + 1);
  const Eigen::VectorXd a = space.eig_vectors().transpose() * load;
  const Eigen::ArrayXd lam = space.eig_values().array();
  const Eigen::VectorXd mean = (-lam * cfg.final_time).exp().matrix().cwiseProduct(
      space.to_modal() * initial_nodal(cfg, space));
  const double mu = mean.dot(a);

  double var = 0.0;
  if (!cfg.noise.is_zero()) {
    const SpectralBasis basis(cfg.length, cfg.noise.k_trunc);
    const ModeCoupling coupling = ModeCoupling::build(space, basis);
    const Eigen::VectorXd q = cfg.noise.eigenvalues();
    const Eigen::MatrixXd eq = coupling.modal * q.cwiseSqrt().asDiagonal();
    const Eigen::MatrixXd qe = eq * eq.transpose();
    const auto n = space.dim();
    Eigen::MatrixXd cov(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double s = lam(i) + lam(j);
        cov(i, j) = qe(i, j) * (-std::expm1(-s * cfg.final_time)) / s;
      }
    var = a.dot(cov * a);
  }
  return std::cos(mu) * std::exp(-0.5 * var);
}

}  // namespace spdefem
