#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "spdefem/config.hpp"
#include "spdefem/errors.hpp"
#include "spdefem/experiments.hpp"
#include "spdefem/report.hpp"
#include "spdefem/selftest.hpp"

namespace fs = std::filesystem;
using namespace spdefem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::uint64_t sample = 0;
  std::size_t every = 1;
};

fs::path output_dir(const Options& opt) {
  fs::path dir = "out";
  if (const char* env = std::getenv("SPDEFEM_OUT"); env && *env) dir = env;
  if (!opt.out.empty()) dir = opt.out;
  fs::create_directories(dir);
  return dir;
}

int worker_count(const Options& opt) {
  if (opt.workers > 0) return opt.workers;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

// Writes CSV + JSON; returns false for a fit that failed on the noise floor.
bool emit(const fs::path& dir, const RateReport& rep, const Provenance& prov) {
  std::ostringstream csv;
  write_csv(csv, rep, prov);
  write_file(dir / (rep.name + ".csv"), csv.str());
  write_file(dir / (rep.name + ".json"), summary_json(rep, prov).dump(2) + "\n");
  std::cout << rep.name << ": ";
  if (rep.fit)
    std::cout << "slope " << rep.fit->slope << " [" << rep.fit->ci_lo << ", " << rep.fit->ci_hi << "] from "
              << rep.fit->used << " levels";
  else
    std::cout << "no fit";
  if (rep.diagnostics.noise_floor) std::cout << " (noise floor)";
  if (!rep.diagnostics.monotone) std::cout << " (non-monotone)";
  std::cout << "\n";
  bool any_error = false;
  for (const auto& l : rep.levels) any_error = any_error || l.error > 0.0;
  return rep.fit.has_value() || !any_error;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_study(const Options& opt) {
  StudyConfig cfg = load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  const fs::path dir = output_dir(opt);
  const int workers = worker_count(opt);
  Provenance prov{config_hash(cfg), cfg.seed, SPDEFEM_VERSION, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  switch (cfg.kind) {
    case StudyKind::kStrong: {
      const RateReport rep = run_strong_study(cfg, workers);
      prov.runtime_seconds = seconds_since(t0);
      ok = emit(dir, rep, prov);
      break;
    }
    case StudyKind::kWeak: {
      const RateReport rep = run_weak_study(cfg, workers);
      prov.runtime_seconds = seconds_since(t0);
      ok = emit(dir, rep, prov);
      break;
    }
    case StudyKind::kSplittingDt: {
      const RateReport rep = run_splitting_dt_study(cfg, workers);
      prov.runtime_seconds = seconds_since(t0);
      ok = emit(dir, rep, prov);
      break;
    }
    case StudyKind::kOperators: {
      const auto reps = run_operator_study(cfg);
      prov.runtime_seconds = seconds_since(t0);
      for (const auto& rep : reps) ok = emit(dir, rep, prov) && ok;
      break;
    }
    case StudyKind::kMoments: {
      const MomentReport rep = run_moment_study(cfg, workers);
      prov.runtime_seconds = seconds_since(t0);
      for (const RateReport* g : {&rep.z_sup, &rep.z_l2, &rep.x_sup}) ok = emit(dir, *g, prov) && ok;
      write_file(dir / (rep.name + ".json"), summary_json(rep, prov).dump(2) + "\n");
      break;
    }
  }
  return ok ? 0 : 2;
}

int run_trajectory(const Options& opt) {
  StudyConfig cfg = load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.every == 0) throw ArgumentError("--every must be positive");
  const fs::path dir = output_dir(opt);
  const auto t0 = std::chrono::steady_clock::now();

  const double h = *std::min_element(cfg.h.begin(), cfg.h.end());
  const FemSpace space(make_mesh(cfg, h));
  SchemeConfig sc;
  sc.scheme = cfg.scheme;
  sc.dt = cfg.dt;
  sc.n_steps = static_cast<std::size_t>(std::llround(cfg.final_time / cfg.dt));
  Trajectory traj;
  const StreamKey stream{cfg.seed, opt.sample, 0, StreamPurpose::kConvolution};
  integrate(space, cfg.drift, cfg.noise, sc, space.field(initial_nodal(cfg, space)), stream, &traj);

  Provenance prov{config_hash(cfg), cfg.seed, SPDEFEM_VERSION, seconds_since(t0)};
  std::ostringstream csv;
  csv << "# config_hash=" << prov.config_hash << ",seed=" << prov.seed << ",version=" << prov.version
      << ",sample=" << opt.sample << "\n";
  csv << "step,t";
  for (double x : space.mesh().nodes()) csv << ',' << format_double(x);
  csv << "\n";
  for (std::size_t n = 0; n < traj.states.size(); n += opt.every) {
    csv << n << ',' << format_double(static_cast<double>(n) * traj.dt) << ",0";
    for (Eigen::Index i = 0; i < traj.states[n].size(); ++i) csv << ',' << format_double(traj.states[n](i));
    csv << ",0\n";
  }
  const std::string stem = cfg.name + ".trajectory";
  write_file(dir / (stem + ".csv"), csv.str());
  nlohmann::json j{{"name", cfg.name},     {"seed", prov.seed},
                   {"config_hash", prov.config_hash}, {"version", prov.version},
                   {"runtime_seconds", prov.runtime_seconds}, {"h", h},
                   {"dt", cfg.dt},         {"steps", sc.n_steps},
                   {"sample", opt.sample}, {"every", opt.every}};
  write_file(dir / (stem + ".json"), j.dump(2) + "\n");
  std::cout << "wrote " << (dir / (stem + ".csv")).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite element solver and convergence studies for stochastic reaction-diffusion equations"};
  app.set_version_flag("--version", SPDEFEM_VERSION);
  app.require_subcommand(1);
  Options opt;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("config", opt.config, "Study configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the configured seed");
    sub->add_option("--workers", opt.workers, "Worker threads (default: hardware concurrency)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--out", opt.out, "Output directory (default: $SPDEFEM_OUT or ./out)");
  };
  auto* study = app.add_subcommand("study", "Run a convergence, moment or operator study");
  common(study);
  auto* traj = app.add_subcommand("trajectory", "Write one sample path at the finest configured mesh");
  common(traj);
  traj->add_option("--sample", opt.sample, "Sample index of the path");
  traj->add_option("--every", opt.every, "Write every n-th step");
  auto* self = app.add_subcommand("selftest", "Run the built-in known-answer and invariant checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (study->parsed()) return run_study(opt);
    if (traj->parsed()) return run_trajectory(opt);
    if (self->parsed()) return run_selftest(std::cout) ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
