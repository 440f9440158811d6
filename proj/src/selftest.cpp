#include "spdefem/selftest.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "spdefem/config.hpp"
#include "spdefem/errors.hpp"
#include "spdefem/experiments.hpp"
#include "spdefem/report.hpp"
#include "spdefem/rng.hpp"

namespace spdefem {

namespace {

struct Check {
  const char* name;
  std::function<std::string()> run;  // empty string on success
};

std::string expect_close(const char* what, double got, double want, double tol) {
  if (std::abs(got - want) <= tol) return {};
  std::ostringstream os;
  os.precision(17);
  os << what << ": got " << got << ", want " << want << " (tol " << tol << ")";
  return os.str();
}

std::string csv_of(const RateReport& rep) {
  std::ostringstream os;
  write_csv(os, rep, Provenance{"0", 0, SPDEFEM_VERSION, 0.0});
  return os.str();
}

std::vector<Check> checks() {
  using std::numbers::pi;
  return {
      {"philox known answer",
       [] {
         const auto r = philox4x32({0, 0, 0, 0}, {0, 0});
         const bool ok = r[0] == 0x6627e8d5u && r[1] == 0xe169c58du && r[2] == 0xbc57ac4cu && r[3] == 0x9b00dbd8u;
         return ok ? std::string{} : std::string("philox4x32-10 output mismatch");
       }},
      {"single interior node eigenvalue",
       [] {
         const FemSpace s(Mesh1D::uniform(1.0, 2));
         return expect_close("lambda_1^h", s.eig_values()(0), 12.0, 1e-12);
       }},
      {"discrete eigenvalues match closed form",
       [] {
         const int n = 32;
         const FemSpace s(Mesh1D::uniform(1.0, n));
         const double h = 1.0 / n;
         for (int i = 1; i < n; ++i) {
           const double c = std::cos(i * pi * h);
           const double want = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
           if (auto e = expect_close("lambda_i^h", s.eig_values()(i - 1), want, 1e-10 * want); !e.empty()) return e;
         }
         return std::string{};
       }},
      {"L2 projection is a contraction",
       [] {
         const FemSpace s(Mesh1D::uniform(1.0, 8));
         const SpectralBasis b(1.0, 64);
         const double n = operator_error_norm(s, b, 0.0, 0.0, ErrorOperator::kL2Projection);
         return n <= 1.0 + 1e-12 ? std::string{} : "||I - P^h|| = " + std::to_string(n);
       }},
      {"cubic flow map matches RK4",
       [] {
         const PolynomialDrift f = PolynomialDrift::allen_cahn();
         for (double x : {-3.0, -1.0, -0.2, 0.0, 0.5, 1.0, 4.0})
           if (auto e = expect_close("Phi_t", flow_map(f, 0.3, x), flow_map_rk4(f, 0.3, x, 4000), 1e-9); !e.empty())
             return e;
         return std::string{};
       }},
      {"exact power law fit",
       [] {
         std::vector<LevelEstimate> lv;
         for (double h : {0.5, 0.25, 0.125, 0.0625}) lv.push_back({h, 3.0 * h * h, 0.0, true});
         return expect_close("slope", fit_rate(lv).slope, 2.0, 1e-12);
       }},
      {"drift admissibility",
       [] {
         try {
           parse_config(std::string(R"({"kind":"strong","mesh":{"h":[0.25,0.125,0.0625]},"drift":{"coeffs":[0,1,0,1]}})"));
         } catch (const ConfigError& e) {
           if (std::string(e.what()).find("one-sided Lipschitz violated") != std::string::npos) return std::string{};
           return std::string("unexpected message: ") + e.what();
         }
         return std::string("positive cubic coefficient accepted");
       }},
      {"deterministic strong error of the heat flow",
       [] {
         // f = 0, Q = 0, x0 = e_1: the study reduces to one deterministic path.
         StudyConfig cfg;
         cfg.kind = StudyKind::kStrong;
         cfg.h = {0.25, 0.125, 0.0625};
         cfg.h_ref = 1.0 / 64;
         cfg.drift = PolynomialDrift::zero();
         cfg.noise = CovarianceSpec::none();
         cfg.initial_modes = {1.0};
         cfg.samples = 16;
         cfg.final_time = 0.125;
         cfg.dt = 1.0 / 64;
         const RateReport rep = run_strong_study(cfg, 1);
         for (const auto& l : rep.levels)
           if (l.std_error > 1e-12 * l.error) return std::string("nonzero spread without noise");
         if (!rep.fit) return std::string("no fit");
         return expect_close("slope", rep.fit->slope, 2.0, 0.15);
       }},
      {"worker count does not change results",
       [] {
         StudyConfig cfg;
         cfg.kind = StudyKind::kStrong;
         cfg.h = {0.25, 0.125, 0.0625};
         cfg.samples = 40;
         cfg.final_time = 0.25;
         cfg.dt = 1.0 / 32;
         const std::string a = csv_of(run_strong_study(cfg, 1));
         const std::string b = csv_of(run_strong_study(cfg, 3));
         return a == b ? std::string{} : std::string("CSV differs between 1 and 3 workers");
       }},
      {"constant functional has zero weak error",
       [] {
         StudyConfig cfg;
         cfg.kind = StudyKind::kWeak;
         cfg.h = {0.25, 0.125, 0.0625};
         cfg.samples = 32;
         cfg.final_time = 0.25;
         cfg.dt = 1.0 / 32;
         cfg.functional.id = "constant";
         const RateReport rep = run_weak_study(cfg, 1);
         for (const auto& l : rep.levels)
           if (l.error != 0.0) return std::string("nonzero weak error");
         return std::string{};
       }},
  };
}

}  // namespace

bool run_selftest(std::ostream& out) {
  bool all = true;
  for (const auto& c : checks()) {
    std::string err;
    try {
      err = c.run();
    } catch (const std::exception& e) {
      err = std::string("exception: ") + e.what();
    }
    if (err.empty()) {
      out << "PASS " << c.name << "\n";
    } else {
      out << "FAIL " << c.name << ": " << err << "\n";
      all = false;
    }
  }
  return all;
}

}  // namespace spdefem
