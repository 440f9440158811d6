#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "spdefem/dynamics.hpp"
#include "spdefem/errors.hpp"
#include "spdefem/fit.hpp"

using namespace spdefem;

namespace {

std::string message_of(const std::vector<double>& coeffs) {
  try {
    PolynomialDrift d(coeffs);
  } catch (const ArgumentError& e) {
    return e.what();
  }
  return "";
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& e) {
  std::vector<LevelEstimate> lv;
  for (std::size_t i = 0; i < x.size(); ++i) lv.push_back({x[i], e[i], 0.0, true});
  return fit_rate(lv).slope;
}

FemField smooth_state(const FemSpace& s) {
  return s.interpolate([](double x) { return 1.5 * std::sin(M_PI * x) + 0.5 * std::sin(2 * M_PI * x); });
}

}  // namespace

TEST_CASE("drift admissibility") {
  CHECK(message_of({0.0, 1.0, 0.0, -1.0}).empty());
  CHECK(message_of({0.3, -2.0}).empty());
  CHECK(message_of({0.0, 1.0, 0.0, 1.0}).find("one-sided Lipschitz") != std::string::npos);
  CHECK(message_of({0.0, 0.0, 1.0}).find("one-sided Lipschitz") != std::string::npos);
  CHECK(message_of({0.0, 0.0, 0.0, 0.0, -1.0}).find("one-sided Lipschitz") != std::string::npos);
  CHECK(message_of({0.0, 0.0, 0.0, 0.0, 0.0, -1.0}).find("K=5") != std::string::npos);
  CHECK(message_of({1.0, std::nan("")}).find("finite") != std::string::npos);

  // Trailing zeros are dropped.
  const PolynomialDrift d({0.0, 1.0, 0.0, -1.0, 0.0, 0.0});
  CHECK(d.degree() == 3);
  CHECK(d.is_odd_cubic());
  CHECK(PolynomialDrift::zero().is_zero());
  CHECK_FALSE(PolynomialDrift({0.1, 1.0, 0.0, -1.0}).is_odd_cubic());

  CHECK(PolynomialDrift::allen_cahn().one_sided_constant() == doctest::Approx(1.0));
  // f = x + 0.5 x^2 - x^3: sup f' = 1 + 1/12 at x = 1/6.
  CHECK(PolynomialDrift({0.0, 1.0, 0.5, -1.0}).one_sided_constant() == doctest::Approx(13.0 / 12.0));
  CHECK(PolynomialDrift({2.0, -3.0}).one_sided_constant() == doctest::Approx(-3.0));

  const auto ac = PolynomialDrift::allen_cahn();
  CHECK(ac.value(2.0) == doctest::Approx(-6.0));
  CHECK(ac.derivative(2.0) == doctest::Approx(-11.0));
  CHECK(ac.second_derivative(2.0) == doctest::Approx(-12.0));
}

TEST_CASE("Allen-Cahn flow in closed form") {
  const auto ac = PolynomialDrift::allen_cahn();
  const double e = std::exp(1.0);
  CHECK(flow_map(ac, 1.0, 2.0) == doctest::Approx(2 * e / std::sqrt(1 + 4 * (e * e - 1))).epsilon(1e-14));
  CHECK(flow_map(ac, 0.0, 3.7) == 3.7);
  CHECK(flow_map(ac, 5.0, 0.0) == 0.0);
  CHECK(flow_map(ac, 2.0, -2.0) == doctest::Approx(-flow_map(ac, 2.0, 2.0)));
  CHECK(flow_map(ac, 40.0, 0.3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(flow_map(ac, -0.1, 1.0), ArgumentError);

  // Semigroup property of the flow.
  CHECK(flow_map(ac, 0.7, flow_map(ac, 0.4, 1.3)) == doctest::Approx(flow_map(ac, 1.1, 1.3)).epsilon(1e-13));
}

TEST_CASE("flow against RK4 for general drifts") {
  for (const auto& coeffs : {std::vector<double>{0.0, 1.0, 0.0, -1.0}, std::vector<double>{0.2, 0.5, 0.7, -1.5},
                             std::vector<double>{1.0, -2.0}, std::vector<double>{-0.5}}) {
    const PolynomialDrift d(coeffs);
    for (double x : {-3.0, -0.4, 0.0, 0.9, 2.5})
      for (double t : {0.01, 0.3, 1.0}) {
        const double ref = flow_map_rk4(d, t, x, 20000);
        CHECK(flow_map(d, t, x) == doctest::Approx(ref).epsilon(1e-9));
      }
  }
}

TEST_CASE("flow derivative bound and growth") {
  const auto ac = PolynomialDrift::allen_cahn();
  const PolynomialDrift gen({0.2, 0.5, 0.7, -1.5});
  for (const auto* d : {&ac, &gen}) {
    const double lf = d->one_sided_constant();
    for (double t : {1e-3, 0.1, 1.0})
      for (int i = 0; i <= 400; ++i) {
        const double x = -10.0 + 0.05 * i;
        const double dx = flow_derivative(*d, t, x);
        CHECK(dx > 0.0);
        CHECK(dx <= std::exp(lf * t) * (1 + 1e-6));
        // Finite-difference check of the derivative.
        const double eps = 1e-6 * std::max(1.0, std::abs(x));
        const double fd = (flow_map(*d, t, x + eps) - flow_map(*d, t, x - eps)) / (2 * eps);
        CHECK(dx == doctest::Approx(fd).epsilon(1e-5).scale(1e-8));
      }
  }
  // |Phi_t(x)| <= e^t |x| for Allen-Cahn.
  for (double x : {-10.0, -1.0, 0.5, 10.0}) CHECK(std::abs(flow_map(ac, 1.0, x)) <= std::exp(1.0) * std::abs(x));
  CHECK(flow_derivative(ac, 1.0, 0.0) == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("psi converges to f at first order") {
  const auto ac = PolynomialDrift::allen_cahn();
  CHECK(psi(ac, 0.0, 1.7) == ac.value(1.7));
  std::vector<double> dts, errs;
  for (int j = 4; j <= 12; ++j) {
    const double dt = std::ldexp(1.0, -j);
    dts.push_back(dt);
    errs.push_back(std::abs(psi(ac, dt, 1.7) - ac.value(1.7)));
  }
  CHECK(fitted_slope(dts, errs) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("linear factors of the schemes") {
  const FemSpace s(Mesh1D::uniform(1.0, 8));
  const auto ac = PolynomialDrift::allen_cahn();
  const double dt = 0.01;
  const Propagator semi(s, ac, Scheme::kSemiImplicit, dt);
  const Propagator split(s, ac, Scheme::kSplitting, dt);
  for (int i = 0; i < s.dim(); ++i) {
    const double l = s.eig_values()(i);
    CHECK(semi.linear_factor()(i) == doctest::Approx(1.0 / (1.0 + l * dt)));
    CHECK(split.linear_factor()(i) == doctest::Approx(std::exp(-l * dt)));
    CHECK(semi.decay()(i) == doctest::Approx(std::exp(-l * dt)));
    CHECK(semi.linear_factor()(i) < 1.0);
  }
  CHECK_THROWS_AS(Propagator(s, ac, Scheme::kSplitting, 0.0), ArgumentError);
  CHECK_THROWS_AS(Propagator(s, ac, Scheme::kSplitting, dt, -1.0), ArgumentError);
}

TEST_CASE("noise-free integration without drift is the discrete semigroup") {
  const FemSpace s(Mesh1D::jittered(1.0, 16, 0.2, 5));
  const FemField x0 = smooth_state(s);
  for (Scheme sc : {Scheme::kSplitting, Scheme::kExponentialEuler}) {
    const SchemeConfig cfg{sc, 1.0 / 64, 32};
    CHECK(cfg.final_time() == doctest::Approx(0.5));
    Trajectory tr;
    const FemField x = integrate(s, PolynomialDrift::zero(), CovarianceSpec::none(), cfg, x0, {}, &tr);
    const Eigen::VectorXd want =
        (-s.eig_values().array() * 0.5).exp().matrix().asDiagonal() * s.modal(x0);
    CHECK((s.modal(x) - want).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(tr.states.size() == 33);
    CHECK(tr.states.front() == x0.nodal);
    CHECK(tr.states.back() == x.nodal);
  }
  // Zero steps return the initial state.
  const FemField same = integrate(s, PolynomialDrift::allen_cahn(), CovarianceSpec::power_decay(2.0, 32),
                                  {Scheme::kSplitting, 0.1, 0}, x0, {});
  CHECK(same.nodal == x0.nodal);
  // Without diffusion the splitting scheme applies the flow nodewise.
  const FemField flow = integrate(s, PolynomialDrift::allen_cahn(), CovarianceSpec::none(),
                                  {Scheme::kSplitting, 0.1, 5, 0.0}, x0, {});
  for (int i = 0; i < s.dim(); ++i)
    CHECK(flow.nodal(i) == doctest::Approx(flow_map(PolynomialDrift::allen_cahn(), 0.5, x0.nodal(i))).epsilon(1e-12));
}

TEST_CASE("integration is keyed by the stream") {
  const FemSpace s(Mesh1D::uniform(1.0, 16));
  const FemField x0 = smooth_state(s);
  const auto spec = CovarianceSpec::power_decay(2.0, 128);
  for (Scheme sc : {Scheme::kSplitting, Scheme::kExponentialEuler, Scheme::kSemiImplicit}) {
    const SchemeConfig cfg{sc, 1.0 / 32, 32};
    const StreamKey key{4, 9, 0, StreamPurpose::kConvolution};
    const FemField a = integrate(s, PolynomialDrift::allen_cahn(), spec, cfg, x0, key);
    const FemField b = integrate(s, PolynomialDrift::allen_cahn(), spec, cfg, x0, key);
    const FemField c = integrate(s, PolynomialDrift::allen_cahn(), spec, cfg, x0, key.with_sample(10));
    CHECK(a.nodal == b.nodal);
    CHECK(a.nodal != c.nodal);
    CHECK(a.nodal.allFinite());
  }
}

TEST_CASE("single steps agree with integrate") {
  const FemSpace s(Mesh1D::uniform(1.0, 16));
  const FemField x0 = smooth_state(s);
  const auto spec = CovarianceSpec::power_decay(2.0, 128);
  const auto ac = PolynomialDrift::allen_cahn();
  const FemSpace* ptr = &s;
  const double dt = 1.0 / 64;
  const StreamKey key{6, 2, 0, StreamPurpose::kConvolution};
  const ConvolutionSampler conv({&ptr, 1}, spec, dt);
  const IncrementProjector inc({&ptr, 1}, spec, dt);

  FemField a = x0, b = x0, c = x0;
  for (std::uint64_t n = 0; n < 3; ++n) {
    a = step_splitting(s, ac, conv, a, key.with_step(n));
    b = step_exponential_euler(s, ac, conv, b, key.with_step(n));
    c = step_semi_implicit(s, ac, inc, c, key.with_step(n));
  }
  CHECK(a.nodal.isApprox(integrate(s, ac, &conv, {Scheme::kSplitting, dt, 3}, x0, key).nodal, 1e-14));
  CHECK(b.nodal.isApprox(integrate(s, ac, &conv, {Scheme::kExponentialEuler, dt, 3}, x0, key).nodal, 1e-14));
  CHECK(c.nodal.isApprox(integrate(s, ac, &inc, {Scheme::kSemiImplicit, dt, 3}, x0, key).nodal, 1e-14));

  // One explicit step by hand: S(dt) (x + dt f(x)) + G.
  const std::uint64_t id = key.sample;
  const Eigen::VectorXd g = conv.draw(key, {&id, 1}, 0).col(0);
  Eigen::VectorXd drifted = x0.nodal;
  for (Eigen::Index i = 0; i < drifted.size(); ++i) drifted(i) += dt * ac.value(drifted(i));
  const Eigen::VectorXd modal =
      (-s.eig_values().array() * dt).exp().matrix().asDiagonal() * s.modal(s.field(drifted)) + g;
  CHECK(step_exponential_euler(s, ac, conv, x0, key).nodal.isApprox(s.from_modal(modal).nodal, 1e-13));

  // Mismatched noise sources are rejected.
  CHECK_THROWS_AS(integrate(s, ac, &inc, {Scheme::kSplitting, dt, 3}, x0, key), ArgumentError);
  CHECK_THROWS_AS(integrate(s, ac, &conv, {Scheme::kSplitting, dt / 2, 3}, x0, key), ArgumentError);
  CHECK_THROWS_AS(integrate(s, ac, &conv, {Scheme::kSplitting, dt, 3, 0.5}, x0, key), ArgumentError);
  const FemSpace other(Mesh1D::uniform(1.0, 8));
  CHECK_THROWS_AS(integrate(other, ac, &conv, {Scheme::kSplitting, dt, 3}, other.zero(), key), ArgumentError);
}

TEST_CASE("overflow raises an integration error with the step") {
  const FemSpace s(Mesh1D::uniform(1.0, 8));
  // f(x) = 50 + 10 x has f' = 10 and drives the state past the bound.
  const PolynomialDrift blow({50.0, 10.0});
  try {
    integrate(s, blow, CovarianceSpec::none(), {Scheme::kExponentialEuler, 0.5, 200, 0.0},
              s.interpolate([](double) { return 1.0; }), {});
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.step() > 0);
    CHECK(e.step() < 200);
  }
}

TEST_CASE("tangent process") {
  const FemSpace s(Mesh1D::uniform(1.0, 16));
  const auto spec = CovarianceSpec::power_decay(2.0, 128);
  const auto ac = PolynomialDrift::allen_cahn();
  const FemField x0 = smooth_state(s);
  const FemField y = s.interpolate([](double x) { return std::sin(3 * M_PI * x); });
  const StreamKey key{12, 1, 0, StreamPurpose::kConvolution};

  for (Scheme sc : {Scheme::kSplitting, Scheme::kExponentialEuler, Scheme::kSemiImplicit}) {
    const SchemeConfig cfg{sc, 1.0 / 64, 64};
    Trajectory tr;
    integrate(s, ac, spec, cfg, x0, key, &tr);
    const FemField eta = tangent_integrate(s, ac, tr, 0.0, y, cfg);

    // Central finite difference with the same noise path.
    const double eps = 1e-5;
    const FemField xp = integrate(s, ac, spec, cfg, s.field(x0.nodal + eps * y.nodal), key);
    const FemField xm = integrate(s, ac, spec, cfg, s.field(x0.nodal - eps * y.nodal), key);
    const Eigen::VectorXd fd = (xp.nodal - xm.nodal) / (2 * eps);
    CHECK((eta.nodal - fd).norm() <= 1e-4 * fd.norm());

    // Zero direction and zero drift.
    CHECK(tangent_integrate(s, ac, tr, 0.5, s.zero(), cfg).nodal.isZero());
    const FemField lin = tangent_integrate(s, PolynomialDrift::zero(), tr, 0.5, y, cfg);
    const Eigen::VectorXd want =
        s.eig_vectors() * (Propagator(s, ac, sc, cfg.dt).linear_factor().array().pow(32).matrix().asDiagonal() * s.modal(y));
    CHECK((lin.nodal - want).cwiseAbs().maxCoeff() < 1e-12);

    // Starting at the final time is the identity.
    CHECK(tangent_integrate(s, ac, tr, 1.0, y, cfg).nodal.isApprox(y.nodal));

    CHECK_THROWS_AS(tangent_integrate(s, ac, tr, 0.3, y, cfg), StateError);
    CHECK_THROWS_AS(tangent_integrate(s, ac, tr, 0.0, y, {sc, 1.0 / 32, 32}), StateError);
    CHECK_THROWS_AS(tangent_integrate(s, ac, tr, 0.0, y, {sc, 1.0 / 64, 128}), StateError);
  }

  // The spectral overload projects first.
  const SchemeConfig cfg{Scheme::kSplitting, 1.0 / 64, 64};
  Trajectory tr;
  integrate(s, ac, spec, cfg, x0, key, &tr);
  const SpectralBasis basis(1.0, 64);
  const auto d = SpectralCoeffs::unit(64, 2);
  CHECK(tangent_integrate(s, ac, tr, 0.0, basis, d, cfg)
            .nodal.isApprox(tangent_integrate(s, ac, tr, 0.0, l2_project(s, basis, d), cfg).nodal));
}

TEST_CASE("deterministic schemes converge at first order in time") {
  const FemSpace s(Mesh1D::uniform(1.0, 16));
  const auto ac = PolynomialDrift::allen_cahn();
  const FemField x0 = smooth_state(s);
  for (Scheme sc : {Scheme::kSplitting, Scheme::kExponentialEuler, Scheme::kSemiImplicit}) {
    const FemField ref = integrate(s, ac, CovarianceSpec::none(), {sc, 1.0 / 16384, 16384}, x0, {});
    std::vector<double> dts, errs;
    for (int j = 4; j <= 8; ++j) {
      const auto n = std::size_t{1} << j;
      const FemField x = integrate(s, ac, CovarianceSpec::none(), {sc, 1.0 / n, n}, x0, {});
      dts.push_back(1.0 / n);
      errs.push_back(s.l2_norm(s.field(x.nodal - ref.nodal)));
    }
    const double p = fitted_slope(dts, errs);
    MESSAGE("temporal order " << p);
    CHECK(p > 0.9);
    CHECK(p < 1.5);
  }
}
