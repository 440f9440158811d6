#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "spdefem/errors.hpp"
#include "spdefem/fem.hpp"
#include "spdefem/fit.hpp"
#include "spdefem/rng.hpp"

using namespace spdefem;
using std::numbers::pi;

namespace {

Eigen::VectorXd random_vector(int n, std::uint64_t seed) {
  Eigen::VectorXd v(n);
  fill_normal({seed, 0, 0, StreamPurpose::kTest}, {v.data(), static_cast<std::size_t>(n)});
  return v;
}

double slope(const std::vector<double>& h, const std::vector<double>& e) {
  std::vector<LevelEstimate> lv;
  for (std::size_t i = 0; i < h.size(); ++i) lv.push_back({h[i], e[i], 0.0, true});
  return fit_rate(lv).slope;
}

}  // namespace

TEST_CASE("mesh validation") {
  CHECK_THROWS_AS(Mesh1D({0.1, 0.5, 1.0}), MeshError);
  CHECK_THROWS_AS(Mesh1D({0.0, 0.5, 0.5, 1.0}), MeshError);
  CHECK_THROWS_AS(Mesh1D({0.0, 0.9, 0.95, 1.0}), MeshError);  // min element < h/2
  CHECK_THROWS_AS(Mesh1D({0.0}), MeshError);
  const Mesh1D m = Mesh1D::uniform(2.0, 8);
  CHECK(m.h() == doctest::Approx(0.25));
  CHECK(m.interior() == 7);
  CHECK(m.is_uniform());
  const Mesh1D j = Mesh1D::jittered(1.0, 32, 0.25, 5);
  CHECK_FALSE(j.is_uniform());
  CHECK(j.min_element() >= 0.5 * j.h());
  CHECK(j.nodes().front() == 0.0);
  CHECK(j.nodes().back() == 1.0);
  CHECK_THROWS_AS(Mesh1D::jittered(1.0, 8, 0.3, 1), MeshError);
}

TEST_CASE("assembled matrices on a uniform mesh") {
  const double h = 0.125;
  const FemSpace s(Mesh1D::uniform(1.0, 8));
  const int i = 3;
  CHECK(s.mass()(i, i - 1) == doctest::Approx(h / 6));
  CHECK(s.mass()(i, i) == doctest::Approx(4 * h / 6));
  CHECK(s.mass()(i, i + 1) == doctest::Approx(h / 6));
  CHECK(s.stiffness()(i, i - 1) == doctest::Approx(-1 / h));
  CHECK(s.stiffness()(i, i) == doctest::Approx(2 / h));
  CHECK(s.stiffness()(i, i + 1) == doctest::Approx(-1 / h));
  CHECK(s.mass()(0, 5) == 0.0);
}

TEST_CASE("one interior node: lambda = S11/M11 = 12") {
  const FemSpace s(Mesh1D::uniform(1.0, 2));
  REQUIRE(s.dim() == 1);
  CHECK(s.eig_values()(0) == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("discrete eigenpairs") {
  for (int n : {4, 9, 33}) {
    const double len = 1.7;
    const FemSpace s(Mesh1D::uniform(len, n));
    const double h = len / n;
    // Independent dense oracle: symmetric standard problem L^-1 S L^-T.
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(s.stiffness(), s.mass());
    for (int i = 1; i < n; ++i) {
      const double c = std::cos(i * pi * h / len);
      const double closed = 6 / (h * h) * (1 - c) / (2 + c);
      CHECK(s.eig_values()(i - 1) == doctest::Approx(closed).epsilon(1e-11));
      CHECK(es.eigenvalues()(i - 1) == doctest::Approx(closed).epsilon(1e-11));
      CHECK(s.eig_values()(i - 1) >= std::pow(i * pi / len, 2) * (1 - 1e-12));  // min-max sandwich
    }
    const Eigen::MatrixXd& v = s.eig_vectors();
    const auto dim = s.dim();
    CHECK((v.transpose() * s.mass() * v - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((s.stiffness() * v - s.mass() * v * s.eig_values().asDiagonal()).cwiseAbs().maxCoeff() <
          1e-8 * s.eig_values().maxCoeff());
    CHECK((s.to_modal() * v - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("eigenvalue growth is quadratic on jittered meshes") {
  const FemSpace s(Mesh1D::jittered(1.0, 40, 0.25, 3));
  double lo = 1e300, hi = 0;
  for (int i = 1; i <= s.dim(); ++i) {
    const double r = s.eig_values()(i - 1) / (double(i) * i);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  MESSAGE("lambda_i^h / i^2 in [" << lo << ", " << hi << "]");
  CHECK(lo >= pi * pi * (1 - 1e-9));
  CHECK(hi <= 12.0 * 4.0 * 1.01);  // 12/h_min^2 / N^2 with h_min >= h/2
  const Eigen::MatrixXd& v = s.eig_vectors();
  CHECK((v.transpose() * s.mass() * v - Eigen::MatrixXd::Identity(s.dim(), s.dim())).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("hat-sine integrals against composite Gauss-Legendre") {
  using boost::math::quadrature::gauss;
  const double len = 1.3;
  // 20-point rule on panels of at most an eighth of a wavelength.
  const auto integrate = [&](const auto& f, double lo, double hi, int k) {
    const int panels = std::max(4, static_cast<int>(std::ceil(16.0 * k * (hi - lo) / len)));
    const double w = (hi - lo) / panels;
    double acc = 0;
    for (int i = 0; i < panels; ++i) acc += gauss<double, 20>::integrate(f, lo + i * w, lo + (i + 1) * w);
    return acc;
  };
  for (auto [a, b, c] : {std::tuple{0.1, 0.2, 0.35}, std::tuple{0.0, 0.01, 0.02}, std::tuple{1.0, 1.2, 1.3}})
    for (int k : {1, 2, 7, 50, 333, 4000}) {
      const auto hat = [&](double x) {
        const double phi = x < b ? (x - a) / (b - a) : (c - x) / (c - b);
        return std::sqrt(2 / len) * std::sin(k * pi * x / len) * phi;
      };
      const double want = integrate(hat, a, b, k) + integrate(hat, b, c, k);
      CHECK(std::abs(hat_sine_integral(a, b, c, len, k) - want) < 1e-14);
    }
}

TEST_CASE("L2 and Ritz projections") {
  const FemSpace s(Mesh1D::jittered(1.0, 16, 0.2, 9));
  const SpectralBasis b(1.0, 512);
  const ModeCoupling cp = ModeCoupling::build(s, b);

  // A V_h function in spectral form returns to itself up to the truncation tail,
  // whose sine coefficients decay like k^-2.
  const FemField v = s.field(random_vector(s.dim(), 1));
  std::vector<double> ks, errs;
  for (int kmax : {256, 1024, 4096}) {
    const SpectralBasis bk(1.0, kmax);
    const ModeCoupling ck = ModeCoupling::build(s, bk);
    ks.push_back(1.0 / kmax);
    errs.push_back((l2_project(s, ck, to_spectral(s, ck, v)).nodal - v.nodal).cwiseAbs().maxCoeff());
  }
  MESSAGE("round-trip errors " << errs[0] << " " << errs[1] << " " << errs[2]);
  CHECK(errs[2] < 1e-6);
  CHECK(slope(ks, errs) > 1.4);
  CHECK(l2_project(s, cp, SpectralCoeffs::zero(512)).nodal.isZero());
  CHECK(ritz_project(s, b, SpectralCoeffs::zero(512)).nodal.isZero());

  // P^h self-adjointness <P x, w> = <x, w> for w in V_h.
  const SpectralCoeffs x(random_vector(512, 2).cwiseQuotient(Eigen::VectorXd::LinSpaced(512, 1, 512)));
  const FemField px = l2_project(s, cp, x);
  const FemField w = s.field(random_vector(s.dim(), 3));
  CHECK(s.inner(px, w) == doctest::Approx(x.coeffs.dot(to_spectral(s, cp, w).coeffs)).epsilon(1e-8));

  // Galerkin orthogonality of R^h: <(x - R x)', phi_i'> = 0.
  const FemField rx = ritz_project(s, b, cp, x);
  const Eigen::VectorXd load = cp.hat_sine * (x.coeffs.array() * b.eigenvalues().array()).matrix();
  CHECK((s.stiffness() * rx.nodal - load).cwiseAbs().maxCoeff() < 1e-8 * load.cwiseAbs().maxCoeff());
}

TEST_CASE("V_h functions round-trip through the Ritz projection") {
  // x = sum_k c_k e_k with c the exact sine coefficients of a V_h function;
  // with the full series the Ritz projection recovers it. The truncated
  // spectral span loses only the tail.
  const FemSpace s(Mesh1D::uniform(1.0, 8));
  const SpectralBasis b(1.0, 4096);
  const ModeCoupling cp = ModeCoupling::build(s, b);
  const FemField v = s.field(random_vector(s.dim(), 4));
  const FemField r = ritz_project(s, b, cp, to_spectral(s, cp, v));
  CHECK((r.nodal - v.nodal).cwiseAbs().maxCoeff() < 1e-3 * v.nodal.cwiseAbs().maxCoeff());
}

TEST_CASE("nodal error of P^h e_1 is second order") {
  std::vector<double> hs, errs;
  for (int n : {8, 16, 32, 64, 128}) {
    const FemSpace s(Mesh1D::uniform(1.0, n));
    const SpectralBasis b(1.0, 1);
    const FemField p = l2_project(s, b, SpectralCoeffs::unit(1, 1));
    double e = 0;
    for (int i = 0; i < s.dim(); ++i) e = std::max(e, std::abs(p.nodal(i) - b.eval_mode(1, s.mesh().nodes()[i + 1])));
    hs.push_back(1.0 / n);
    errs.push_back(e);
  }
  CHECK(slope(hs, errs) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("discrete semigroup and fractional powers") {
  const FemSpace s(Mesh1D::jittered(1.0, 20, 0.2, 2));
  const FemField v = s.field(random_vector(s.dim(), 5));
  CHECK(fem_semigroup_apply(s, 0.0, v).nodal.isApprox(v.nodal, 1e-12));
  const FemField e1 = s.from_modal(Eigen::VectorXd::Unit(s.dim(), 0));
  CHECK(fem_semigroup_apply(s, 1.0, e1).nodal.isApprox(std::exp(-s.eig_values()(0)) * e1.nodal, 1e-10));
  CHECK(fem_fractional_apply(s, 0.0, v).nodal.isApprox(v.nodal, 1e-12));
  const FemField e3 = s.from_modal(Eigen::VectorXd::Unit(s.dim(), 2));
  CHECK(fem_fractional_apply(s, 2.0, e3).nodal.isApprox(s.eig_values()(2) * e3.nodal, 1e-10));
  CHECK_THROWS_AS(fem_semigroup_apply(s, -1.0, v), ArgumentError);

  // Weak discrete maximum principle ||S^h(t) v||_inf <= C ||v||_inf, C <= 2.
  double worst = 0;
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const FemField r = s.field(random_vector(s.dim(), seed));
    for (int j = 1; j <= 12; ++j)
      worst = std::max(worst, s.sup_norm(fem_semigroup_apply(s, std::ldexp(1.0, -j), r)) / s.sup_norm(r));
  }
  MESSAGE("max ||S^h(t)v||_inf / ||v||_inf = " << worst);
  CHECK(worst <= 2.0);
}

TEST_CASE("discrete smoothing in the sup norm") {
  // ||S^h(t) P^h f||_inf t^{1/4} / ||f|| bounded over t = 2^-2..2^-12.
  for (int n : {32, 128}) {
    const FemSpace s(Mesh1D::uniform(1.0, n));
    const SpectralBasis b(1.0, 4 * n);
    const ModeCoupling cp = ModeCoupling::build(s, b);
    const SpectralCoeffs f(random_vector(4 * n, 6));
    double worst = 0;
    for (int j = 2; j <= 12; ++j) {
      const double t = std::ldexp(1.0, -j);
      worst = std::max(worst, s.sup_norm(fem_semigroup_apply(s, t, l2_project(s, cp, f))) * std::pow(t, 0.25) / f.norm());
    }
    MESSAGE("n=" << n << " max ratio " << worst);
    CHECK(worst < 2.0);
  }
}

TEST_CASE("norm equivalence of fractional powers") {
  // ||A^g v|| / ||A_h^g v|| stays within fixed bounds for g in [-1/2, 1/2].
  for (double g : {-0.5, -0.25, 0.25, 0.5}) {
    double lo = 1e300, hi = 0;
    for (int n : {8, 16, 32, 64}) {
      const FemSpace s(Mesh1D::uniform(1.0, n));
      const SpectralBasis b(1.0, 4096);
      const ModeCoupling cp = ModeCoupling::build(s, b);
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const FemField v = s.field(random_vector(s.dim(), 100 + seed));
        const double cont = b.hr_norm(2 * g, to_spectral(s, cp, v));
        const double disc = s.l2_norm(fem_fractional_apply(s, 2 * g, v));
        lo = std::min(lo, cont / disc);
        hi = std::max(hi, cont / disc);
      }
    }
    MESSAGE("gamma=" << g << " ratio in [" << lo << ", " << hi << "]");
    CHECK(lo > 0.3);
    CHECK(hi < 3.0);
  }
}

TEST_CASE("operator error norms") {
  std::vector<double> hs, p02, r12, p01, p00;
  for (int n : {8, 16, 32, 64, 128}) {
    const FemSpace s(Mesh1D::uniform(1.0, n));
    const SpectralBasis b(1.0, 4 * s.dim());
    hs.push_back(1.0 / n);
    p02.push_back(operator_error_norm(s, b, 0, 2, ErrorOperator::kL2Projection));
    r12.push_back(operator_error_norm(s, b, 1, 2, ErrorOperator::kRitzProjection));
    p01.push_back(operator_error_norm(s, b, 0, 1, ErrorOperator::kL2Projection));
    p00.push_back(operator_error_norm(s, b, 0, 0, ErrorOperator::kL2Projection));
  }
  CHECK(slope(hs, p02) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(slope(hs, r12) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(slope(hs, p01) == doctest::Approx(1.0).epsilon(0.1));
  for (double v : p00) CHECK(v <= 1.0 + 1e-12);

  const FemSpace s(Mesh1D::uniform(1.0, 8));
  const SpectralBasis small(1.0, 16);
  CHECK_THROWS_AS(operator_error_norm(s, small, 0, 2, ErrorOperator::kL2Projection), ArgumentError);
  const SpectralBasis b(1.0, 64);
  CHECK_THROWS_AS(operator_error_norm(s, b, 1.5, 2, ErrorOperator::kL2Projection), ArgumentError);
  CHECK_THROWS_AS(operator_error_norm(s, b, 1, 0.5, ErrorOperator::kL2Projection), ArgumentError);
  CHECK_THROWS_AS(operator_error_norm(s, b, 0, 0.5, ErrorOperator::kRitzProjection), ArgumentError);
  CHECK_THROWS_AS(operator_error_norm(s, b, 0, 0, ErrorOperator::kSemigroup, 0.0), ArgumentError);
}

TEST_CASE("operator error slopes on jittered meshes") {
  std::vector<double> hs, p02, r12;
  for (int n : {8, 16, 32, 64}) {
    const FemSpace s(Mesh1D::jittered(1.0, n, 0.25, 17));
    const SpectralBasis b(1.0, 4 * s.dim());
    hs.push_back(s.h());
    p02.push_back(operator_error_norm(s, b, 0, 2, ErrorOperator::kL2Projection));
    r12.push_back(operator_error_norm(s, b, 1, 2, ErrorOperator::kRitzProjection));
  }
  CHECK(slope(hs, p02) == doctest::Approx(2.0).epsilon(0.07));
  CHECK(slope(hs, r12) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("semigroup error G^h(t) with u=2, v=0") {
  // ||G^h(t) x|| <= C h^2 t^{-1} ||x||: t ||G^h(t)|| / h^2 bounded over t.
  for (int n : {16, 32}) {
    const FemSpace s(Mesh1D::uniform(1.0, n));
    const SpectralBasis b(1.0, 4 * s.dim());
    const double h = 1.0 / n;
    double worst = 0;
    for (int j = 1; j <= 8; ++j) {
      const double t = std::ldexp(1.0, -j);
      worst = std::max(worst, t * operator_error_norm(s, b, 0, 0, ErrorOperator::kSemigroup, t) / (h * h));
    }
    MESSAGE("n=" << n << " max t||G^h(t)||/h^2 = " << worst);
    CHECK(worst < 1.0);
  }
}

TEST_CASE("power iteration") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a.diagonal() << 1, 5, 2, 0.5;
  CHECK(power_iteration(a) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(power_iteration(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
}

TEST_CASE("cross-mesh distance") {
  const FemSpace a(Mesh1D::uniform(1.0, 8));
  const FemSpace b(Mesh1D::jittered(1.0, 12, 0.2, 4));
  // Same mesh: mass-matrix norm.
  const Eigen::VectorXd u = random_vector(a.dim(), 7), w = random_vector(a.dim(), 8);
  const CrossMeshNorm same(a, a);
  CHECK(same.distance(u, w) == doctest::Approx(a.l2_norm(a.field(u - w))).epsilon(1e-12));
  // Different meshes: compare with fine quadrature of the piecewise-linear difference.
  const Eigen::VectorXd v = random_vector(b.dim(), 9);
  const CrossMeshNorm cm(a, b);
  double acc = 0;
  const int m = 200000;
  for (int i = 0; i < m; ++i) {
    const double x = (i + 0.5) / m;
    const double d = a.evaluate(a.field(u), x) - b.evaluate(b.field(v), x);
    acc += d * d / m;
  }
  CHECK(cm.distance(u, v) == doctest::Approx(std::sqrt(acc)).epsilon(1e-6));
  Eigen::MatrixXd uu(a.dim(), 2), vv(b.dim(), 2);
  uu << u, u;
  vv << v, Eigen::VectorXd::Zero(b.dim());
  const Eigen::VectorXd d = cm.distances(uu, vv);
  CHECK(d(0) == doctest::Approx(cm.distance(u, v)));
  CHECK(d(1) == doctest::Approx(a.l2_norm(a.field(u))).epsilon(1e-12));
}

TEST_CASE("fields are bound to their space") {
  const FemSpace a(Mesh1D::uniform(1.0, 8));
  const FemSpace b(Mesh1D::uniform(1.0, 16));
  CHECK(a.id() != b.id());
  CHECK_THROWS_AS(a.l2_norm(b.zero()), IndexError);
}
