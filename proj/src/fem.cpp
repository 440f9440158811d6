#include "spdefem/fem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "spdefem/errors.hpp"
#include "spdefem/rng.hpp"

namespace spdefem {

// ---------------------------------------------------------------- Mesh1D

Mesh1D::Mesh1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 3) throw MeshError("mesh needs at least two elements");
  if (nodes_.front() != 0.0) throw MeshError("first node must be 0");
  if (!(nodes_.back() > 0.0)) throw MeshError("last node must be positive");
  h_ = 0.0;
  h_min_ = nodes_.back();
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const double len = nodes_[i] - nodes_[i - 1];
    if (!(len > 0.0))
      throw MeshError("degenerate element " + std::to_string(i - 1) + " (length " +
                      std::to_string(len) + ")");
    h_ = std::max(h_, len);
    h_min_ = std::min(h_min_, len);
  }
  if (h_min_ < kQuasiUniformity * h_ * (1.0 - 1e-12))
    throw MeshError("mesh is not quasi-uniform: min element " + std::to_string(h_min_) +
                    " < 0.5 * h = " + std::to_string(kQuasiUniformity * h_));
}

Mesh1D Mesh1D::uniform(double length, int elements) {
  if (elements < 2) throw MeshError("mesh needs at least two elements");
  if (!(length > 0.0)) throw MeshError("interval length must be positive");
  std::vector<double> x(elements + 1);
  for (int i = 0; i <= elements; ++i) x[i] = length * i / elements;
  x.back() = length;
  return Mesh1D(std::move(x));
}

Mesh1D Mesh1D::jittered(double length, int elements, double jitter, std::uint64_t seed) {
  if (jitter < 0.0 || jitter > 0.25) throw MeshError("jitter must lie in [0, 0.25]");
  Mesh1D base = uniform(length, elements);
  std::vector<double> x = base.nodes();
  std::vector<double> u(elements + 1);
  fill_uniform(StreamKey{seed, 0, 0, StreamPurpose::kTest}, u);
  const double h = length / elements;
  for (int i = 1; i < elements; ++i) x[i] += (u[i] - 0.5) * jitter * h;
  return Mesh1D(std::move(x));
}

bool Mesh1D::is_uniform(double tol) const { return h_ - h_min_ <= tol * h_; }

// -------------------------------------------------------------- FemSpace

namespace {

std::uint64_t hash_nodes(const std::vector<double>& nodes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double x : nodes) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

// Solves a symmetric tridiagonal system given as a dense matrix.
Eigen::VectorXd tridiagonal_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
  const auto n = rhs.size();
  Eigen::VectorXd c(n), d(n);
  double denom = a(0, 0);
  c[0] = n > 1 ? a(0, 1) / denom : 0.0;
  d[0] = rhs[0] / denom;
  for (Eigen::Index i = 1; i < n; ++i) {
    denom = a(i, i) - a(i, i - 1) * c[i - 1];
    c[i] = i + 1 < n ? a(i, i + 1) / denom : 0.0;
    d[i] = (rhs[i] - a(i, i - 1) * d[i - 1]) / denom;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) d[i] -= c[i] * d[i + 1];
  return d;
}

}  // namespace

FemSpace::FemSpace(Mesh1D mesh) : mesh_(std::move(mesh)), id_(hash_nodes(mesh_.nodes())) {
  const int n = dim();
  const auto& x = mesh_.nodes();
  mass_ = Eigen::MatrixXd::Zero(n, n);
  stiffness_ = Eigen::MatrixXd::Zero(n, n);
  // Element e = [x_e, x_{e+1}] couples interior indices e-1 and e.
  for (int e = 0; e < mesh_.elements(); ++e) {
    const double len = x[e + 1] - x[e];
    const int i = e - 1, j = e;
    const bool has_i = i >= 0, has_j = j < n;
    if (has_i) {
      mass_(i, i) += len / 3.0;
      stiffness_(i, i) += 1.0 / len;
    }
    if (has_j) {
      mass_(j, j) += len / 3.0;
      stiffness_(j, j) += 1.0 / len;
    }
    if (has_i && has_j) {
      mass_(i, j) += len / 6.0;
      mass_(j, i) += len / 6.0;
      stiffness_(i, j) -= 1.0 / len;
      stiffness_(j, i) -= 1.0 / len;
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      stiffness_, mass_, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (solver.info() != Eigen::Success) throw NumericalError("generalized eigensolve failed");
  eig_values_ = solver.eigenvalues();
  eig_vectors_ = solver.eigenvectors();
  // Orient e_i^h along sin(i pi x / L).
  const double length = mesh_.length();
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int j = 0; j < n; ++j)
      dot += eig_vectors_(j, i) * std::sin((i + 1) * std::numbers::pi * x[j + 1] / length);
    if (dot < 0.0) eig_vectors_.col(i) *= -1.0;
  }
  to_modal_ = eig_vectors_.transpose() * mass_;
}

FemSpace assemble(const Mesh1D& mesh) { return FemSpace(mesh); }

FemField FemSpace::zero() const { return FemField{id_, Eigen::VectorXd::Zero(dim())}; }

FemField FemSpace::field(Eigen::VectorXd nodal) const {
  if (nodal.size() != dim())
    throw IndexError("nodal vector has length " + std::to_string(nodal.size()) + ", expected " +
                     std::to_string(dim()));
  return FemField{id_, std::move(nodal)};
}

FemField FemSpace::interpolate(const std::function<double(double)>& f) const {
  Eigen::VectorXd u(dim());
  for (int i = 0; i < dim(); ++i) u[i] = f(mesh_.nodes()[i + 1]);
  return FemField{id_, std::move(u)};
}

void FemSpace::check(const FemField& v) const {
  if (v.space_id != id_ || v.nodal.size() != dim())
    throw IndexError("field does not belong to this finite element space");
}

Eigen::VectorXd FemSpace::modal(const FemField& v) const {
  check(v);
  return to_modal_ * v.nodal;
}

FemField FemSpace::from_modal(const Eigen::VectorXd& c) const {
  if (c.size() != dim()) throw IndexError("modal vector length mismatch");
  return FemField{id_, eig_vectors_ * c};
}

double FemSpace::inner(const FemField& u, const FemField& v) const {
  check(u);
  check(v);
  return u.nodal.dot(mass_ * v.nodal);
}

double FemSpace::l2_norm(const FemField& v) const { return std::sqrt(std::max(0.0, inner(v, v))); }

double FemSpace::sup_norm(const FemField& v) const {
  check(v);
  return v.nodal.size() ? v.nodal.cwiseAbs().maxCoeff() : 0.0;
}

double FemSpace::evaluate(const FemField& v, double x) const {
  check(v);
  const auto& nodes = mesh_.nodes();
  if (x <= 0.0 || x >= nodes.back()) return 0.0;
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  const auto right = static_cast<int>(it - nodes.begin());
  const int left = right - 1;
  const double w = (x - nodes[left]) / (nodes[right] - nodes[left]);
  const double ul = left >= 1 ? v.nodal[left - 1] : 0.0;
  const double ur = right <= dim() ? v.nodal[right - 1] : 0.0;
  return (1.0 - w) * ul + w * ur;
}

Eigen::VectorXd FemSpace::solve_mass(const Eigen::VectorXd& rhs) const {
  return tridiagonal_solve(mass_, rhs);
}

Eigen::VectorXd FemSpace::solve_stiffness(const Eigen::VectorXd& rhs) const {
  return tridiagonal_solve(stiffness_, rhs);
}

Eigen::VectorXd FemSpace::solve_shifted(double dt, const Eigen::VectorXd& rhs) const {
  return tridiagonal_solve(mass_ + dt * stiffness_, rhs);
}

// ---------------------------------------------------------- ModeCoupling

double hat_sine_integral(double a, double b, double c, double length, int k) {
  const double w = k * std::numbers::pi / length;
  const double h1 = b - a, h2 = c - b;
  // g(h) = sin(w h / 2) / (w h / 2); the difference of the two element
  // contributions is rewritten as products to avoid cancellation.
  const auto g = [w](double h) {
    const double z = 0.5 * w * h;
    return z == 0.0 ? 1.0 : std::sin(z) / z;
  };
  const double g1 = g(h1), g2 = g(h2);
  const double main = 2.0 * g1 * std::sin(w * (b + 0.25 * (h2 - h1))) * std::sin(0.25 * w * (h1 + h2));
  const double skew = (g1 - g2) * std::cos(w * (b + 0.5 * h2));
  return std::sqrt(2.0 / length) * (main + skew) / w;
}

ModeCoupling ModeCoupling::build(const FemSpace& space, const SpectralBasis& basis) {
  if (std::abs(space.mesh().length() - basis.length()) > 1e-12 * basis.length())
    throw ArgumentError("mesh and spectral basis cover different intervals");
  const int n = space.dim(), kmax = basis.k_max();
  const auto& x = space.mesh().nodes();
  ModeCoupling out;
  out.hat_sine.resize(n, kmax);
  for (int k = 1; k <= kmax; ++k)
    for (int i = 0; i < n; ++i)
      out.hat_sine(i, k - 1) = hat_sine_integral(x[i], x[i + 1], x[i + 2], basis.length(), k);
  out.modal = space.eig_vectors().transpose() * out.hat_sine;
  return out;
}

// ----------------------------------------------------------- projections

namespace {
void check_modes(const ModeCoupling& coupling, const SpectralCoeffs& x) {
  if (x.size() != coupling.hat_sine.cols())
    throw IndexError("spectral coefficients do not match the coupling truncation");
}
}  // namespace

FemField l2_project(const FemSpace& space, const ModeCoupling& coupling, const SpectralCoeffs& x) {
  check_modes(coupling, x);
  return space.field(space.solve_mass(coupling.hat_sine * x.coeffs));
}

FemField l2_project(const FemSpace& space, const SpectralBasis& basis, const SpectralCoeffs& x) {
  return l2_project(space, ModeCoupling::build(space, basis), x);
}

FemField ritz_project(const FemSpace& space, const SpectralBasis& basis, const ModeCoupling& coupling,
                      const SpectralCoeffs& x) {
  check_modes(coupling, x);
  // <x', phi_i'> = sum_k lambda_k x_k <e_k, phi_i>.
  const Eigen::VectorXd load =
      coupling.hat_sine * (x.coeffs.array() * basis.eigenvalues().array()).matrix();
  return space.field(space.solve_stiffness(load));
}

FemField ritz_project(const FemSpace& space, const SpectralBasis& basis, const SpectralCoeffs& x) {
  return ritz_project(space, basis, ModeCoupling::build(space, basis), x);
}

SpectralCoeffs to_spectral(const FemSpace& space, const ModeCoupling& coupling, const FemField& v) {
  space.check(v);
  return SpectralCoeffs(coupling.hat_sine.transpose() * v.nodal);
}

FemField fem_semigroup_apply(const FemSpace& space, double t, const FemField& v) {
  if (t < 0.0) throw ArgumentError("semigroup time must be non-negative");
  const Eigen::VectorXd c = space.modal(v);
  return space.from_modal((c.array() * (-space.eig_values().array() * t).exp()).matrix());
}

FemField fem_fractional_apply(const FemSpace& space, double r, const FemField& v) {
  if (r == 0.0) {
    space.check(v);
    return v;
  }
  const Eigen::VectorXd c = space.modal(v);
  return space.from_modal((c.array() * space.eig_values().array().pow(0.5 * r)).matrix());
}

// -------------------------------------------------------- operator norms

double power_iteration(const Eigen::MatrixXd& gram, double rel_tol, int max_iter) {
  const auto n = gram.rows();
  if (n == 0) return 0.0;
  // Deterministic start with components in every direction.
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + 3.7 * static_cast<double>(i));
  v.normalize();
  double rayleigh = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd w = gram * v;
    const double next = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (it > 2 && std::abs(next - rayleigh) <= rel_tol * std::abs(next)) return next;
    rayleigh = next;
  }
  return rayleigh;
}

double operator_error_norm(const FemSpace& space, const SpectralBasis& basis, double s, double r,
                           ErrorOperator which, double t) {
  if (s < 0.0 || s > 1.0) throw ArgumentError("exponent s must lie in [0, 1]");
  if (r > 2.0 || r < 0.0) throw ArgumentError("exponent r must lie in [0, 2]");
  if (which != ErrorOperator::kSemigroup && r < s) throw ArgumentError("projection errors need s <= r");
  if (which == ErrorOperator::kRitzProjection && r < 1.0)
    throw ArgumentError("Ritz projection error needs r >= 1");
  if (which == ErrorOperator::kSemigroup && (s != 0.0 || !(t > 0.0)))
    throw ArgumentError("semigroup error needs s = 0 and t > 0");
  if (basis.k_max() < 4 * space.dim())
    throw ArgumentError("spectral truncation must retain at least 4 * N_h modes");

  const ModeCoupling coupling = ModeCoupling::build(space, basis);
  const Eigen::MatrixXd& b = coupling.hat_sine;
  const Eigen::ArrayXd lambda = basis.eigenvalues().array();
  const auto kmax = basis.k_max();

  // Gram matrix of the operator composed with A^{-r/2} on the right.
  Eigen::MatrixXd gram(kmax, kmax);
  switch (which) {
    case ErrorOperator::kL2Projection: {
      // Nodal image of P^h: M^{-1} B.
      Eigen::MatrixXd minv_b(space.dim(), kmax);
      for (Eigen::Index k = 0; k < kmax; ++k) minv_b.col(k) = space.solve_mass(b.col(k));
      const Eigen::MatrixXd p_spec = b.transpose() * minv_b;  // <P e_j, e_k>
      if (s == 0.0) {
        gram = Eigen::MatrixXd::Identity(kmax, kmax) - p_spec;
      } else if (s == 1.0) {
        const Eigen::MatrixXd lp = lambda.matrix().asDiagonal() * p_spec;
        gram = Eigen::MatrixXd(lambda.matrix().asDiagonal()) - lp - lp.transpose() +
               minv_b.transpose() * space.stiffness() * minv_b;
      } else {
        const Eigen::MatrixXd err =
            lambda.pow(0.5 * s).matrix().asDiagonal() *
            (Eigen::MatrixXd::Identity(kmax, kmax) - p_spec);
        gram = err.transpose() * err;
      }
      break;
    }
    case ErrorOperator::kRitzProjection: {
      const Eigen::MatrixXd load = b * lambda.matrix().asDiagonal();
      Eigen::MatrixXd sinv(space.dim(), kmax);
      for (Eigen::Index k = 0; k < kmax; ++k) sinv.col(k) = space.solve_stiffness(load.col(k));
      if (s == 1.0) {
        gram = Eigen::MatrixXd(lambda.matrix().asDiagonal()) - load.transpose() * sinv;
      } else if (s == 0.0) {
        const Eigen::MatrixXd cross = b.transpose() * sinv;
        gram = Eigen::MatrixXd::Identity(kmax, kmax) - cross - cross.transpose() +
               sinv.transpose() * space.mass() * sinv;
      } else {
        const Eigen::MatrixXd err = lambda.pow(0.5 * s).matrix().asDiagonal() *
                                    (Eigen::MatrixXd::Identity(kmax, kmax) - b.transpose() * sinv);
        gram = err.transpose() * err;
      }
      break;
    }
    case ErrorOperator::kSemigroup: {
      const Eigen::VectorXd decay_h = (-space.eig_values().array() * t).exp();
      const Eigen::VectorXd decay = (-lambda * t).exp();
      // Modal image of S^h(t) P^h e_k: diag(decay_h) V^T B.
      const Eigen::MatrixXd img = decay_h.asDiagonal() * coupling.modal;
      const Eigen::MatrixXd cross = coupling.modal.transpose() * img * decay.asDiagonal();
      gram = img.transpose() * img - cross - cross.transpose() +
             Eigen::MatrixXd(decay.array().square().matrix().asDiagonal());
      break;
    }
  }
  const Eigen::VectorXd right = lambda.pow(-0.5 * r).matrix();
  gram = right.asDiagonal() * gram * right.asDiagonal();
  gram = 0.5 * (gram + gram.transpose());
  return std::sqrt(std::max(0.0, power_iteration(gram)));
}

// --------------------------------------------------------- CrossMeshNorm

CrossMeshNorm::CrossMeshNorm(const FemSpace& a, const FemSpace& b)
    : dim_a_(a.dim()), dim_b_(b.dim()) {
  const auto& xa = a.mesh().nodes();
  const auto& xb = b.mesh().nodes();
  if (std::abs(xa.back() - xb.back()) > 1e-12 * xa.back())
    throw ArgumentError("meshes cover different intervals");
  std::merge(xa.begin(), xa.end(), xb.begin(), xb.end(), std::back_inserter(union_nodes_));
  const double tol = 1e-14 * xa.back();
  union_nodes_.erase(std::unique(union_nodes_.begin(), union_nodes_.end(),
                                 [tol](double p, double q) { return std::abs(p - q) <= tol; }),
                     union_nodes_.end());
  const auto build = [&](const std::vector<double>& x) {
    std::vector<Stencil> st;
    st.reserve(union_nodes_.size());
    std::size_t e = 0;
    for (double p : union_nodes_) {
      while (e + 2 < x.size() && p > x[e + 1] + tol) ++e;
      const double w = std::clamp((p - x[e]) / (x[e + 1] - x[e]), 0.0, 1.0);
      st.push_back({static_cast<int>(e) - 1, w});
    }
    return st;
  };
  stencil_a_ = build(xa);
  stencil_b_ = build(xb);
}

double CrossMeshNorm::value(const std::vector<Stencil>& st, std::size_t j,
                            const Eigen::Ref<const Eigen::VectorXd>& u) const {
  const Stencil& s = st[j];
  const auto n = u.size();
  const double left = s.left >= 0 ? u[s.left] : 0.0;
  const double right = s.left + 1 < n ? u[s.left + 1] : 0.0;
  return (1.0 - s.weight_right) * left + s.weight_right * right;
}

double CrossMeshNorm::distance(const Eigen::Ref<const Eigen::VectorXd>& u_a,
                               const Eigen::Ref<const Eigen::VectorXd>& u_b) const {
  if (u_a.size() != dim_a_ || u_b.size() != dim_b_) throw IndexError("field size mismatch");
  double acc = 0.0;
  double prev = value(stencil_a_, 0, u_a) - value(stencil_b_, 0, u_b);
  for (std::size_t j = 1; j < union_nodes_.size(); ++j) {
    const double cur = value(stencil_a_, j, u_a) - value(stencil_b_, j, u_b);
    const double len = union_nodes_[j] - union_nodes_[j - 1];
    // Simpson on a linear difference: exact for the quadratic integrand.
    const double mid = 0.5 * (prev + cur);
    acc += len / 6.0 * (prev * prev + 4.0 * mid * mid + cur * cur);
    prev = cur;
  }
  return std::sqrt(acc);
}

Eigen::VectorXd CrossMeshNorm::distances(const Eigen::MatrixXd& u_a, const Eigen::MatrixXd& u_b) const {
  Eigen::VectorXd out(u_a.cols());
  for (Eigen::Index c = 0; c < u_a.cols(); ++c) out[c] = distance(u_a.col(c), u_b.col(c));
  return out;
}

}  // namespace spdefem
