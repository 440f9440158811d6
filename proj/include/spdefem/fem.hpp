#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "spdefem/spectral.hpp"

namespace spdefem {

/// Partition of [0, L]. Quasi-uniformity (every element at least
/// `kQuasiUniformity * h` long) is checked on construction.
class Mesh1D {
 public:
  static constexpr double kQuasiUniformity = 0.5;

  explicit Mesh1D(std::vector<double> nodes);

  static Mesh1D uniform(double length, int elements);
  /// Uniform mesh with interior nodes displaced by at most
  /// `jitter * (L / elements) / 2`, so element lengths stay within
  /// (1 +- jitter) L / elements; jitter must not exceed 0.25.
  static Mesh1D jittered(double length, int elements, double jitter, std::uint64_t seed);

  const std::vector<double>& nodes() const { return nodes_; }
  double length() const { return nodes_.back(); }
  int elements() const { return static_cast<int>(nodes_.size()) - 1; }
  int interior() const { return elements() - 1; }
  /// Largest element length.
  double h() const { return h_; }
  double min_element() const { return h_min_; }
  bool is_uniform(double tol = 1e-12) const;

 private:
  std::vector<double> nodes_;
  double h_ = 0.0;
  double h_min_ = 0.0;
};

/// A member of V_h, stored as interior nodal values.
struct FemField {
  std::uint64_t space_id = 0;
  Eigen::VectorXd nodal;
};

/// Continuous piecewise-linear elements with homogeneous Dirichlet
/// conditions. Immutable after construction.
class FemSpace {
 public:
  explicit FemSpace(Mesh1D mesh);

  const Mesh1D& mesh() const { return mesh_; }
  std::uint64_t id() const { return id_; }
  int dim() const { return mesh_.interior(); }
  double h() const { return mesh_.h(); }

  const Eigen::MatrixXd& mass() const { return mass_; }
  const Eigen::MatrixXd& stiffness() const { return stiffness_; }
  /// lambda_i^h, ascending.
  const Eigen::VectorXd& eig_values() const { return eig_values_; }
  /// Columns are nodal coefficients of e_i^h, M-orthonormal.
  const Eigen::MatrixXd& eig_vectors() const { return eig_vectors_; }
  /// V^T M: nodal values to discrete-eigenbasis coefficients.
  const Eigen::MatrixXd& to_modal() const { return to_modal_; }

  FemField zero() const;
  FemField field(Eigen::VectorXd nodal) const;
  /// Nodal interpolant of f.
  FemField interpolate(const std::function<double(double)>& f) const;
  void check(const FemField& v) const;

  Eigen::VectorXd modal(const FemField& v) const;
  FemField from_modal(const Eigen::VectorXd& c) const;

  double inner(const FemField& u, const FemField& v) const;
  double l2_norm(const FemField& v) const;
  double sup_norm(const FemField& v) const;
  double evaluate(const FemField& v, double x) const;

  Eigen::VectorXd solve_mass(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd solve_stiffness(const Eigen::VectorXd& rhs) const;
  /// Solves (M + dt S) x = rhs.
  Eigen::VectorXd solve_shifted(double dt, const Eigen::VectorXd& rhs) const;

 private:
  Mesh1D mesh_;
  std::uint64_t id_;
  Eigen::MatrixXd mass_, stiffness_;
  Eigen::VectorXd eig_values_;
  Eigen::MatrixXd eig_vectors_, to_modal_;
};

FemSpace assemble(const Mesh1D& mesh);

/// Inner products of hat functions with the continuous sine modes.
struct ModeCoupling {
  /// B(i, k-1) = <e_k, phi_i>.
  Eigen::MatrixXd hat_sine;
  /// E(i, k-1) = <e_k, e_i^h> = (V^T B)(i, k-1).
  Eigen::MatrixXd modal;

  static ModeCoupling build(const FemSpace& space, const SpectralBasis& basis);
};

/// <e_k, phi> for the hat function centred at node b with neighbours a < b < c.
double hat_sine_integral(double a, double b, double c, double length, int k);

FemField l2_project(const FemSpace& space, const ModeCoupling& coupling, const SpectralCoeffs& x);
FemField l2_project(const FemSpace& space, const SpectralBasis& basis, const SpectralCoeffs& x);
FemField ritz_project(const FemSpace& space, const SpectralBasis& basis, const ModeCoupling& coupling,
                      const SpectralCoeffs& x);
FemField ritz_project(const FemSpace& space, const SpectralBasis& basis, const SpectralCoeffs& x);
/// Spectral coefficients <v, e_k> of a V_h function.
SpectralCoeffs to_spectral(const FemSpace& space, const ModeCoupling& coupling, const FemField& v);

FemField fem_semigroup_apply(const FemSpace& space, double t, const FemField& v);
FemField fem_fractional_apply(const FemSpace& space, double r, const FemField& v);

enum class ErrorOperator { kL2Projection, kRitzProjection, kSemigroup };

/// Spectral norm of A^{s/2}(I - P^h)A^{-r/2}, A^{s/2}(I - R^h)A^{-r/2} or
/// G^h(t) A^{-r/2} = (S^h(t)P^h - S(t))A^{-r/2} on span{e_k, k <= k_max},
/// by power iteration on the Gram matrix. `t` is used by kSemigroup only,
/// which requires s = 0.
double operator_error_norm(const FemSpace& space, const SpectralBasis& basis, double s, double r,
                           ErrorOperator which, double t = 0.0);

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
double power_iteration(const Eigen::MatrixXd& gram, double rel_tol = 1e-10, int max_iter = 50000);

/// L2 distance between fields on two different meshes of the same interval,
/// integrated exactly on the union of both node sets.
class CrossMeshNorm {
 public:
  CrossMeshNorm(const FemSpace& a, const FemSpace& b);

  double distance(const Eigen::Ref<const Eigen::VectorXd>& u_a,
                  const Eigen::Ref<const Eigen::VectorXd>& u_b) const;
  /// Column-wise distances.
  Eigen::VectorXd distances(const Eigen::MatrixXd& u_a, const Eigen::MatrixXd& u_b) const;

 private:
  struct Stencil {
    int left;  // interior index of the left node, -1 for the boundary
    double weight_right;
  };
  double value(const std::vector<Stencil>& st, std::size_t j,
               const Eigen::Ref<const Eigen::VectorXd>& u) const;

  std::vector<double> union_nodes_;
  std::vector<Stencil> stencil_a_, stencil_b_;
  int dim_a_, dim_b_;
};

}  // namespace spdefem
