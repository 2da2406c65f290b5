#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "twophase/errors.hpp"
#include "twophase/mesh.hpp"

namespace twophase {

template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar>;

template <typename Scalar>
using ElementGradients = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Node -> unknown numbering. `free` numbers interior nodes only
/// (homogeneous Dirichlet conditions by elimination); `all` keeps every node.
class DofMap {
 public:
  template <typename Scalar>
  static DofMap free(const Mesh<Scalar>& mesh) {
    DofMap map;
    map.slot_.assign(static_cast<std::size_t>(mesh.n_nodes()), -1);
    for (Eigen::Index n = 0; n < mesh.n_nodes(); ++n) {
      if (!mesh.is_boundary(n)) {
        map.slot_[static_cast<std::size_t>(n)] = static_cast<int>(map.nodes_.size());
        map.nodes_.push_back(static_cast<int>(n));
      }
    }
    return map;
  }

  template <typename Scalar>
  static DofMap all(const Mesh<Scalar>& mesh) {
    DofMap map;
    for (Eigen::Index n = 0; n < mesh.n_nodes(); ++n) {
      map.slot_.push_back(static_cast<int>(n));
      map.nodes_.push_back(static_cast<int>(n));
    }
    return map;
  }

  /// Unknown index of a node, or -1 for an eliminated node.
  int slot(Eigen::Index node) const { return slot_[static_cast<std::size_t>(node)]; }
  int node(Eigen::Index slot) const { return nodes_[static_cast<std::size_t>(slot)]; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(nodes_.size()); }
  Eigen::Index n_nodes() const { return static_cast<Eigen::Index>(slot_.size()); }

  template <typename Derived>
  Vector<typename Derived::Scalar> restrict(const Eigen::MatrixBase<Derived>& full) const {
    Vector<typename Derived::Scalar> out(size());
    for (Eigen::Index i = 0; i < size(); ++i) out[i] = full[node(i)];
    return out;
  }

  /// Extends an unknown vector by zero on eliminated nodes.
  template <typename Derived>
  Vector<typename Derived::Scalar> prolong(const Eigen::MatrixBase<Derived>& reduced) const {
    Vector<typename Derived::Scalar> out = Vector<typename Derived::Scalar>::Zero(n_nodes());
    for (Eigen::Index i = 0; i < size(); ++i) out[node(i)] = reduced[i];
    return out;
  }

 private:
  std::vector<int> slot_;
  std::vector<int> nodes_;
};

namespace detail {

template <typename Scalar>
void check_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw InputError(std::string(what) + ": size " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

template <typename Scalar, typename LocalFn>
SparseMatrix<Scalar> assemble(const Mesh<Scalar>& mesh, const DofMap& dofs, LocalFn&& local) {
  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(static_cast<std::size_t>(9 * mesh.n_elems()));
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    const Eigen::Matrix<Scalar, 3, 3> ke = local(t);
    for (int a = 0; a < 3; ++a) {
      const int ia = dofs.slot(mesh.triangles()(t, a));
      if (ia < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const int ib = dofs.slot(mesh.triangles()(t, b));
        if (ib < 0) continue;
        triplets.emplace_back(ia, ib, ke(a, b));
      }
    }
  }
  SparseMatrix<Scalar> m(dofs.size(), dofs.size());
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

/// Stiffness matrix of the form sum_T coeff_T |T| grad(phi_a).grad(phi_b).
template <typename Scalar>
SparseMatrix<Scalar> assemble_stiffness(const Mesh<Scalar>& mesh, const ElementField<Scalar>& coeff,
                                        const DofMap& dofs) {
  detail::check_size<Scalar>(coeff.size(), mesh.n_elems(), "assemble_stiffness coefficient");
  for (Eigen::Index t = 0; t < coeff.size(); ++t) {
    if (!(coeff[t] >= 0)) {
      throw InputError("assemble_stiffness: negative or non-finite coefficient on element " +
                       std::to_string(t));
    }
  }
  return detail::assemble(mesh, dofs, [&](Eigen::Index t) {
    const auto& g = mesh.basis_gradient(t);
    return Eigen::Matrix<Scalar, 3, 3>(coeff[t] * mesh.area(t) * g * g.transpose());
  });
}

template <typename Scalar>
SparseMatrix<Scalar> assemble_stiffness(const Mesh<Scalar>& mesh, const ElementField<Scalar>& coeff) {
  return assemble_stiffness(mesh, coeff, DofMap::free(mesh));
}

/// Consistent P1 mass matrix, (|T|/12)[[2,1,1],[1,2,1],[1,1,2]] per element.
template <typename Scalar>
SparseMatrix<Scalar> assemble_mass(const Mesh<Scalar>& mesh, const DofMap& dofs) {
  Eigen::Matrix<Scalar, 3, 3> ref;
  ref << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  return detail::assemble(mesh, dofs, [&](Eigen::Index t) {
    return Eigen::Matrix<Scalar, 3, 3>(mesh.area(t) / Scalar(12) * ref);
  });
}

template <typename Scalar>
SparseMatrix<Scalar> assemble_mass(const Mesh<Scalar>& mesh) {
  return assemble_mass(mesh, DofMap::free(mesh));
}

/// Row sums of the full mass matrix: |T|/3 from every adjacent triangle.
template <typename Scalar>
NodalField<Scalar> lumped_mass(const Mesh<Scalar>& mesh) {
  NodalField<Scalar> m = NodalField<Scalar>::Zero(mesh.n_nodes());
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    for (int a = 0; a < 3; ++a) m[mesh.triangles()(t, a)] += mesh.area(t) / Scalar(3);
  }
  return m;
}

/// Gradient of the P1 interpolant of `f`, one row per triangle.
template <typename Scalar>
ElementGradients<Scalar> element_gradient(const Mesh<Scalar>& mesh, const NodalField<Scalar>& f) {
  detail::check_size<Scalar>(f.size(), mesh.n_nodes(), "element_gradient field");
  ElementGradients<Scalar> grad(mesh.n_elems(), 2);
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    const Eigen::Matrix<Scalar, 3, 1> fl(f[mesh.triangles()(t, 0)], f[mesh.triangles()(t, 1)],
                                         f[mesh.triangles()(t, 2)]);
    grad.row(t) = (mesh.basis_gradient(t).transpose() * fl).transpose();
  }
  return grad;
}

/// Weak form of div(alpha*theta*grad g) tested against the free basis
/// functions: entry j is -sum_T alpha theta_T |T| grad(g).grad(phi_j).
template <typename Scalar>
Vector<Scalar> divergence_rhs(const Mesh<Scalar>& mesh, const ElementField<Scalar>& theta_elem,
                              const NodalField<Scalar>& g, Scalar alpha, const DofMap& dofs) {
  detail::check_size<Scalar>(theta_elem.size(), mesh.n_elems(), "divergence_rhs density");
  const ElementGradients<Scalar> grad = element_gradient(mesh, g);
  Vector<Scalar> rhs = Vector<Scalar>::Zero(dofs.size());
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    const Scalar w = alpha * theta_elem[t] * mesh.area(t);
    if (w == Scalar(0)) continue;
    const Eigen::Matrix<Scalar, 3, 1> flux = mesh.basis_gradient(t) * grad.row(t).transpose();
    for (int a = 0; a < 3; ++a) {
      const int i = dofs.slot(mesh.triangles()(t, a));
      if (i >= 0) rhs[i] -= w * flux[a];
    }
  }
  return rhs;
}

template <typename Scalar>
Vector<Scalar> divergence_rhs(const Mesh<Scalar>& mesh, const ElementField<Scalar>& theta_elem,
                              const NodalField<Scalar>& g, Scalar alpha) {
  return divergence_rhs(mesh, theta_elem, g, alpha, DofMap::free(mesh));
}

/// Lumped L2 projection of a piecewise-constant field onto P1.
template <typename Scalar>
NodalField<Scalar> nodal_project(const Mesh<Scalar>& mesh, const ElementField<Scalar>& e) {
  detail::check_size<Scalar>(e.size(), mesh.n_elems(), "nodal_project field");
  NodalField<Scalar> num = NodalField<Scalar>::Zero(mesh.n_nodes());
  NodalField<Scalar> den = NodalField<Scalar>::Zero(mesh.n_nodes());
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    const Scalar w = mesh.area(t) / Scalar(3);
    for (int a = 0; a < 3; ++a) {
      num[mesh.triangles()(t, a)] += w * e[t];
      den[mesh.triangles()(t, a)] += w;
    }
  }
  return num.cwiseQuotient(den);
}

/// Per-element vertex average of a nodal field.
template <typename Scalar>
ElementField<Scalar> element_average(const Mesh<Scalar>& mesh, const NodalField<Scalar>& f) {
  detail::check_size<Scalar>(f.size(), mesh.n_nodes(), "element_average field");
  ElementField<Scalar> avg(mesh.n_elems());
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    avg[t] = (f[mesh.triangles()(t, 0)] + f[mesh.triangles()(t, 1)] + f[mesh.triangles()(t, 2)]) /
             Scalar(3);
  }
  return avg;
}

/// Density of the better conductor as seen by the element quadrature:
/// the per-element averages of theta and theta^2.
///
/// Nodal densities give vertex averages; element-resolved densities (e.g. a
/// rasterized characteristic function) give mean_sq = mean^2, so a 0/1
/// element field carries no mixture.
template <typename Scalar>
struct Density {
  ElementField<Scalar> mean;
  ElementField<Scalar> mean_sq;

  static Density from_nodal(const Mesh<Scalar>& mesh, const NodalField<Scalar>& theta) {
    check_range(theta, "nodal density");
    return {element_average(mesh, theta),
            element_average(mesh, NodalField<Scalar>(theta.array().square().matrix()))};
  }

  static Density from_elements(const ElementField<Scalar>& theta) {
    check_range(theta, "element density");
    return {theta, theta.array().square().matrix()};
  }

  /// Pointwise mixture theta(1-theta) integrated by the vertex rule.
  ElementField<Scalar> mixture() const {
    return (mean - mean_sq).cwiseMax(Scalar(0));
  }

  static void check_range(const Vector<Scalar>& theta, const char* what) {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      if (!(theta[i] >= 0 && theta[i] <= 1)) {
        throw InputError(std::string(what) + " out of [0,1] at index " + std::to_string(i));
      }
    }
  }
};

/// Stiffness/mass pair on the free nodes for the alpha-Laplacian.
template <typename Scalar>
struct SparsePencil {
  SparseMatrix<Scalar> K;
  SparseMatrix<Scalar> M;
  DofMap dofs;
  /// Full lumped mass (all nodes); used for discrete integrals of nodal fields.
  NodalField<Scalar> lumped;
  Scalar alpha = 1;

  /// Same pencil with the stiffness replaced.
  SparsePencil with_stiffness(SparseMatrix<Scalar> stiffness) const {
    SparsePencil p = *this;
    p.K = std::move(stiffness);
    return p;
  }
};

template <typename Scalar>
SparsePencil<Scalar> make_pencil(const Mesh<Scalar>& mesh, Scalar alpha) {
  if (!(alpha > 0)) throw InputError("conductivity alpha must be positive");
  SparsePencil<Scalar> p;
  p.dofs = DofMap::free(mesh);
  if (p.dofs.size() == 0) throw MeshError("mesh has no interior nodes");
  p.K = assemble_stiffness(mesh, ElementField<Scalar>(ElementField<Scalar>::Constant(mesh.n_elems(), alpha)), p.dofs);
  p.M = assemble_mass(mesh, p.dofs);
  p.lumped = lumped_mass(mesh);
  p.alpha = alpha;
  return p;
}

}  // namespace twophase
