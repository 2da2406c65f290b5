#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "twophase/errors.hpp"

namespace twophase {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Per-node values of a P1 field.
template <typename Scalar>
using NodalField = Vector<Scalar>;

/// Per-triangle values (piecewise-constant field).
template <typename Scalar>
using ElementField = Vector<Scalar>;

using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

template <typename Scalar>
class Mesh;

template <typename Scalar>
Mesh<Scalar> make_mesh(typename Mesh<Scalar>::Points nodes, Triangles triangles);

/// Conforming 2D triangulation with topological boundary tagging and
/// precomputed P1 element geometry.
///
/// Instances are built through make_mesh() (or the generators/readers that
/// call it), which orients every triangle counter-clockwise, detects the
/// boundary from single-owner edges and fills areas and basis gradients.
template <typename Scalar>
class Mesh {
 public:
  using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;
  using BasisGradient = Eigen::Matrix<Scalar, 3, 2>;

  Mesh() = default;

  Eigen::Index n_nodes() const { return nodes_.rows(); }
  Eigen::Index n_elems() const { return triangles_.rows(); }

  const Points& nodes() const { return nodes_; }
  const Triangles& triangles() const { return triangles_; }

  /// Sorted indices of nodes on single-owner edges.
  const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
  bool is_boundary(Eigen::Index node) const { return on_boundary_[node] != 0; }

  const ElementField<Scalar>& areas() const { return area_; }
  Scalar area(Eigen::Index elem) const { return area_[elem]; }
  const BasisGradient& basis_gradient(Eigen::Index elem) const { return grad_[elem]; }

  Scalar measure() const { return area_.sum(); }

  Eigen::Matrix<Scalar, 1, 2> centroid(Eigen::Index elem) const {
    return (nodes_.row(triangles_(elem, 0)) + nodes_.row(triangles_(elem, 1)) +
            nodes_.row(triangles_(elem, 2))) /
           Scalar(3);
  }

  template <typename Other>
  Mesh<Other> cast() const;

  template <typename S>
  friend Mesh<S> make_mesh(typename Mesh<S>::Points nodes, Triangles triangles);

 private:
  template <typename>
  friend class Mesh;

  Points nodes_;
  Triangles triangles_;
  std::vector<int> boundary_nodes_;
  std::vector<char> on_boundary_;
  ElementField<Scalar> area_;
  std::vector<BasisGradient> grad_;

  void compute_geometry();
  void detect_boundary();
};

/// Fills areas and basis gradients; flips clockwise triangles. Throws
/// MeshError naming the first degenerate element.
template <typename Scalar>
void Mesh<Scalar>::compute_geometry() {
  const Eigen::Index ne = triangles_.rows();
  area_.resize(ne);
  grad_.resize(static_cast<std::size_t>(ne));
  for (Eigen::Index t = 0; t < ne; ++t) {
    const auto p0 = nodes_.row(triangles_(t, 0));
    const auto p1 = nodes_.row(triangles_(t, 1));
    const auto p2 = nodes_.row(triangles_(t, 2));
    Scalar det = (p1(0) - p0(0)) * (p2(1) - p0(1)) - (p2(0) - p0(0)) * (p1(1) - p0(1));
    if (!(std::abs(det) > Scalar(0)) || !std::isfinite(static_cast<double>(det))) {
      throw MeshError("degenerate triangle " + std::to_string(t) + " (zero area)");
    }
    if (det < 0) {
      std::swap(triangles_(t, 1), triangles_(t, 2));
      det = -det;
    }
    const auto a = nodes_.row(triangles_(t, 0));
    const auto b = nodes_.row(triangles_(t, 1));
    const auto c = nodes_.row(triangles_(t, 2));
    area_[t] = det / 2;
    // grad phi_i = rot(opposite edge) / det
    BasisGradient& g = grad_[static_cast<std::size_t>(t)];
    g(0, 0) = (b(1) - c(1)) / det;
    g(0, 1) = (c(0) - b(0)) / det;
    g(1, 0) = (c(1) - a(1)) / det;
    g(1, 1) = (a(0) - c(0)) / det;
    g(2, 0) = (a(1) - b(1)) / det;
    g(2, 1) = (b(0) - a(0)) / det;
  }
}

template <typename Scalar>
void Mesh<Scalar>::detect_boundary() {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(3 * triangles_.rows()));
  for (Eigen::Index t = 0; t < triangles_.rows(); ++t) {
    for (int k = 0; k < 3; ++k) {
      int a = triangles_(t, k);
      int b = triangles_(t, (k + 1) % 3);
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  on_boundary_.assign(static_cast<std::size_t>(nodes_.rows()), 0);
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j] == edges[i]) ++j;
    if (j - i == 1) {
      on_boundary_[static_cast<std::size_t>(edges[i].first)] = 1;
      on_boundary_[static_cast<std::size_t>(edges[i].second)] = 1;
    } else if (j - i > 2) {
      throw MeshError("non-manifold edge (" + std::to_string(edges[i].first) + ", " +
                      std::to_string(edges[i].second) + ") shared by " +
                      std::to_string(j - i) + " triangles");
    }
    i = j;
  }
  boundary_nodes_.clear();
  for (std::size_t n = 0; n < on_boundary_.size(); ++n) {
    if (on_boundary_[n]) boundary_nodes_.push_back(static_cast<int>(n));
  }
}

template <typename Scalar>
Mesh<Scalar> make_mesh(typename Mesh<Scalar>::Points nodes, Triangles triangles) {
  if (triangles.rows() == 0) throw MeshError("mesh has no triangles");
  for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const int v = triangles(t, k);
      if (v < 0 || v >= nodes.rows()) {
        throw MeshError("triangle " + std::to_string(t) + " references node " +
                        std::to_string(v) + " out of range");
      }
    }
  }
  Mesh<Scalar> mesh;
  mesh.nodes_ = std::move(nodes);
  mesh.triangles_ = std::move(triangles);
  mesh.compute_geometry();
  mesh.detect_boundary();
  return mesh;
}

template <typename Scalar>
template <typename Other>
Mesh<Other> Mesh<Scalar>::cast() const {
  return make_mesh<Other>(nodes_.template cast<Other>(), triangles_);
}

/// Structured triangulation of [0,1]^2 with nx*ny cells. The cell diagonal
/// alternates in a checkerboard pattern so the mesh keeps the symmetries of
/// the square when nx and ny are even.
template <typename Scalar = double>
Mesh<Scalar> generate_unit_square(int nx, int ny) {
  if (nx < 1 || ny < 1) throw MeshError("generate_unit_square: nx and ny must be >= 1");
  typename Mesh<Scalar>::Points nodes((nx + 1) * (ny + 1), 2);
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      nodes(j * (nx + 1) + i, 0) = Scalar(i) / Scalar(nx);
      nodes(j * (nx + 1) + i, 1) = Scalar(j) / Scalar(ny);
    }
  }
  Triangles tris(2 * nx * ny, 3);
  Eigen::Index t = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int n00 = j * (nx + 1) + i;
      const int n10 = n00 + 1;
      const int n01 = n00 + (nx + 1);
      const int n11 = n01 + 1;
      if ((i + j) % 2 == 0) {
        tris.row(t++) << n00, n10, n11;
        tris.row(t++) << n00, n11, n01;
      } else {
        tris.row(t++) << n00, n10, n01;
        tris.row(t++) << n10, n11, n01;
      }
    }
  }
  return make_mesh<Scalar>(std::move(nodes), std::move(tris));
}

/// Applies a node relabelling: new node `perm[i]` is old node `i`.
template <typename Scalar>
Mesh<Scalar> permute_nodes(const Mesh<Scalar>& mesh, const std::vector<int>& perm) {
  if (static_cast<Eigen::Index>(perm.size()) != mesh.n_nodes()) {
    throw MeshError("permute_nodes: permutation size mismatch");
  }
  typename Mesh<Scalar>::Points nodes(mesh.n_nodes(), 2);
  for (Eigen::Index i = 0; i < mesh.n_nodes(); ++i) nodes.row(perm[i]) = mesh.nodes().row(i);
  Triangles tris = mesh.triangles();
  for (Eigen::Index t = 0; t < tris.rows(); ++t) {
    for (int k = 0; k < 3; ++k) tris(t, k) = perm[tris(t, k)];
  }
  return make_mesh<Scalar>(std::move(nodes), std::move(tris));
}

}  // namespace twophase
