#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "twophase/errors.hpp"
#include "twophase/mesh.hpp"

namespace twophase {

struct Disk {
  double cx = 0, cy = 0, r = 0;
};

struct Rect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

using Shape = std::variant<Disk, Rect>;

inline bool contains(const Shape& s, double x, double y) {
  if (const auto* d = std::get_if<Disk>(&s)) {
    const double dx = x - d->cx, dy = y - d->cy;
    return dx * dx + dy * dy <= d->r * d->r;
  }
  const auto& r = std::get<Rect>(s);
  return x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1;
}

/// Characteristic function of the union of `shapes`, sampled at element
/// centroids.
template <typename Scalar>
ElementField<Scalar> rasterize(const Mesh<Scalar>& mesh, const std::vector<Shape>& shapes) {
  for (const auto& s : shapes) {
    if (const auto* d = std::get_if<Disk>(&s); d && !(d->r > 0)) throw InputError("disk radius must be positive");
    if (const auto* r = std::get_if<Rect>(&s); r && !(r->x0 <= r->x1 && r->y0 <= r->y1)) {
      throw InputError("rectangle corners must satisfy x0 <= x1 and y0 <= y1");
    }
  }
  ElementField<Scalar> chi = ElementField<Scalar>::Zero(mesh.n_elems());
  for (Eigen::Index t = 0; t < mesh.n_elems(); ++t) {
    const auto c = mesh.centroid(t);
    for (const auto& s : shapes) {
      if (contains(s, static_cast<double>(c[0]), static_cast<double>(c[1]))) {
        chi[t] = 1;
        break;
      }
    }
  }
  return chi;
}

/// Independent 0/1 element values with P(1) = fraction, reproducible from
/// the seed on every platform.
template <typename Scalar>
ElementField<Scalar> random_chi(const Mesh<Scalar>& mesh, std::uint64_t seed, double fraction = 0.5) {
  if (!(fraction >= 0 && fraction <= 1)) throw InputError("random fill fraction must lie in [0,1]");
  std::mt19937_64 gen(seed);
  ElementField<Scalar> chi(mesh.n_elems());
  for (Eigen::Index t = 0; t < chi.size(); ++t) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    chi[t] = u < fraction ? Scalar(1) : Scalar(0);
  }
  return chi;
}

}  // namespace twophase
