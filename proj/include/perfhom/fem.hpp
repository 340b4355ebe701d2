#ifndef PERFHOM_FEM_HPP
#define PERFHOM_FEM_HPP

#include <array>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <ostream>
#include <vector>

#include "perfhom/geometry.hpp"
#include "perfhom/sparse.hpp"

namespace perfhom {

struct Mat2 {
  double xx = 0.0, yy = 0.0;  // diagonal 2x2 tensor

  std::array<double, 2> apply(const std::array<double, 2>& v) const {
    return {xx * v[0], yy * v[1]};
  }
  static Mat2 identity() { return {1.0, 1.0}; }
  static Mat2 scalar(double c) { return {c, c}; }
};

// Nodal Q1 field on the active nodes of a mesh.
struct FeFunction {
  const Mesh* mesh = nullptr;
  std::vector<double> values;
  double time = 0.0;

  FeFunction() = default;
  explicit FeFunction(const Mesh& m, double fill = 0.0)
      : mesh(&m), values(m.node_count(), fill) {}

  static FeFunction interpolant(
      const Mesh& m, const std::function<double(double, double)>& f) {
    FeFunction g(m);
    for (int a = 0; a < m.node_count(); ++a) {
      auto xy = m.node_coord(a);
      g.values[a] = f(xy[0], xy[1]);
    }
    return g;
  }

  double min_value() const {
    double m = values.empty() ? 0.0 : values[0];
    for (double v : values) m = std::min(m, v);
    return m;
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

// Field on the pore-surface nodes of a mesh.
struct SurfaceFunction {
  const Mesh* mesh = nullptr;
  std::vector<double> values;

  SurfaceFunction() = default;
  explicit SurfaceFunction(const Mesh& m, double fill = 0.0)
      : mesh(&m), values(m.surface_node_count(), fill) {}

  double min_value() const {
    double m = values.empty() ? 0.0 : values[0];
    for (double v : values) m = std::min(m, v);
    return m;
  }
};

enum class ScaleMode { Micro, Cell };

using ScalarEval = std::function<double(double, double)>;   // of cell coord y
using TensorEval = std::function<Mat2(double, double)>;     // of cell coord y

inline double wrap_unit(double y) {
  double w = y - std::floor(y);
  if (w >= 1.0) w = 0.0;
  return w;
}

namespace detail {

// Q1 shape functions on the reference square, node order
// (0,0),(1,0),(1,1),(0,1).
inline std::array<double, 4> shape(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
}
inline std::array<std::array<double, 2>, 4> shape_grad(double xi, double eta) {
  return {{{-(1 - eta), -(1 - xi)},
           {(1 - eta), -xi},
           {eta, xi},
           {-eta, (1 - xi)}}};
}

struct QuadPoint {
  double xi, eta, w;
};

inline const std::array<QuadPoint, 4>& gauss22() {
  static const double g = 0.5 / std::sqrt(3.0);
  static const std::array<QuadPoint, 4> pts = {{{0.5 - g, 0.5 - g, 0.25},
                                                {0.5 + g, 0.5 - g, 0.25},
                                                {0.5 + g, 0.5 + g, 0.25},
                                                {0.5 - g, 0.5 + g, 0.25}}};
  return pts;
}

inline std::array<double, 2> cell_coord(const Mesh& mesh, ScaleMode mode,
                                        double x0, double x1) {
  if (mode == ScaleMode::Cell) return {x0, x1};
  return {wrap_unit(x0 / mesh.epsilon), wrap_unit(x1 / mesh.epsilon)};
}

}  // namespace detail

inline SparseMatrix assemble_mass(const Mesh& mesh) {
  std::vector<Triplet> t;
  t.reserve(mesh.active_elem_count() * 16);
  const double h2 = mesh.h * mesh.h;
  for (int e : mesh.active_elems) {
    int i = e % mesh.n, j = e / mesh.n;
    auto nodes = mesh.elem_nodes(i, j);
    for (const auto& q : detail::gauss22()) {
      auto N = detail::shape(q.xi, q.eta);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          t.push_back({nodes[a], nodes[b], q.w * h2 * N[a] * N[b]});
    }
  }
  return SparseMatrix::from_triplets(mesh.node_count(), std::move(t));
}

// Row-sum (lumped) mass, used as diagonal quadrature weights.
inline std::vector<double> lumped_mass(const Mesh& mesh) {
  std::vector<double> m(mesh.node_count(), 0.0);
  const double q = mesh.h * mesh.h / 4.0;
  for (int e : mesh.active_elems) {
    int i = e % mesh.n, j = e / mesh.n;
    for (int a : mesh.elem_nodes(i, j)) m[a] += q;
  }
  return m;
}

inline SparseMatrix assemble_stiffness(const Mesh& mesh,
                                       const TensorEval& tensor,
                                       ScaleMode mode) {
  std::vector<Triplet> t;
  t.reserve(mesh.active_elem_count() * 16);
  const double h = mesh.h;
  for (int e : mesh.active_elems) {
    int i = e % mesh.n, j = e / mesh.n;
    auto nodes = mesh.elem_nodes(i, j);
    double x0 = i * h, y0 = j * h;
    for (const auto& q : detail::gauss22()) {
      auto G = detail::shape_grad(q.xi, q.eta);
      auto yc = detail::cell_coord(mesh, mode, x0 + q.xi * h, y0 + q.eta * h);
      Mat2 D = tensor(yc[0], yc[1]);
      if (!std::isfinite(D.xx) || !std::isfinite(D.yy))
        throw NonFiniteCoefficient();
      // physical gradient = reference gradient / h; area weight h^2
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          double v = q.w * (D.xx * G[a][0] * G[b][0] + D.yy * G[a][1] * G[b][1]);
          t.push_back({nodes[a], nodes[b], v});
        }
    }
  }
  return SparseMatrix::from_triplets(mesh.node_count(), std::move(t));
}

// Constant full 2x2 tensor variant (effective tensors may carry
// off-diagonal entries).
inline SparseMatrix assemble_stiffness(
    const Mesh& mesh, const std::array<std::array<double, 2>, 2>& D) {
  for (const auto& row : D)
    for (double v : row)
      if (!std::isfinite(v)) throw NonFiniteCoefficient();
  std::vector<Triplet> t;
  t.reserve(mesh.active_elem_count() * 16);
  for (int e : mesh.active_elems) {
    int i = e % mesh.n, j = e / mesh.n;
    auto nodes = mesh.elem_nodes(i, j);
    for (const auto& q : detail::gauss22()) {
      auto G = detail::shape_grad(q.xi, q.eta);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          double v = 0.0;
          for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
              v += D[r][c] * G[a][r] * G[b][c];
          t.push_back({nodes[a], nodes[b], q.w * v});
        }
    }
  }
  return SparseMatrix::from_triplets(mesh.node_count(), std::move(t));
}

// Lumped boundary mass on labeled facets (trapezoid rule): each facet
// endpoint receives (h/2) * weight(node).
inline SparseMatrix assemble_boundary_mass(
    const Mesh& mesh, std::initializer_list<FacetLabel> labels,
    const ScalarEval& weight, ScaleMode mode) {
  std::vector<Triplet> t;
  auto wanted = [&](FacetLabel l) {
    for (FacetLabel x : labels)
      if (x == l) return true;
    return false;
  };
  for (const Facet& f : mesh.facets) {
    if (!wanted(f.label)) continue;
    for (int a : {f.n0, f.n1}) {
      auto xy = mesh.node_coord(a);
      auto yc = detail::cell_coord(mesh, mode, xy[0], xy[1]);
      double w = weight(yc[0], yc[1]);
      if (!std::isfinite(w)) throw NonFiniteCoefficient();
      t.push_back({a, a, 0.5 * mesh.h * w});
    }
  }
  return SparseMatrix::from_triplets(mesh.node_count(), std::move(t));
}

inline SparseMatrix assemble_boundary_mass(const Mesh& mesh, FacetLabel label,
                                           const ScalarEval& weight,
                                           ScaleMode mode) {
  return assemble_boundary_mass(mesh, {label}, weight, mode);
}

// ---------------------------------------------------------------------------
// periodic constraints (cell meshes)

struct PeriodicMap {
  std::vector<int> full_to_reduced;
  int n_reduced = 0;
};

inline PeriodicMap make_periodic_map(const Mesh& mesh) {
  if (!mesh.is_cell_mesh || mesh.periodic_pairs.empty()) throw NotACellMesh();
  const int n = mesh.node_count();
  std::vector<int> master(n);
  for (int a = 0; a < n; ++a) master[a] = a;
  for (const auto& [m, s] : mesh.periodic_pairs) master[s] = m;
  PeriodicMap map;
  map.full_to_reduced.assign(n, -1);
  for (int a = 0; a < n; ++a) {
    if (master[a] == a)
      map.full_to_reduced[a] = map.n_reduced++;
  }
  for (int a = 0; a < n; ++a)
    if (master[a] != a) map.full_to_reduced[a] = map.full_to_reduced[master[a]];
  return map;
}

inline SparseMatrix fold_periodic(const SparseMatrix& A,
                                  const PeriodicMap& map) {
  std::vector<Triplet> t;
  t.reserve(A.nnz());
  const auto& rp = A.row_ptr();
  const auto& cols = A.cols();
  const auto& vals = A.values();
  for (int r = 0; r < A.rows(); ++r)
    for (int k = rp[r]; k < rp[r + 1]; ++k)
      t.push_back({map.full_to_reduced[r], map.full_to_reduced[cols[k]],
                   vals[k]});
  return SparseMatrix::from_triplets(map.n_reduced, std::move(t));
}

inline std::vector<double> fold_vector(const std::vector<double>& v,
                                       const PeriodicMap& map) {
  std::vector<double> r(map.n_reduced, 0.0);
  for (std::size_t a = 0; a < v.size(); ++a) r[map.full_to_reduced[a]] += v[a];
  return r;
}

inline std::vector<double> expand_vector(const std::vector<double>& r,
                                         const PeriodicMap& map) {
  std::vector<double> v(map.full_to_reduced.size(), 0.0);
  for (std::size_t a = 0; a < v.size(); ++a) v[a] = r[map.full_to_reduced[a]];
  return v;
}

// ---------------------------------------------------------------------------
// quadrature norms

inline double l2_norm(const FeFunction& f) {
  const Mesh& mesh = *f.mesh;
  const double h2 = mesh.h * mesh.h;
  double s = 0.0;
  for (int e : mesh.active_elems) {
    int i = e % mesh.n, j = e / mesh.n;
    auto nodes = mesh.elem_nodes(i, j);
    for (const auto& q : detail::gauss22()) {
      auto N = detail::shape(q.xi, q.eta);
      double v = 0.0;
      for (int a = 0; a < 4; ++a) v += N[a] * f.values[nodes[a]];
      s += q.w * h2 * v * v;
    }
  }
  return std::sqrt(s);
}

inline double h1_seminorm(const FeFunction& f) {
  const Mesh& mesh = *f.mesh;
  double s = 0.0;
  for (int e : mesh.active_elems) {
    int i = e % mesh.n, j = e / mesh.n;
    auto nodes = mesh.elem_nodes(i, j);
    for (const auto& q : detail::gauss22()) {
      auto G = detail::shape_grad(q.xi, q.eta);
      double gx = 0.0, gy = 0.0;
      for (int a = 0; a < 4; ++a) {
        gx += G[a][0] * f.values[nodes[a]];
        gy += G[a][1] * f.values[nodes[a]];
      }
      // reference gradient / h, area weight h^2
      s += q.w * (gx * gx + gy * gy);
    }
  }
  return std::sqrt(s);
}

inline double boundary_l2(const FeFunction& f,
                          std::initializer_list<FacetLabel> labels) {
  const Mesh& mesh = *f.mesh;
  auto wanted = [&](FacetLabel l) {
    for (FacetLabel x : labels)
      if (x == l) return true;
    return false;
  };
  double s = 0.0;
  for (const Facet& fc : mesh.facets) {
    if (!wanted(fc.label)) continue;
    double v0 = f.values[fc.n0], v1 = f.values[fc.n1];
    s += 0.5 * mesh.h * (v0 * v0 + v1 * v1);
  }
  return std::sqrt(s);
}

inline double boundary_l2(const FeFunction& f, FacetLabel label) {
  return boundary_l2(f, {label});
}

inline double surface_l2(const SurfaceFunction& f) {
  const Mesh& mesh = *f.mesh;
  double s = 0.0;
  for (const Facet& fc : mesh.facets) {
    if (fc.label == FacetLabel::Outer) continue;
    double v0 = f.values[mesh.surface_index[fc.n0]];
    double v1 = f.values[mesh.surface_index[fc.n1]];
    s += 0.5 * mesh.h * (v0 * v0 + v1 * v1);
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// point evaluation and interpolation

// Bilinear evaluation at (x, y).  Throws NodeOutsideSource when the point
// is outside the domain or inside a deactivated element.
inline double eval_at(const FeFunction& f, double x, double y) {
  const Mesh& mesh = *f.mesh;
  const double h = mesh.h;
  const double tol = 1e-9 * h;
  if (x < -tol || y < -tol || x > mesh.n * h + tol || y > mesh.n * h + tol)
    throw NodeOutsideSource();
  auto locate = [&](double c) {
    int i = static_cast<int>(std::floor(c / h));
    return std::min(std::max(i, 0), mesh.n - 1);
  };
  int i = locate(x), j = locate(y);
  // on a gridline the floor element may be a hole element; try neighbours
  if (!mesh.active(i, j)) {
    bool on_vx = std::abs(x - i * h) <= tol && i > 0;
    bool on_hy = std::abs(y - j * h) <= tol && j > 0;
    if (on_vx && mesh.active(i - 1, j)) i -= 1;
    else if (on_hy && mesh.active(i, j - 1)) j -= 1;
    else if (on_vx && on_hy && mesh.active(i - 1, j - 1)) { i -= 1; j -= 1; }
    else throw NodeOutsideSource();
  }
  double xi = (x - i * h) / h, eta = (y - j * h) / h;
  auto N = detail::shape(xi, eta);
  auto nodes = mesh.elem_nodes(i, j);
  double v = 0.0;
  for (int a = 0; a < 4; ++a) v += N[a] * f.values[nodes[a]];
  return v;
}

inline FeFunction interpolate(const FeFunction& f, const Mesh& target) {
  FeFunction g(target);
  g.time = f.time;
  for (int a = 0; a < target.node_count(); ++a) {
    auto xy = target.node_coord(a);
    g.values[a] = eval_at(f, xy[0], xy[1]);
  }
  return g;
}

// debug text format: one "row col value" triplet per line
inline void write_triplets(std::ostream& os, const SparseMatrix& A) {
  const auto& rp = A.row_ptr();
  for (int r = 0; r < A.rows(); ++r)
    for (int k = rp[r]; k < rp[r + 1]; ++k)
      os << r << ' ' << A.cols()[k] << ' ' << A.values()[k] << '\n';
}

}  // namespace perfhom

#endif
