#ifndef PERFHOM_GEOMETRY_HPP
#define PERFHOM_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "perfhom/errors.hpp"

namespace perfhom {

enum class HoleFace : int { Left = 0, Right = 1, Bottom = 2, Top = 3 };

// The representative unit cell Y = (0,1)^2 with a rectangular hole Y0.
// Gamma = boundary of Y0, split into a Robin part (faces listed in
// robin_faces) and a Neumann part (the remaining faces).
struct CellGeometry {
  bool has_hole = true;
  std::array<double, 2> hole_lo{0.25, 0.25};
  std::array<double, 2> hole_hi{0.75, 0.75};
  std::set<HoleFace> robin_faces{HoleFace::Top, HoleFace::Right};

  double hole_area() const {
    if (!has_hole) return 0.0;
    return (hole_hi[0] - hole_lo[0]) * (hole_hi[1] - hole_lo[1]);
  }
  double y1_measure() const { return 1.0 - hole_area(); }

  double face_length(HoleFace f) const {
    if (!has_hole) return 0.0;
    switch (f) {
      case HoleFace::Left:
      case HoleFace::Right:
        return hole_hi[1] - hole_lo[1];
      default:
        return hole_hi[0] - hole_lo[0];
    }
  }
  double gamma_measure() const {
    if (!has_hole) return 0.0;
    return 2.0 * (hole_hi[0] - hole_lo[0]) + 2.0 * (hole_hi[1] - hole_lo[1]);
  }
  double gamma_r_measure() const {
    double s = 0.0;
    for (HoleFace f : robin_faces) s += face_length(f);
    return s;
  }
  double gamma_n_measure() const { return gamma_measure() - gamma_r_measure(); }

  bool is_robin(HoleFace f) const { return robin_faces.count(f) > 0; }
};

inline CellGeometry build_cell_geometry(std::array<double, 2> hole_lo,
                                        std::array<double, 2> hole_hi,
                                        std::set<HoleFace> robin_faces) {
  for (int d = 0; d < 2; ++d) {
    if (!(0.0 < hole_lo[d] && hole_lo[d] < hole_hi[d] && hole_hi[d] < 1.0))
      throw HoleTouchesCellBoundary();
  }
  if (robin_faces.empty()) throw EmptyRobinPart();
  if (robin_faces.size() == 4) throw EmptyNeumannPart();
  CellGeometry c;
  c.has_hole = true;
  c.hole_lo = hole_lo;
  c.hole_hi = hole_hi;
  c.robin_faces = std::move(robin_faces);
  return c;
}

inline CellGeometry cell_geometry_without_hole() {
  CellGeometry c;
  c.has_hole = false;
  c.robin_faces.clear();
  return c;
}

// Omega = (0,1)^2 minus the union of eps-scaled hole copies.
struct PerforatedDomain {
  double epsilon = 0.25;
  CellGeometry cell;
  int cells_per_axis = 4;

  int hole_count() const {
    return cell.has_hole ? cells_per_axis * cells_per_axis : 0;
  }
  double omega_eps_measure() const { return cell.y1_measure(); }
  double gamma_eps_measure() const { return cell.gamma_measure() / epsilon; }
  double gamma_r_eps_measure() const {
    return cell.gamma_r_measure() / epsilon;
  }
};

inline PerforatedDomain make_perforated_domain(double epsilon,
                                               CellGeometry cell) {
  if (!(epsilon > 0.0)) throw EpsilonNotUnitFraction();
  double inv = 1.0 / epsilon;
  int m = static_cast<int>(std::lround(inv));
  if (m < 1 || std::abs(m * epsilon - 1.0) > 1e-12)
    throw EpsilonNotUnitFraction();
  PerforatedDomain d;
  d.epsilon = epsilon;
  d.cell = std::move(cell);
  d.cells_per_axis = m;
  return d;
}

enum class FacetLabel : int { Outer = 0, GammaN = 1, GammaR = 2 };

struct Facet {
  int n0, n1;        // active node indices of the endpoints
  FacetLabel label;
};

// Structured quad mesh of the unit square (cell mesh) or of Omega^eps,
// with hole elements deactivated.  Hole boundaries coincide with grid
// lines, so no cut cells exist.
struct Mesh {
  int n = 0;       // subdivisions per axis
  double h = 0.0;  // grid spacing
  bool is_cell_mesh = false;
  double epsilon = 1.0;  // scale (1 for cell meshes)

  std::vector<std::uint8_t> elem_active;  // n*n
  std::vector<int> node_id;               // (n+1)^2 grid node -> active id, -1
  std::vector<int> active_grid;           // active id -> grid node
  std::vector<int> active_elems;          // flat element ids, active only
  std::vector<Facet> facets;
  std::vector<std::pair<int, int>> periodic_pairs;  // (master, slave)
  std::vector<int> surface_nodes;   // active ids incident to pore facets
  std::vector<int> surface_index;   // active id -> surface id, -1

  int grid_node(int i, int j) const { return j * (n + 1) + i; }
  int elem_index(int i, int j) const { return j * n + i; }
  bool active(int i, int j) const { return elem_active[elem_index(i, j)] != 0; }

  int node_count() const { return static_cast<int>(active_grid.size()); }
  int active_elem_count() const { return static_cast<int>(active_elems.size()); }
  int surface_node_count() const { return static_cast<int>(surface_nodes.size()); }

  std::array<double, 2> node_coord(int active_id) const {
    int g = active_grid[active_id];
    int i = g % (n + 1), j = g / (n + 1);
    return {i * h, j * h};
  }

  // the four active node ids of element (i,j), counterclockwise
  std::array<int, 4> elem_nodes(int i, int j) const {
    return {node_id[grid_node(i, j)], node_id[grid_node(i + 1, j)],
            node_id[grid_node(i + 1, j + 1)], node_id[grid_node(i, j + 1)]};
  }

  double active_area() const { return active_elem_count() * h * h; }

  double facet_length_total(FacetLabel label) const {
    double s = 0.0;
    for (const Facet& f : facets)
      if (f.label == label) s += h;
    return s;
  }
  double pore_length_total() const {
    return facet_length_total(FacetLabel::GammaN) +
           facet_length_total(FacetLabel::GammaR);
  }
};

namespace detail {

inline int require_aligned(double coord, int n) {
  double scaled = coord * n;
  int k = static_cast<int>(std::lround(scaled));
  if (std::abs(scaled - k) > 1e-9) throw HoleNotGridAligned();
  return k;
}

// Which face of the hole rectangle does the facet between active element
// (i,j) and its inactive neighbour lie on?  `dir` is 0:left 1:right
// 2:below 3:above relative to the active element.
inline HoleFace neighbour_face(int dir) {
  switch (dir) {
    case 0: return HoleFace::Right;   // inactive neighbour to the left
    case 1: return HoleFace::Left;
    case 2: return HoleFace::Top;
    default: return HoleFace::Bottom;
  }
}

inline void finalize_nodes_and_facets(Mesh& mesh, const CellGeometry& cell) {
  const int n = mesh.n;
  mesh.node_id.assign((n + 1) * (n + 1), -1);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (!mesh.active(i, j)) continue;
      mesh.active_elems.push_back(mesh.elem_index(i, j));
      mesh.node_id[mesh.grid_node(i, j)] = 0;
      mesh.node_id[mesh.grid_node(i + 1, j)] = 0;
      mesh.node_id[mesh.grid_node(i + 1, j + 1)] = 0;
      mesh.node_id[mesh.grid_node(i, j + 1)] = 0;
    }
  for (int g = 0; g < (n + 1) * (n + 1); ++g) {
    if (mesh.node_id[g] == 0) {
      mesh.node_id[g] = static_cast<int>(mesh.active_grid.size());
      mesh.active_grid.push_back(g);
    }
  }

  auto facet_label = [&](int dir) {
    HoleFace face = neighbour_face(dir);
    return cell.is_robin(face) ? FacetLabel::GammaR : FacetLabel::GammaN;
  };

  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (!mesh.active(i, j)) continue;
      // left edge
      if (i == 0) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i, j)],
                               mesh.node_id[mesh.grid_node(i, j + 1)],
                               FacetLabel::Outer});
      } else if (!mesh.active(i - 1, j)) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i, j)],
                               mesh.node_id[mesh.grid_node(i, j + 1)],
                               facet_label(0)});
      }
      // right edge
      if (i == n - 1) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i + 1, j)],
                               mesh.node_id[mesh.grid_node(i + 1, j + 1)],
                               FacetLabel::Outer});
      } else if (!mesh.active(i + 1, j)) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i + 1, j)],
                               mesh.node_id[mesh.grid_node(i + 1, j + 1)],
                               facet_label(1)});
      }
      // bottom edge
      if (j == 0) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i, j)],
                               mesh.node_id[mesh.grid_node(i + 1, j)],
                               FacetLabel::Outer});
      } else if (!mesh.active(i, j - 1)) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i, j)],
                               mesh.node_id[mesh.grid_node(i + 1, j)],
                               facet_label(2)});
      }
      // top edge
      if (j == n - 1) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i, j + 1)],
                               mesh.node_id[mesh.grid_node(i + 1, j + 1)],
                               FacetLabel::Outer});
      } else if (!mesh.active(i, j + 1)) {
        mesh.facets.push_back({mesh.node_id[mesh.grid_node(i, j + 1)],
                               mesh.node_id[mesh.grid_node(i + 1, j + 1)],
                               facet_label(3)});
      }
    }

  mesh.surface_index.assign(mesh.node_count(), -1);
  for (const Facet& f : mesh.facets) {
    if (f.label == FacetLabel::Outer) continue;
    for (int a : {f.n0, f.n1}) {
      if (mesh.surface_index[a] < 0) {
        mesh.surface_index[a] = static_cast<int>(mesh.surface_nodes.size());
        mesh.surface_nodes.push_back(a);
      }
    }
  }
}

}  // namespace detail

// Mesh of Y1 = Y \ Y0 with periodic pairing across opposite faces of Y.
inline Mesh build_cell_mesh(const CellGeometry& cell, int n) {
  Mesh mesh;
  mesh.n = n;
  mesh.h = 1.0 / n;
  mesh.is_cell_mesh = true;
  mesh.epsilon = 1.0;
  mesh.elem_active.assign(n * n, 1);

  if (cell.has_hole) {
    int i0 = detail::require_aligned(cell.hole_lo[0], n);
    int i1 = detail::require_aligned(cell.hole_hi[0], n);
    int j0 = detail::require_aligned(cell.hole_lo[1], n);
    int j1 = detail::require_aligned(cell.hole_hi[1], n);
    for (int j = j0; j < j1; ++j)
      for (int i = i0; i < i1; ++i) mesh.elem_active[mesh.elem_index(i, j)] = 0;
  }
  detail::finalize_nodes_and_facets(mesh, cell);

  // periodic identification: right -> left, top -> bottom, corner -> origin
  for (int j = 0; j < n; ++j)
    mesh.periodic_pairs.emplace_back(mesh.node_id[mesh.grid_node(0, j)],
                                     mesh.node_id[mesh.grid_node(n, j)]);
  for (int i = 0; i < n; ++i)
    mesh.periodic_pairs.emplace_back(mesh.node_id[mesh.grid_node(i, 0)],
                                     mesh.node_id[mesh.grid_node(i, n)]);
  mesh.periodic_pairs.emplace_back(mesh.node_id[mesh.grid_node(0, 0)],
                                   mesh.node_id[mesh.grid_node(n, n)]);
  return mesh;
}

// Mesh of Omega^eps with h = eps / n_per_cell.
inline Mesh build_perforated_mesh(const PerforatedDomain& domain,
                                  int n_per_cell) {
  const int m = domain.cells_per_axis;
  const int n = m * n_per_cell;
  Mesh mesh;
  mesh.n = n;
  mesh.h = domain.epsilon / n_per_cell;
  mesh.is_cell_mesh = false;
  mesh.epsilon = domain.epsilon;
  mesh.elem_active.assign(n * n, 1);

  if (domain.cell.has_hole) {
    int i0 = detail::require_aligned(domain.cell.hole_lo[0], n_per_cell);
    int i1 = detail::require_aligned(domain.cell.hole_hi[0], n_per_cell);
    int j0 = detail::require_aligned(domain.cell.hole_lo[1], n_per_cell);
    int j1 = detail::require_aligned(domain.cell.hole_hi[1], n_per_cell);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        int il = i % n_per_cell, jl = j % n_per_cell;
        if (il >= i0 && il < i1 && jl >= j0 && jl < j1)
          mesh.elem_active[mesh.elem_index(i, j)] = 0;
      }
  }
  detail::finalize_nodes_and_facets(mesh, domain.cell);
  return mesh;
}

}  // namespace perfhom

#endif
