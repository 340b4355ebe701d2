#ifndef PERFHOM_CELL_HPP
#define PERFHOM_CELL_HPP

#include <array>
#include <cmath>
#include <vector>

#include "perfhom/coefficients.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"

namespace perfhom {

enum class IndexConvention { Paper, Symmetric };

// Periodic zero-mean cell correctors for one coefficient family, one
// solution per direction e_j.
struct CellSolution {
  const Mesh* mesh = nullptr;
  std::array<FeFunction, 2> comp;  // j = 0, 1

  bool trivial() const { return mesh == nullptr; }
};

struct EffectiveCoefficients {
  Mat2 K;                      // no off-diagonal storage is lost: the
  double K_offdiag[2] = {0, 0};  // full 2x2 is (K.xx, od[0]; od[1], K.yy)
  std::vector<Mat2> T;         // per species
  std::vector<double> T_offdiag_01, T_offdiag_10;
  std::vector<Mat2> D;
  std::vector<double> D_offdiag_01, D_offdiag_10;
  std::vector<Mat2> F;
  std::vector<double> F_offdiag_01, F_offdiag_10;
  std::vector<double> A, B;  // |Gamma|/|Y1|-scaled couplings in the u-equation
  std::vector<double> a_mean, b_mean;  // plain surface averages, drive the v ODE
  double heat_loss = 0.0;  // averaged g0 * |Gamma_R| / |Y1|

  std::array<std::array<double, 2>, 2> K_full() const {
    return {{{K.xx, K_offdiag[0]}, {K_offdiag[1], K.yy}}};
  }
  std::array<std::array<double, 2>, 2> D_full(int i) const {
    return {{{D[i].xx, D_offdiag_01[i]}, {D_offdiag_10[i], D[i].yy}}};
  }
  std::array<std::array<double, 2>, 2> T_full(int i) const {
    return {{{T[i].xx, T_offdiag_01[i]}, {T_offdiag_10[i], T[i].yy}}};
  }
  std::array<std::array<double, 2>, 2> F_full(int i) const {
    return {{{F[i].xx, F_offdiag_01[i]}, {F_offdiag_10[i], F[i].yy}}};
  }
};

// Solves, for j = 1, 2, the periodic weak problem
//   integral_{Y1} kappa (grad w_j + e_j) . grad phi dy = 0
// which encodes both the volume equation and the flux condition on the
// hole boundary.  Solutions are normalized to zero mean over Y1.
inline CellSolution solve_cell_problem(const Mesh& cell_mesh,
                                       const TensorFieldSpec& tensor,
                                       double cg_tol = 1e-10) {
  if (!(tensor.min_value() > 0.0)) throw NonElliptic();
  CellSolution cs;
  cs.mesh = &cell_mesh;

  SparseMatrix A = assemble_stiffness(cell_mesh, tensor.as_eval(), ScaleMode::Cell);
  PeriodicMap map = make_periodic_map(cell_mesh);
  SparseMatrix Ar = fold_periodic(A, map);
  SparseMatrix M = assemble_mass(cell_mesh);

  const double h = cell_mesh.h;
  for (int j = 0; j < 2; ++j) {
    // rhs_a = - integral kappa e_j . grad N_a
    std::vector<double> rhs(cell_mesh.node_count(), 0.0);
    for (int e : cell_mesh.active_elems) {
      int ei = e % cell_mesh.n, ej = e / cell_mesh.n;
      auto nodes = cell_mesh.elem_nodes(ei, ej);
      double x0 = ei * h, y0 = ej * h;
      for (const auto& q : detail::gauss22()) {
        auto G = detail::shape_grad(q.xi, q.eta);
        Mat2 D = tensor.eval(x0 + q.xi * h, y0 + q.eta * h);
        double coef = (j == 0) ? D.xx : D.yy;
        for (int a = 0; a < 4; ++a)
          rhs[nodes[a]] -= q.w * h * coef * G[a][j];
      }
    }
    std::vector<double> rr = fold_vector(rhs, map);
    CgResult sol = solve_cg(Ar, rr, cg_tol, -1, CgConstraint::ZeroMean);
    if (!sol.converged) throw NotConverged("cell problem CG did not converge");
    std::vector<double> full = expand_vector(sol.x, map);

    FeFunction w(cell_mesh);
    w.values = std::move(full);
    // normalize to zero mean over Y1 (mass-weighted)
    std::vector<double> Mw = M.apply(w.values);
    double mean = 0.0, area = cell_mesh.active_area();
    for (double v : Mw) mean += v;
    mean /= area;
    for (double& v : w.values) v -= mean;
    cs.comp[j] = std::move(w);
  }
  return cs;
}

namespace detail {

// accumulate E_jk += (1/|Y1|) int c_dir(y) dw^k/dy_j using the given
// derivative-direction component of the diagonal coefficient
inline void corrector_integral(const Mesh& mesh, const TensorFieldSpec& coef,
                               const CellSolution& cs, bool deriv_is_row,
                               std::array<std::array<double, 2>, 2>& out) {
  const double h = mesh.h;
  for (int e : mesh.active_elems) {
    int ei = e % mesh.n, ej = e / mesh.n;
    auto nodes = mesh.elem_nodes(ei, ej);
    double x0 = ei * h, y0 = ej * h;
    for (const auto& q : gauss22()) {
      auto G = shape_grad(q.xi, q.eta);
      Mat2 D = coef.eval(x0 + q.xi * h, y0 + q.eta * h);
      for (int fn = 0; fn < 2; ++fn) {  // cell-function index
        double gx = 0.0, gy = 0.0;
        for (int a = 0; a < 4; ++a) {
          gx += G[a][0] * cs.comp[fn].values[nodes[a]];
          gy += G[a][1] * cs.comp[fn].values[nodes[a]];
        }
        gx *= h;  // (ref grad / h) * h^2 quadrature weight
        gy *= h;
        if (deriv_is_row) {
          out[0][fn] += q.w * D.xx * gx;
          out[1][fn] += q.w * D.yy * gy;
        } else {
          out[fn][0] += q.w * D.xx * gx;
          out[fn][1] += q.w * D.yy * gy;
        }
      }
    }
  }
}

inline Mat2 tensor_average(const Mesh& mesh, const TensorFieldSpec& coef) {
  const double h = mesh.h;
  Mat2 avg{0.0, 0.0};
  for (int e : mesh.active_elems) {
    int ei = e % mesh.n, ej = e / mesh.n;
    double x0 = ei * h, y0 = ej * h;
    for (const auto& q : gauss22()) {
      Mat2 D = coef.eval(x0 + q.xi * h, y0 + q.eta * h);
      avg.xx += q.w * h * h * D.xx;
      avg.yy += q.w * h * h * D.yy;
    }
  }
  return avg;
}

inline double surface_average(const Mesh& mesh, const ScalarFieldSpec& spec,
                              bool robin_only) {
  double s = 0.0;
  for (const Facet& f : mesh.facets) {
    if (f.label == FacetLabel::Outer) continue;
    if (robin_only && f.label != FacetLabel::GammaR) continue;
    for (int a : {f.n0, f.n1}) {
      auto xy = mesh.node_coord(a);
      s += 0.5 * mesh.h * spec.eval(xy[0], xy[1]);
    }
  }
  return s;
}

}  // namespace detail

// Quadrature evaluation of the homogenized coefficient formulas from the
// cell averages and corrector gradients.
inline EffectiveCoefficients effective_tensors(
    const CellSolution& theta_cell, const std::vector<CellSolution>& u_cells,
    const PhysicalParams& params, const CellGeometry& cell,
    const Mesh& cell_mesh,
    IndexConvention convention = IndexConvention::Paper) {
  const double y1 = cell.y1_measure();
  const int N = params.N;
  EffectiveCoefficients eff;

  // K_jk = (1/|Y1|) int kappa_j (delta_jk + d theta^k / dy_j)
  std::array<std::array<double, 2>, 2> Kc{{{0, 0}, {0, 0}}};
  detail::corrector_integral(cell_mesh, params.kappa, theta_cell, true, Kc);
  Mat2 kavg = detail::tensor_average(cell_mesh, params.kappa);
  eff.K = {(kavg.xx + Kc[0][0]) / y1, (kavg.yy + Kc[1][1]) / y1};
  eff.K_offdiag[0] = Kc[0][1] / y1;
  eff.K_offdiag[1] = Kc[1][0] / y1;

  Mat2 tavg = detail::tensor_average(cell_mesh, params.tau);
  for (int i = 0; i < N; ++i) {
    // T^i = T0 I + correction with the displayed derivative index d/dy_i
    // (the species index, wrapped into {1,2}); `symmetric` uses d/dy_k.
    std::array<std::array<double, 2>, 2> Tc{{{0, 0}, {0, 0}}};
    if (convention == IndexConvention::Paper) {
      int di = i % 2;  // wrapped species index as derivative direction
      const double h = cell_mesh.h;
      for (int e : cell_mesh.active_elems) {
        int ei = e % cell_mesh.n, ej = e / cell_mesh.n;
        auto nodes = cell_mesh.elem_nodes(ei, ej);
        double x0 = ei * h, y0 = ej * h;
        for (const auto& q : detail::gauss22()) {
          auto G = detail::shape_grad(q.xi, q.eta);
          Mat2 D = params.tau.eval(x0 + q.xi * h, y0 + q.eta * h);
          double coef = (di == 0) ? D.xx : D.yy;
          for (int jrow = 0; jrow < 2; ++jrow) {
            double g = 0.0;
            for (int a = 0; a < 4; ++a)
              g += G[a][di] * theta_cell.comp[jrow].values[nodes[a]];
            g *= h;
            for (int kcol = 0; kcol < 2; ++kcol)
              Tc[jrow][kcol] += q.w * coef * g;  // independent of k
          }
        }
      }
    } else {
      detail::corrector_integral(cell_mesh, params.tau, theta_cell, false, Tc);
    }
    eff.T.push_back({tavg.xx / y1 + Tc[0][0] / y1, tavg.yy / y1 + Tc[1][1] / y1});
    eff.T_offdiag_01.push_back(Tc[0][1] / y1);
    eff.T_offdiag_10.push_back(Tc[1][0] / y1);

    // D^i = D_i I + (int d_i du_i^j/dy_k)_jk
    std::array<std::array<double, 2>, 2> Dc{{{0, 0}, {0, 0}}};
    detail::corrector_integral(cell_mesh, params.d[i], u_cells[i], false, Dc);
    Mat2 davg = detail::tensor_average(cell_mesh, params.d[i]);
    eff.D.push_back({(davg.xx + Dc[0][0]) / y1, (davg.yy + Dc[1][1]) / y1});
    eff.D_offdiag_01.push_back(Dc[0][1] / y1);
    eff.D_offdiag_10.push_back(Dc[1][0] / y1);

    // F^i = F_i I + (int rho_i du_i^j/dy_k)_jk
    std::array<std::array<double, 2>, 2> Fc{{{0, 0}, {0, 0}}};
    detail::corrector_integral(cell_mesh, params.rho[i], u_cells[i], false, Fc);
    Mat2 ravg = detail::tensor_average(cell_mesh, params.rho[i]);
    eff.F.push_back({(ravg.xx + Fc[0][0]) / y1, (ravg.yy + Fc[1][1]) / y1});
    eff.F_offdiag_01.push_back(Fc[0][1] / y1);
    eff.F_offdiag_10.push_back(Fc[1][0] / y1);

    double a_int = detail::surface_average(cell_mesh, params.a[i], false);
    double b_int = detail::surface_average(cell_mesh, params.b[i], false);
    eff.A.push_back(a_int / y1);
    eff.B.push_back(b_int / y1);
    eff.a_mean.push_back(a_int / cell.gamma_measure());
    eff.b_mean.push_back(b_int / cell.gamma_measure());
  }

  eff.heat_loss = detail::surface_average(cell_mesh, params.g0, true) / y1;
  return eff;
}

// Evaluates cell corrector values and gradients at the wrapped point
// y = x/eps mod 1 on the cell mesh.
struct CorrectorValue {
  std::array<double, 2> value;                 // w^1, w^2
  std::array<std::array<double, 2>, 2> grad;   // grad_y w^j
};

inline CorrectorValue eval_corrector(const CellSolution& cs,
                                     std::array<double, 2> x, double epsilon) {
  const Mesh& mesh = *cs.mesh;
  const double h = mesh.h;
  double y1 = wrap_unit(x[0] / epsilon);
  double y2 = wrap_unit(x[1] / epsilon);
  // snap to gridlines so micro nodes evaluate exactly
  auto snap = [&](double y) {
    double k = std::round(y / h);
    if (std::abs(y - k * h) < 1e-9) y = k * h;
    return std::min(y, 1.0);
  };
  y1 = snap(y1);
  y2 = snap(y2);

  auto locate = [&](double c) {
    int i = static_cast<int>(std::floor(c / h + 1e-12));
    return std::min(std::max(i, 0), mesh.n - 1);
  };
  int i = locate(y1), j = locate(y2);
  if (!mesh.active(i, j)) {
    double tol = 1e-9;
    bool on_vx = std::abs(y1 - i * h) <= tol && i > 0;
    bool on_hy = std::abs(y2 - j * h) <= tol && j > 0;
    if (on_vx && mesh.active(i - 1, j)) i -= 1;
    else if (on_hy && mesh.active(i, j - 1)) j -= 1;
    else if (on_vx && on_hy && mesh.active(i - 1, j - 1)) { i -= 1; j -= 1; }
    else throw PointInsideHole();
  }
  double xi = (y1 - i * h) / h, eta = (y2 - j * h) / h;
  auto N = detail::shape(xi, eta);
  auto G = detail::shape_grad(xi, eta);
  auto nodes = mesh.elem_nodes(i, j);
  CorrectorValue out{};
  for (int c = 0; c < 2; ++c) {
    double v = 0.0, gx = 0.0, gy = 0.0;
    for (int a = 0; a < 4; ++a) {
      double na = cs.comp[c].values[nodes[a]];
      v += N[a] * na;
      gx += G[a][0] * na;
      gy += G[a][1] * na;
    }
    out.value[c] = v;
    out.grad[c] = {gx / h, gy / h};
  }
  return out;
}

}  // namespace perfhom

#endif
