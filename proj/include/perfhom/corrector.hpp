#ifndef PERFHOM_CORRECTOR_HPP
#define PERFHOM_CORRECTOR_HPP

#include <array>
#include <cmath>
#include <vector>

#include "perfhom/cell.hpp"
#include "perfhom/coefficients.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/macro.hpp"
#include "perfhom/micro.hpp"

namespace perfhom {

// Recovered nodal gradient of a field on an unperforated mesh: centered
// differences in the interior (patch averaging on a uniform grid), second
// order one-sided stencils on the boundary.
inline std::array<FeFunction, 2> recover_gradient(const FeFunction& f) {
  const Mesh& mesh = *f.mesh;
  const double h = mesh.h;
  std::array<FeFunction, 2> g{FeFunction(mesh), FeFunction(mesh)};
  auto val = [&](int i, int j) {
    return f.values[mesh.node_id[mesh.grid_node(i, j)]];
  };
  for (int j = 0; j <= mesh.n; ++j)
    for (int i = 0; i <= mesh.n; ++i) {
      int a = mesh.node_id[mesh.grid_node(i, j)];
      double dx, dy;
      if (i == 0)
        dx = (-3.0 * val(0, j) + 4.0 * val(1, j) - val(2, j)) / (2.0 * h);
      else if (i == mesh.n)
        dx = (3.0 * val(i, j) - 4.0 * val(i - 1, j) + val(i - 2, j)) / (2.0 * h);
      else
        dx = (val(i + 1, j) - val(i - 1, j)) / (2.0 * h);
      if (j == 0)
        dy = (-3.0 * val(i, 0) + 4.0 * val(i, 1) - val(i, 2)) / (2.0 * h);
      else if (j == mesh.n)
        dy = (3.0 * val(i, j) - 4.0 * val(i, j - 1) + val(i, j - 2)) / (2.0 * h);
      else
        dy = (val(i, j + 1) - val(i, j - 1)) / (2.0 * h);
      g[0].values[a] = dx;
      g[1].values[a] = dy;
    }
  return g;
}

// Macroscopic fields reinterpreted on the perforated mesh, with and
// without the first-order cell correction.
struct Reconstruction {
  FeFunction theta0e, theta1e, theta1e_cut;
  std::vector<FeFunction> u0e, u1e, u1e_cut;
  std::vector<FeFunction> v0e;  // bulk deposition fields at micro nodes
};

inline Reconstruction reconstruct(const MacroState& macro,
                                  const CellSolution& theta_cell,
                                  const std::vector<CellSolution>& u_cells,
                                  const Mesh& micro_mesh, double eps) {
  Reconstruction rec;
  const FeFunction cut = cutoff_function(micro_mesh, eps);
  auto lift = [&](const FeFunction& field, const CellSolution& cs,
                  FeFunction& out0, FeFunction& out1, FeFunction& out1c) {
    auto grad = recover_gradient(field);
    out0 = FeFunction(micro_mesh);
    out1 = FeFunction(micro_mesh);
    out1c = FeFunction(micro_mesh);
    out0.time = out1.time = out1c.time = field.time;
    for (int a = 0; a < micro_mesh.node_count(); ++a) {
      auto xy = micro_mesh.node_coord(a);
      double v0 = eval_at(field, xy[0], xy[1]);
      double corr = 0.0;
      if (!cs.trivial()) {
        auto cv = eval_corrector(cs, {xy[0], xy[1]}, eps);
        double gx = eval_at(grad[0], xy[0], xy[1]);
        double gy = eval_at(grad[1], xy[0], xy[1]);
        corr = cv.value[0] * gx + cv.value[1] * gy;
      }
      out0.values[a] = v0;
      out1.values[a] = v0 + eps * corr;
      out1c.values[a] = v0 + eps * cut.values[a] * corr;
    }
  };
  lift(macro.theta0, theta_cell, rec.theta0e, rec.theta1e, rec.theta1e_cut);
  rec.u0e.resize(macro.u0.size());
  rec.u1e.resize(macro.u0.size());
  rec.u1e_cut.resize(macro.u0.size());
  for (std::size_t i = 0; i < macro.u0.size(); ++i)
    lift(macro.u0[i], u_cells[i], rec.u0e[i], rec.u1e[i], rec.u1e_cut[i]);
  for (const auto& v : macro.v0) {
    FeFunction f(micro_mesh);
    f.time = macro.t;
    for (int a = 0; a < micro_mesh.node_count(); ++a) {
      auto xy = micro_mesh.node_coord(a);
      f.values[a] = eval_at(v, xy[0], xy[1]);
    }
    rec.v0e.push_back(std::move(f));
  }
  return rec;
}

struct ErrorRecord {
  double epsilon = 0.0;
  double w1_sq = 0.0;        // bulk L2 mismatch squared at final time
  double w1_sq_int = 0.0;    // its trapezoid time integral
  double w2_int = 0.0;       // time-integrated gradient mismatch squared
  double w2_int_cutoff = 0.0;
  double surf_sq = 0.0;      // eps * surface L2 mismatch squared, final time
  double w0 = 0.0;           // initial-data mismatch
};

namespace detail {

inline double bulk_mismatch_sq(const MicroState& micro,
                               const Reconstruction& rec) {
  const Mesh& mesh = *micro.theta.mesh;
  FeFunction diff(mesh);
  for (int a = 0; a < mesh.node_count(); ++a)
    diff.values[a] = micro.theta.values[a] - rec.theta0e.values[a];
  double s = l2_norm(diff);
  double total = s * s;
  for (std::size_t i = 0; i < micro.u.size(); ++i) {
    for (int a = 0; a < mesh.node_count(); ++a)
      diff.values[a] = micro.u[i].values[a] - rec.u0e[i].values[a];
    s = l2_norm(diff);
    total += s * s;
  }
  return total;
}

inline double grad_mismatch_sq(const MicroState& micro,
                               const Reconstruction& rec, bool cutoff) {
  const Mesh& mesh = *micro.theta.mesh;
  const FeFunction& t1 = cutoff ? rec.theta1e_cut : rec.theta1e;
  FeFunction diff(mesh);
  for (int a = 0; a < mesh.node_count(); ++a)
    diff.values[a] = micro.theta.values[a] - t1.values[a];
  double s = h1_seminorm(diff);
  double total = s * s;
  for (std::size_t i = 0; i < micro.u.size(); ++i) {
    const FeFunction& u1 = cutoff ? rec.u1e_cut[i] : rec.u1e[i];
    for (int a = 0; a < mesh.node_count(); ++a)
      diff.values[a] = micro.u[i].values[a] - u1.values[a];
    s = h1_seminorm(diff);
    total += s * s;
  }
  return total;
}

inline double surface_mismatch_sq(const MicroState& micro,
                                  const Reconstruction& rec) {
  const Mesh& mesh = *micro.theta.mesh;
  double total = 0.0;
  for (std::size_t i = 0; i < micro.v.size(); ++i) {
    SurfaceFunction diff(mesh);
    for (int k = 0; k < mesh.surface_node_count(); ++k) {
      int a = mesh.surface_nodes[k];
      diff.values[k] = micro.v[i].values[k] - rec.v0e[i].values[a];
    }
    double s = surface_l2(diff);
    total += s * s;
  }
  return total;
}

}  // namespace detail

// Evaluates the corrector-estimate quantities along matching micro and
// macro snapshot trajectories.
inline ErrorRecord corrector_norms(const std::vector<MicroState>& micro,
                                   const std::vector<MacroState>& macro,
                                   const CellSolution& theta_cell,
                                   const std::vector<CellSolution>& u_cells,
                                   double eps) {
  if (micro.size() != macro.size() || micro.empty()) throw MeshMismatch();
  const Mesh& mesh = *micro.front().theta.mesh;
  ErrorRecord rec;
  rec.epsilon = eps;

  double prev_t = 0.0, prev_w1 = 0.0, prev_w2 = 0.0, prev_w2c = 0.0;
  for (std::size_t k = 0; k < micro.size(); ++k) {
    if (std::abs(micro[k].t - macro[k].t) > 1e-12) throw MeshMismatch();
    Reconstruction r =
        reconstruct(macro[k], theta_cell, u_cells, mesh, eps);
    double w1 = detail::bulk_mismatch_sq(micro[k], r);
    double w2 = detail::grad_mismatch_sq(micro[k], r, false);
    double w2c = detail::grad_mismatch_sq(micro[k], r, true);
    if (k == 0) {
      rec.w0 = w1 + detail::surface_mismatch_sq(micro[k], r);
    } else {
      double dt = micro[k].t - prev_t;
      rec.w1_sq_int += 0.5 * dt * (prev_w1 + w1);
      // well-prepared data carries no oscillation at t = 0, so the t = 0
      // gradient integrand is an O(1) initial-layer artifact whose true
      // duration is O(eps^2); keep it out of the coarse trapezoid grid
      if (k >= 2) {
        rec.w2_int += 0.5 * dt * (prev_w2 + w2);
        rec.w2_int_cutoff += 0.5 * dt * (prev_w2c + w2c);
      }
    }
    if (k + 1 == micro.size()) {
      rec.w1_sq = w1;
      rec.surf_sq = eps * detail::surface_mismatch_sq(micro[k], r);
    }
    prev_t = micro[k].t;
    prev_w1 = w1;
    prev_w2 = w2;
    prev_w2c = w2c;
  }
  return rec;
}

// ---------------------------------------------------------------------------
// rate fitting

struct RateFit {
  double slope = 0.0;
  double constant = 0.0;  // max value / eps^slope
};

inline RateFit fit_rate(const std::vector<std::array<double, 2>>& pairs) {
  if (pairs.size() < 3) throw TooFewPoints();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [e, v] : pairs) {
    if (!(e > 0.0) || !(v > 0.0)) throw NonPositiveValue();
    double x = std::log(e), y = std::log(v);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(pairs.size());
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  for (const auto& [e, v] : pairs)
    fit.constant = std::max(fit.constant, v / std::pow(e, fit.slope));
  return fit;
}

// ---------------------------------------------------------------------------
// convergence study

struct StudyConfig {
  std::vector<double> eps_list{0.25, 0.125, 0.0625};
  int n_per_cell = 16;
  int cell_mesh_n = 32;
  CellGeometry cell;
  PhysicalParams params = PhysicalParams::defaults();
  SmoluchowskiParams smolu = SmoluchowskiParams::constant_kernel(3);
  MollifierConfig moll;
  TimeStepperConfig time;
  bool well_prepared = true;
  IndexConvention convention = IndexConvention::Paper;
};

struct ConvergenceReport {
  std::vector<ErrorRecord> records;
  RateFit w1, w2, surf;
  EffectiveCoefficients eff;
};

namespace detail {

inline void study_initial_data(const StudyConfig& cfg, double eps,
                               InitialSpec& theta_micro, InitialSpec& theta_macro,
                               std::vector<InitialSpec>& u_micro,
                               std::vector<InitialSpec>& u_macro,
                               std::vector<InitialSpec>& v_init) {
  theta_macro = InitialSpec::cosine(1.0, 0.5);
  InitialSpec u_base = InitialSpec::cosine(0.5, 0.25);
  if (cfg.well_prepared) {
    theta_micro = theta_macro;
  } else {
    // oscillating perturbation of amplitude eps^{1/4}: the squared bulk
    // mismatch w0 then scales like eps^{1/2}
    double amp = std::pow(eps, 0.25);
    theta_micro = InitialSpec::expression([eps, amp](double x, double y) {
      return 1.0 + 0.5 * std::cos(kPi * x) * std::cos(kPi * y) +
             amp * (1.0 - std::cos(2.0 * kPi * x / eps)) * 0.5;
    });
  }
  u_micro.assign(cfg.params.N, u_base);
  u_macro.assign(cfg.params.N, u_base);
  v_init.assign(cfg.params.N, InitialSpec::constant(0.0));
}

}  // namespace detail

struct StudyResult {
  ConvergenceReport report;
  CellSolution theta_cell;
  std::vector<CellSolution> u_cells;
};

// Runs one perforated-domain micro solve and one homogenized solve per
// eps, reconstructs, and fits the rates.  The cell problems are solved
// once up front.
inline ErrorRecord study_single_eps(const StudyConfig& cfg, double eps,
                                    const CellSolution& theta_cell,
                                    const std::vector<CellSolution>& u_cells,
                                    const EffectiveCoefficients& eff) {
  PerforatedDomain dom = make_perforated_domain(eps, cfg.cell);
  Mesh micro_mesh = build_perforated_mesh(dom, cfg.n_per_cell);
  CellGeometry nohole = cell_geometry_without_hole();
  Mesh macro_mesh =
      build_perforated_mesh(make_perforated_domain(eps, nohole), cfg.n_per_cell);

  InitialSpec theta_micro, theta_macro;
  std::vector<InitialSpec> u_micro, u_macro, v_init;
  detail::study_initial_data(cfg, eps, theta_micro, theta_macro, u_micro,
                             u_macro, v_init);

  MicroRun mrun = run_micro(micro_mesh, cfg.params, cfg.smolu, cfg.moll,
                            theta_micro, u_micro, v_init, cfg.time);
  MacroRun hrun = run_macro(macro_mesh, eff, cfg.smolu, cfg.moll, theta_macro,
                            u_macro, v_init, cfg.time);
  return corrector_norms(mrun.snapshots, hrun.snapshots, theta_cell, u_cells,
                         eps);
}

inline StudyResult convergence_study(const StudyConfig& cfg) {
  if (cfg.eps_list.size() < 3) throw TooFewPoints();
  for (std::size_t k = 1; k < cfg.eps_list.size(); ++k)
    if (!(cfg.eps_list[k] < cfg.eps_list[k - 1]))
      throw ValidationError("eps_list must be strictly decreasing");

  StudyResult res;
  Mesh cell_mesh = build_cell_mesh(cfg.cell, cfg.cell_mesh_n);
  res.theta_cell = solve_cell_problem(cell_mesh, cfg.params.kappa);
  for (int i = 0; i < cfg.params.N; ++i)
    res.u_cells.push_back(solve_cell_problem(cell_mesh, cfg.params.d[i]));
  res.report.eff = effective_tensors(res.theta_cell, res.u_cells, cfg.params,
                                     cfg.cell, cell_mesh, cfg.convention);

  for (double eps : cfg.eps_list)
    res.report.records.push_back(study_single_eps(
        cfg, eps, res.theta_cell, res.u_cells, res.report.eff));

  std::vector<std::array<double, 2>> p1, p2, ps;
  for (const auto& r : res.report.records) {
    p1.push_back({r.epsilon, r.w1_sq});
    p2.push_back({r.epsilon, r.w2_int});
    ps.push_back({r.epsilon, r.surf_sq});
  }
  res.report.w1 = fit_rate(p1);
  res.report.w2 = fit_rate(p2);
  res.report.surf = fit_rate(ps);
  return res;
}

// ---------------------------------------------------------------------------
// measured-inequality diagnostics

struct PepRow {
  double epsilon = 0.0;
  double distance = 0.0;  // L2(Omega^eps) distance to the cell average
  double h1_norm = 0.0;   // full H1 norm of the oscillating field
  double ratio = 0.0;     // distance / (sqrt(eps) * h1_norm)
};

// For p^eps(x) = p(x/eps): the L2 distance to its cell average should be
// controlled by sqrt(eps) times the full H1 norm, uniformly in eps.
inline std::vector<PepRow> pep_diagnostic(const ScalarFieldSpec& spec,
                                          const std::vector<double>& eps_list,
                                          int n_per_cell,
                                          const CellGeometry& cell) {
  std::vector<PepRow> rows;
  for (double eps : eps_list) {
    PerforatedDomain dom = make_perforated_domain(eps, cell);
    Mesh mesh = build_perforated_mesh(dom, n_per_cell);
    FeFunction p = FeFunction::interpolant(mesh, [&](double x, double y) {
      return spec.eval(wrap_unit(x / eps), wrap_unit(y / eps));
    });
    // cell average over the gas phase, via the quadrature mass
    SparseMatrix M = assemble_mass(mesh);
    std::vector<double> Mp = M.apply(p.values);
    double mean = 0.0;
    for (double v : Mp) mean += v;
    mean /= mesh.active_area();

    FeFunction diff(mesh);
    for (int a = 0; a < mesh.node_count(); ++a)
      diff.values[a] = p.values[a] - mean;
    PepRow row;
    row.epsilon = eps;
    row.distance = l2_norm(diff);
    double l2 = l2_norm(p), h1 = h1_seminorm(p);
    row.h1_norm = std::sqrt(l2 * l2 + h1 * h1);
    double denom = std::sqrt(eps) * row.h1_norm;
    row.ratio = (row.distance > 0.0 && denom > 0.0) ? row.distance / denom : 0.0;
    rows.push_back(row);
  }
  return rows;
}

struct CutoffNorms {
  double one_minus_m_l2 = 0.0;   // should scale like sqrt(eps)
  double eps_grad_m_l2 = 0.0;    // likewise
};

inline CutoffNorms cutoff_norms(const Mesh& mesh, double eps) {
  FeFunction m = cutoff_function(mesh, eps);
  FeFunction one_minus(mesh);
  for (int a = 0; a < mesh.node_count(); ++a)
    one_minus.values[a] = 1.0 - m.values[a];
  return {l2_norm(one_minus), eps * h1_seminorm(m)};
}

// Measured trace constant: eps |f|^2_{Gamma^eps} against the scaled bulk
// energy |f|^2 + eps^2 |grad f|^2.
inline double trace_diagnostic(const FeFunction& f, double eps) {
  const Mesh& mesh = *f.mesh;
  SurfaceFunction tr(mesh);
  for (int k = 0; k < mesh.surface_node_count(); ++k)
    tr.values[k] = f.values[mesh.surface_nodes[k]];
  double surf = surface_l2(tr);
  double l2 = l2_norm(f), h1 = h1_seminorm(f);
  double denom = l2 * l2 + eps * eps * h1 * h1;
  return denom > 0.0 ? eps * surf * surf / denom : 0.0;
}

}  // namespace perfhom

#endif
