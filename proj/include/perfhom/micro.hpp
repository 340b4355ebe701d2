#ifndef PERFHOM_MICRO_HPP
#define PERFHOM_MICRO_HPP

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "perfhom/cell.hpp"
#include "perfhom/coefficients.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/sparse.hpp"

namespace perfhom {

// Initial-data expressions: bounded, H1-regular closed forms.
struct InitialSpec {
  enum class Kind { Constant, Affine, Cosine, Expr } kind = Kind::Constant;
  double c = 1.0;
  double gx = 0.0, gy = 0.0;   // affine: c + gx x1 + gy x2
  double amp = 0.0;            // cosine: c + amp cos(pi x1) cos(pi x2)
  std::function<double(double, double)> expr;

  static InitialSpec constant(double v) {
    InitialSpec s;
    s.kind = Kind::Constant;
    s.c = v;
    return s;
  }
  static InitialSpec affine(double v, double gx, double gy) {
    InitialSpec s;
    s.kind = Kind::Affine;
    s.c = v;
    s.gx = gx;
    s.gy = gy;
    return s;
  }
  static InitialSpec cosine(double v, double amp) {
    InitialSpec s;
    s.kind = Kind::Cosine;
    s.c = v;
    s.amp = amp;
    return s;
  }
  static InitialSpec expression(std::function<double(double, double)> f) {
    InitialSpec s;
    s.kind = Kind::Expr;
    s.expr = std::move(f);
    return s;
  }

  double eval(double x, double y) const {
    switch (kind) {
      case Kind::Constant: return c;
      case Kind::Affine: return c + gx * x + gy * y;
      case Kind::Cosine: return c + amp * std::cos(kPi * x) * std::cos(kPi * y);
      case Kind::Expr: return expr(x, y);
    }
    return c;
  }
};

struct TimeStepperConfig {
  double dt = 0.0;        // 0 selects the h/4 rule
  double t_end = 0.1;
  int snapshots = 11;
  double cg_tol = 1e-10;

  double effective_dt(double h) const { return dt > 0.0 ? dt : h / 4.0; }
};

struct MicroState {
  double t = 0.0;
  FeFunction theta;
  std::vector<FeFunction> u;
  std::vector<SurfaceFunction> v;

  double min_value() const {
    double m = theta.min_value();
    for (const auto& f : u) m = std::min(m, f.min_value());
    for (const auto& f : v) m = std::min(m, f.min_value());
    return m;
  }
  double max_abs() const {
    double m = theta.max_abs();
    for (const auto& f : u) m = std::max(m, f.max_abs());
    for (const auto& f : v)
      for (double val : f.values) m = std::max(m, std::abs(val));
    return m;
  }
};

inline MicroState init_micro(const Mesh& mesh, const InitialSpec& theta0,
                             const std::vector<InitialSpec>& u0,
                             const std::vector<InitialSpec>& v0) {
  MicroState s;
  s.theta = FeFunction::interpolant(
      mesh, [&](double x, double y) { return theta0.eval(x, y); });
  for (const auto& spec : u0)
    s.u.push_back(FeFunction::interpolant(
        mesh, [&](double x, double y) { return spec.eval(x, y); }));
  for (const auto& spec : v0) {
    SurfaceFunction f(mesh);
    for (int k = 0; k < mesh.surface_node_count(); ++k) {
      auto xy = mesh.node_coord(mesh.surface_nodes[k]);
      f.values[k] = spec.eval(xy[0], xy[1]);
    }
    s.v.push_back(std::move(f));
  }
  if (s.min_value() < 0.0) throw NegativeInitialData();
  return s;
}

// Time-independent operators for one (mesh, params) pair, with the linear
// systems cached per time step size.
class MicroOperators {
 public:
  MicroOperators(const Mesh& mesh, const PhysicalParams& params,
                 const SmoluchowskiParams& smolu, const MollifierConfig& moll)
      : mesh_(&mesh),
        params_(&params),
        smolu_(&smolu),
        plan_(mesh, moll),
        eps_(mesh.epsilon) {
    mass_ = assemble_mass(mesh);
    stiff_theta_ = assemble_stiffness(mesh, params.kappa.as_eval(), ScaleMode::Micro);
    robin_g_ = assemble_boundary_mass(
        mesh, FacetLabel::GammaR,
        [&](double y1, double y2) { return params.g0.eval(y1, y2); },
        ScaleMode::Micro);
    for (int i = 0; i < params.N; ++i) {
      stiff_u_.push_back(
          assemble_stiffness(mesh, params.d[i].as_eval(), ScaleMode::Micro));
      surf_a_.push_back(assemble_boundary_mass(
          mesh, {FacetLabel::GammaN, FacetLabel::GammaR},
          [&, i](double y1, double y2) { return params.a[i].eval(y1, y2); },
          ScaleMode::Micro));
      surf_b_diag_.push_back(
          assemble_boundary_mass(
              mesh, {FacetLabel::GammaN, FacetLabel::GammaR},
              [&, i](double y1, double y2) { return params.b[i].eval(y1, y2); },
              ScaleMode::Micro)
              .diagonal());
    }
    // pointwise deposition coefficients on the pore-surface nodes
    for (int i = 0; i < params.N; ++i) {
      std::vector<double> av, bv;
      for (int a : mesh.surface_nodes) {
        auto xy = mesh.node_coord(a);
        double y1 = wrap_unit(xy[0] / eps_), y2 = wrap_unit(xy[1] / eps_);
        av.push_back(params.a[i].eval(y1, y2));
        bv.push_back(params.b[i].eval(y1, y2));
      }
      a_nodal_.push_back(std::move(av));
      b_nodal_.push_back(std::move(bv));
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  const PhysicalParams& params() const { return *params_; }
  const SmoluchowskiParams& smolu() const { return *smolu_; }
  const MollifierPlan& plan() const { return plan_; }
  const SparseMatrix& mass() const { return mass_; }
  double epsilon() const { return eps_; }

  void prepare_systems(double dt) {
    if (dt == cached_dt_) return;
    heat_system_ = stiff_theta_.add_scaled(mass_, 1.0 / dt)
                       .add_scaled(robin_g_, eps_);
    species_system_.clear();
    for (int i = 0; i < params_->N; ++i)
      species_system_.push_back(stiff_u_[i]
                                    .add_scaled(mass_, 1.0 / dt)
                                    .add_scaled(surf_a_[i], eps_));
    cached_dt_ = dt;
  }

  const SparseMatrix& heat_system() const { return heat_system_; }
  const SparseMatrix& species_system(int i) const { return species_system_[i]; }
  const std::vector<double>& surf_b_diag(int i) const { return surf_b_diag_[i]; }
  double a_at_surface(int i, int k) const { return a_nodal_[i][k]; }
  double b_at_surface(int i, int k) const { return b_nodal_[i][k]; }

  // warm-start storage for the CG solves
  std::vector<double> theta_guess;
  std::vector<std::vector<double>> u_guess;

 private:
  const Mesh* mesh_;
  const PhysicalParams* params_;
  const SmoluchowskiParams* smolu_;
  MollifierPlan plan_;
  double eps_;
  SparseMatrix mass_, stiff_theta_, robin_g_;
  std::vector<SparseMatrix> stiff_u_;
  std::vector<SparseMatrix> surf_a_;
  std::vector<std::vector<double>> surf_b_diag_;
  std::vector<std::vector<double>> a_nodal_, b_nodal_;
  double cached_dt_ = -1.0;
  SparseMatrix heat_system_;
  std::vector<SparseMatrix> species_system_;
};

namespace detail {

// Quadrature assembly of all explicit (Soret, Dufour, Smoluchowski) load
// vectors in one element sweep.
inline void assemble_explicit_loads(
    const MicroOperators& ops, const MicroState& s,
    const std::vector<std::vector<std::array<double, 2>>>& mg_u,
    const std::vector<std::array<double, 2>>& mg_theta,
    std::vector<double>& heat_load, std::vector<std::vector<double>>& u_load) {
  const Mesh& mesh = ops.mesh();
  const PhysicalParams& p = ops.params();
  const int N = p.N;
  const double h = mesh.h;
  heat_load.assign(mesh.node_count(), 0.0);
  u_load.assign(N, std::vector<double>(mesh.node_count(), 0.0));
  std::vector<double> uq(N), rq(N);

  for (int e : mesh.active_elems) {
    int ei = e % mesh.n, ej = e / mesh.n;
    auto nodes = mesh.elem_nodes(ei, ej);
    double x0 = ei * h, y0 = ej * h;
    for (const auto& q : gauss22()) {
      auto N4 = shape(q.xi, q.eta);
      auto G = shape_grad(q.xi, q.eta);
      double xq = x0 + q.xi * h, yq = y0 + q.eta * h;
      double yc1 = wrap_unit(xq / ops.epsilon()), yc2 = wrap_unit(yq / ops.epsilon());
      double w = q.w * h * h;

      // FE gradients of theta and u_i at the quadrature point
      std::array<double, 2> grad_theta{0.0, 0.0};
      for (int a = 0; a < 4; ++a) {
        grad_theta[0] += G[a][0] * s.theta.values[nodes[a]];
        grad_theta[1] += G[a][1] * s.theta.values[nodes[a]];
      }
      grad_theta[0] /= h;
      grad_theta[1] /= h;

      // interpolated mollified gradients and nodal values
      std::array<double, 2> mgt{0.0, 0.0};
      for (int a = 0; a < 4; ++a) {
        mgt[0] += N4[a] * mg_theta[nodes[a]][0];
        mgt[1] += N4[a] * mg_theta[nodes[a]][1];
      }

      Mat2 tau = p.tau.eval(yc1, yc2);
      double soret = 0.0;
      for (int i = 0; i < N; ++i) {
        std::array<double, 2> mgu{0.0, 0.0};
        double uval = 0.0;
        std::array<double, 2> grad_u{0.0, 0.0};
        for (int a = 0; a < 4; ++a) {
          mgu[0] += N4[a] * mg_u[i][nodes[a]][0];
          mgu[1] += N4[a] * mg_u[i][nodes[a]][1];
          uval += N4[a] * s.u[i].values[nodes[a]];
          grad_u[0] += G[a][0] * s.u[i].values[nodes[a]];
          grad_u[1] += G[a][1] * s.u[i].values[nodes[a]];
        }
        grad_u[0] /= h;
        grad_u[1] /= h;
        uq[i] = uval;
        soret += tau.xx * mgu[0] * grad_theta[0] + tau.yy * mgu[1] * grad_theta[1];

        Mat2 rho = p.rho[i].eval(yc1, yc2);
        double dufour = rho.xx * mgt[0] * grad_u[0] + rho.yy * mgt[1] * grad_u[1];
        for (int a = 0; a < 4; ++a)
          u_load[i][nodes[a]] += w * dufour * N4[a];
      }
      rq = smoluchowski_rate(uq, ops.smolu());
      for (int i = 0; i < N; ++i)
        for (int a = 0; a < 4; ++a)
          u_load[i][nodes[a]] += w * rq[i] * N4[a];
      for (int a = 0; a < 4; ++a)
        heat_load[nodes[a]] += w * soret * N4[a];
    }
  }
}

}  // namespace detail

// One IMEX-Euler step: diffusion and boundary exchange implicit, the
// nonlinear Soret/Dufour/Smoluchowski couplings explicit, surface ODEs by
// nodewise implicit Euler.
inline MicroState step_micro(const MicroState& s, MicroOperators& ops,
                             double dt, double cg_tol = 1e-10) {
  const Mesh& mesh = ops.mesh();
  const int N = ops.params().N;
  const double eps = ops.epsilon();
  ops.prepare_systems(dt);

  std::vector<std::vector<std::array<double, 2>>> mg_u;
  for (int i = 0; i < N; ++i) mg_u.push_back(ops.plan().gradient(s.u[i]));
  auto mg_theta = ops.plan().gradient(s.theta);

  std::vector<double> heat_load;
  std::vector<std::vector<double>> u_load;
  detail::assemble_explicit_loads(ops, s, mg_u, mg_theta, heat_load, u_load);

  MicroState next;
  next.t = s.t + dt;

  // heat
  {
    std::vector<double> rhs = ops.mass().apply(s.theta.values);
    for (std::size_t a = 0; a < rhs.size(); ++a)
      rhs[a] = rhs[a] / dt + heat_load[a];
    const std::vector<double>* guess =
        ops.theta_guess.empty() ? &s.theta.values : &ops.theta_guess;
    CgResult r = solve_cg(ops.heat_system(), rhs, cg_tol, -1,
                          CgConstraint::None, guess);
    if (!r.converged) throw NotConverged("heat solve");
    next.theta = FeFunction(mesh);
    next.theta.values = r.x;
    next.theta.time = next.t;
    ops.theta_guess = r.x;
  }

  // species
  ops.u_guess.resize(N);
  for (int i = 0; i < N; ++i) {
    std::vector<double> rhs = ops.mass().apply(s.u[i].values);
    const auto& sb = ops.surf_b_diag(i);
    for (std::size_t a = 0; a < rhs.size(); ++a) {
      rhs[a] = rhs[a] / dt + u_load[i][a];
      int k = mesh.surface_index[a];
      if (k >= 0) rhs[a] += eps * sb[a] * s.v[i].values[k];
    }
    const std::vector<double>* guess =
        ops.u_guess[i].empty() ? &s.u[i].values : &ops.u_guess[i];
    CgResult r = solve_cg(ops.species_system(i), rhs, cg_tol, -1,
                          CgConstraint::None, guess);
    if (!r.converged) throw NotConverged("species solve");
    FeFunction f(mesh);
    f.values = r.x;
    f.time = next.t;
    next.u.push_back(std::move(f));
    ops.u_guess[i] = next.u.back().values;
  }

  // surface deposition ODEs
  for (int i = 0; i < N; ++i) {
    SurfaceFunction v(mesh);
    for (int k = 0; k < mesh.surface_node_count(); ++k) {
      int a = mesh.surface_nodes[k];
      double av = ops.a_at_surface(i, k), bv = ops.b_at_surface(i, k);
      v.values[k] = (s.v[i].values[k] + dt * av * next.u[i].values[a]) /
                    (1.0 + dt * bv);
    }
    next.v.push_back(std::move(v));
  }

  if (next.max_abs() > 1e8) throw BlowUp();
  return next;
}

struct RunDiagnostics {
  std::vector<double> times;
  std::vector<double> grad_theta_sq;            // |grad theta(t)|^2 at snapshots
  std::vector<std::vector<double>> grad_u_sq;   // per species
  double theta_dt_integral = 0.0;               // int |d_t theta|^2 dt
  std::vector<double> u_dt_integral;
  std::vector<double> v_dt_integral;            // surface L2 of difference quotients
  double min_value = 0.0;
  bool positivity_ok = true;
};

struct MicroRun {
  std::vector<MicroState> snapshots;
  RunDiagnostics diagnostics;
};

inline std::vector<double> snapshot_times(const TimeStepperConfig& tc) {
  std::vector<double> ts;
  int S = std::max(2, tc.snapshots);
  for (int s = 0; s < S; ++s) ts.push_back(tc.t_end * s / (S - 1));
  return ts;
}

inline MicroRun run_micro(const Mesh& mesh, const PhysicalParams& params,
                          const SmoluchowskiParams& smolu,
                          const MollifierConfig& moll,
                          const InitialSpec& theta0,
                          const std::vector<InitialSpec>& u0,
                          const std::vector<InitialSpec>& v0,
                          const TimeStepperConfig& tc) {
  MicroOperators ops(mesh, params, smolu, moll);
  MicroState state = init_micro(mesh, theta0, u0, v0);
  const int N = params.N;

  MicroRun run;
  run.diagnostics.u_dt_integral.assign(N, 0.0);
  run.diagnostics.v_dt_integral.assign(N, 0.0);
  run.diagnostics.grad_u_sq.assign(N, {});
  run.diagnostics.min_value = state.min_value();

  auto record = [&](const MicroState& s) {
    run.diagnostics.times.push_back(s.t);
    double g = h1_seminorm(s.theta);
    run.diagnostics.grad_theta_sq.push_back(g * g);
    for (int i = 0; i < N; ++i) {
      double gu = h1_seminorm(s.u[i]);
      run.diagnostics.grad_u_sq[i].push_back(gu * gu);
    }
    run.snapshots.push_back(s);
  };
  record(state);

  const double dt_base = tc.effective_dt(mesh.h);
  auto times = snapshot_times(tc);
  for (std::size_t sidx = 1; sidx < times.size(); ++sidx) {
    double interval = times[sidx] - state.t;
    // advective CFL guard, halving until dt <= h / (2 max|grad^delta|)
    double gmax = 0.0;
    auto mg = ops.plan().gradient(state.theta);
    for (int i = 0; i < N; ++i) {
      auto mgu = ops.plan().gradient(state.u[i]);
      for (const auto& v : mgu)
        gmax = std::max(gmax, std::hypot(v[0], v[1]));
    }
    for (const auto& v : mg) gmax = std::max(gmax, std::hypot(v[0], v[1]));
    double dt_eff = dt_base;
    while (gmax > 0.0 && dt_eff > 0.5 * mesh.h / gmax) dt_eff *= 0.5;

    int steps = std::max(1, static_cast<int>(std::ceil(interval / dt_eff - 1e-12)));
    double dt = interval / steps;
    for (int k = 0; k < steps; ++k) {
      MicroState prev = std::move(state);
      state = step_micro(prev, ops, dt, tc.cg_tol);
      // difference-quotient energy integrals
      double dtheta = 0.0;
      {
        FeFunction diff(mesh);
        for (int a = 0; a < mesh.node_count(); ++a)
          diff.values[a] = (state.theta.values[a] - prev.theta.values[a]) / dt;
        dtheta = l2_norm(diff);
        run.diagnostics.theta_dt_integral += dtheta * dtheta * dt;
      }
      for (int i = 0; i < N; ++i) {
        FeFunction diff(mesh);
        for (int a = 0; a < mesh.node_count(); ++a)
          diff.values[a] = (state.u[i].values[a] - prev.u[i].values[a]) / dt;
        double du = l2_norm(diff);
        run.diagnostics.u_dt_integral[i] += du * du * dt;
        SurfaceFunction dv(mesh);
        for (int k2 = 0; k2 < mesh.surface_node_count(); ++k2)
          dv.values[k2] = (state.v[i].values[k2] - prev.v[i].values[k2]) / dt;
        double dvn = surface_l2(dv);
        run.diagnostics.v_dt_integral[i] += dvn * dvn * dt;
      }
      run.diagnostics.min_value =
          std::min(run.diagnostics.min_value, state.min_value());
    }
    record(state);
  }
  run.diagnostics.positivity_ok = run.diagnostics.min_value >= -1e-10;
  return run;
}

}  // namespace perfhom

#endif
