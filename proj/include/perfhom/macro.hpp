#ifndef PERFHOM_MACRO_HPP
#define PERFHOM_MACRO_HPP

#include <array>
#include <cmath>
#include <vector>

#include "perfhom/cell.hpp"
#include "perfhom/coefficients.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/micro.hpp"

namespace perfhom {

// State of the homogenized system on the unperforated mesh of Omega.
// The deposition unknowns v_i become bulk fields after the limit.
struct MacroState {
  double t = 0.0;
  FeFunction theta0;
  std::vector<FeFunction> u0;
  std::vector<FeFunction> v0;

  double min_value() const {
    double m = theta0.min_value();
    for (const auto& f : u0) m = std::min(m, f.min_value());
    for (const auto& f : v0) m = std::min(m, f.min_value());
    return m;
  }
  double max_abs() const {
    double m = theta0.max_abs();
    for (const auto& f : u0) m = std::max(m, f.max_abs());
    for (const auto& f : v0) m = std::max(m, f.max_abs());
    return m;
  }
};

inline MacroState init_macro(const Mesh& mesh, const InitialSpec& theta0,
                             const std::vector<InitialSpec>& u0,
                             const std::vector<InitialSpec>& v0) {
  MacroState s;
  s.theta0 = FeFunction::interpolant(
      mesh, [&](double x, double y) { return theta0.eval(x, y); });
  for (const auto& spec : u0)
    s.u0.push_back(FeFunction::interpolant(
        mesh, [&](double x, double y) { return spec.eval(x, y); }));
  for (const auto& spec : v0)
    s.v0.push_back(FeFunction::interpolant(
        mesh, [&](double x, double y) { return spec.eval(x, y); }));
  if (s.min_value() < 0.0) throw NegativeInitialData();
  return s;
}

class MacroOperators {
 public:
  MacroOperators(const Mesh& mesh, const EffectiveCoefficients& eff, int n_species,
                 const MollifierConfig& moll)
      : mesh_(&mesh), eff_(&eff), n_(n_species), plan_(mesh, moll) {
    mass_ = assemble_mass(mesh);
    stiff_theta_ = assemble_stiffness(mesh, eff.K_full());
    for (int i = 0; i < n_; ++i)
      stiff_u_.push_back(assemble_stiffness(mesh, eff.D_full(i)));
  }

  const Mesh& mesh() const { return *mesh_; }
  const EffectiveCoefficients& eff() const { return *eff_; }
  int species() const { return n_; }
  const MollifierPlan& plan() const { return plan_; }
  const SparseMatrix& mass() const { return mass_; }

  void prepare_systems(double dt) {
    if (dt == cached_dt_) return;
    heat_system_ = stiff_theta_.add_scaled(mass_, 1.0 / dt + eff_->heat_loss);
    species_system_.clear();
    for (int i = 0; i < n_; ++i)
      species_system_.push_back(
          stiff_u_[i].add_scaled(mass_, 1.0 / dt + eff_->A[i]));
    cached_dt_ = dt;
  }

  const SparseMatrix& heat_system() const { return heat_system_; }
  const SparseMatrix& species_system(int i) const { return species_system_[i]; }

  std::vector<double> theta_guess;
  std::vector<std::vector<double>> u_guess;

 private:
  const Mesh* mesh_;
  const EffectiveCoefficients* eff_;
  int n_;
  MollifierPlan plan_;
  SparseMatrix mass_, stiff_theta_;
  std::vector<SparseMatrix> stiff_u_;
  double cached_dt_ = -1.0;
  SparseMatrix heat_system_;
  std::vector<SparseMatrix> species_system_;
};

namespace detail {

inline void assemble_macro_loads(
    const MacroOperators& ops, const MacroState& s,
    const SmoluchowskiParams& smolu,
    const std::vector<std::vector<std::array<double, 2>>>& mg_u,
    const std::vector<std::array<double, 2>>& mg_theta,
    std::vector<double>& heat_load, std::vector<std::vector<double>>& u_load) {
  const Mesh& mesh = ops.mesh();
  const EffectiveCoefficients& eff = ops.eff();
  const int N = ops.species();
  const double h = mesh.h;
  heat_load.assign(mesh.node_count(), 0.0);
  u_load.assign(N, std::vector<double>(mesh.node_count(), 0.0));
  std::vector<double> uq(N), rq(N);

  for (int e : mesh.active_elems) {
    int ei = e % mesh.n, ej = e / mesh.n;
    auto nodes = mesh.elem_nodes(ei, ej);
    for (const auto& q : gauss22()) {
      auto N4 = shape(q.xi, q.eta);
      auto G = shape_grad(q.xi, q.eta);
      double w = q.w * h * h;

      std::array<double, 2> grad_theta{0.0, 0.0}, mgt{0.0, 0.0};
      for (int a = 0; a < 4; ++a) {
        grad_theta[0] += G[a][0] * s.theta0.values[nodes[a]];
        grad_theta[1] += G[a][1] * s.theta0.values[nodes[a]];
        mgt[0] += N4[a] * mg_theta[nodes[a]][0];
        mgt[1] += N4[a] * mg_theta[nodes[a]][1];
      }
      grad_theta[0] /= h;
      grad_theta[1] /= h;

      double soret = 0.0;
      for (int i = 0; i < N; ++i) {
        auto Ti = eff.T_full(i);
        auto Fi = eff.F_full(i);
        std::array<double, 2> mgu{0.0, 0.0}, grad_u{0.0, 0.0};
        double uval = 0.0;
        for (int a = 0; a < 4; ++a) {
          mgu[0] += N4[a] * mg_u[i][nodes[a]][0];
          mgu[1] += N4[a] * mg_u[i][nodes[a]][1];
          grad_u[0] += G[a][0] * s.u0[i].values[nodes[a]];
          grad_u[1] += G[a][1] * s.u0[i].values[nodes[a]];
          uval += N4[a] * s.u0[i].values[nodes[a]];
        }
        grad_u[0] /= h;
        grad_u[1] /= h;
        uq[i] = uval;
        // (T^i grad^delta u_i) . grad theta
        soret += (Ti[0][0] * mgu[0] + Ti[0][1] * mgu[1]) * grad_theta[0] +
                 (Ti[1][0] * mgu[0] + Ti[1][1] * mgu[1]) * grad_theta[1];
        // (F^i grad u_i) . grad^delta theta
        double dufour =
            (Fi[0][0] * grad_u[0] + Fi[0][1] * grad_u[1]) * mgt[0] +
            (Fi[1][0] * grad_u[0] + Fi[1][1] * grad_u[1]) * mgt[1];
        for (int a = 0; a < 4; ++a)
          u_load[i][nodes[a]] += w * dufour * N4[a];
      }
      rq = smoluchowski_rate(uq, smolu);
      for (int i = 0; i < N; ++i)
        for (int a = 0; a < 4; ++a)
          u_load[i][nodes[a]] += w * rq[i] * N4[a];
      for (int a = 0; a < 4; ++a)
        heat_load[nodes[a]] += w * soret * N4[a];
    }
  }
}

}  // namespace detail

// IMEX-Euler step mirroring the micro scheme: effective diffusion, heat
// loss and the A_i u - B_i v exchange implicit, cross couplings and the
// Smoluchowski term explicit, the bulk ODE by nodewise implicit Euler.
inline MacroState step_macro(const MacroState& s, MacroOperators& ops,
                             const SmoluchowskiParams& smolu, double dt,
                             double cg_tol = 1e-10) {
  const Mesh& mesh = ops.mesh();
  const EffectiveCoefficients& eff = ops.eff();
  const int N = ops.species();
  ops.prepare_systems(dt);

  std::vector<std::vector<std::array<double, 2>>> mg_u;
  for (int i = 0; i < N; ++i) mg_u.push_back(ops.plan().gradient(s.u0[i]));
  auto mg_theta = ops.plan().gradient(s.theta0);

  std::vector<double> heat_load;
  std::vector<std::vector<double>> u_load;
  detail::assemble_macro_loads(ops, s, smolu, mg_u, mg_theta, heat_load, u_load);

  MacroState next;
  next.t = s.t + dt;

  {
    std::vector<double> rhs = ops.mass().apply(s.theta0.values);
    for (std::size_t a = 0; a < rhs.size(); ++a)
      rhs[a] = rhs[a] / dt + heat_load[a];
    const std::vector<double>* guess =
        ops.theta_guess.empty() ? &s.theta0.values : &ops.theta_guess;
    CgResult r = solve_cg(ops.heat_system(), rhs, cg_tol, -1,
                          CgConstraint::None, guess);
    if (!r.converged) throw NotConverged("macro heat solve");
    next.theta0 = FeFunction(mesh);
    next.theta0.values = r.x;
    next.theta0.time = next.t;
    ops.theta_guess = r.x;
  }

  ops.u_guess.resize(N);
  for (int i = 0; i < N; ++i) {
    std::vector<double> Mv = ops.mass().apply(s.v0[i].values);
    std::vector<double> rhs = ops.mass().apply(s.u0[i].values);
    for (std::size_t a = 0; a < rhs.size(); ++a)
      rhs[a] = rhs[a] / dt + u_load[i][a] + eff.B[i] * Mv[a];
    const std::vector<double>* guess =
        ops.u_guess[i].empty() ? &s.u0[i].values : &ops.u_guess[i];
    CgResult r = solve_cg(ops.species_system(i), rhs, cg_tol, -1,
                          CgConstraint::None, guess);
    if (!r.converged) throw NotConverged("macro species solve");
    FeFunction f(mesh);
    f.values = r.x;
    f.time = next.t;
    next.u0.push_back(std::move(f));
    ops.u_guess[i] = next.u0.back().values;
  }

  for (int i = 0; i < N; ++i) {
    // pointwise limit of the surface ODE: plain averages, not the
    // |Gamma|/|Y1|-scaled couplings of the u-equation
    double av = eff.a_mean.empty() ? eff.A[i] : eff.a_mean[i];
    double bv = eff.b_mean.empty() ? eff.B[i] : eff.b_mean[i];
    FeFunction v(mesh);
    for (int a = 0; a < mesh.node_count(); ++a)
      v.values[a] = (s.v0[i].values[a] + dt * av * next.u0[i].values[a]) /
                    (1.0 + dt * bv);
    v.time = next.t;
    next.v0.push_back(std::move(v));
  }

  if (next.max_abs() > 1e8) throw BlowUp();
  return next;
}

struct MacroRun {
  std::vector<MacroState> snapshots;
  RunDiagnostics diagnostics;
};

inline MacroRun run_macro(const Mesh& mesh, const EffectiveCoefficients& eff,
                          const SmoluchowskiParams& smolu,
                          const MollifierConfig& moll,
                          const InitialSpec& theta0,
                          const std::vector<InitialSpec>& u0,
                          const std::vector<InitialSpec>& v0,
                          const TimeStepperConfig& tc) {
  MacroOperators ops(mesh, eff, smolu.N, moll);
  MacroState state = init_macro(mesh, theta0, u0, v0);
  const int N = smolu.N;

  MacroRun run;
  run.diagnostics.u_dt_integral.assign(N, 0.0);
  run.diagnostics.v_dt_integral.assign(N, 0.0);
  run.diagnostics.grad_u_sq.assign(N, {});
  run.diagnostics.min_value = state.min_value();

  auto record = [&](const MacroState& s) {
    run.diagnostics.times.push_back(s.t);
    double g = h1_seminorm(s.theta0);
    run.diagnostics.grad_theta_sq.push_back(g * g);
    for (int i = 0; i < N; ++i) {
      double gu = h1_seminorm(s.u0[i]);
      run.diagnostics.grad_u_sq[i].push_back(gu * gu);
    }
    run.snapshots.push_back(s);
  };
  record(state);

  const double dt_base = tc.effective_dt(mesh.h);
  auto times = snapshot_times(tc);
  for (std::size_t sidx = 1; sidx < times.size(); ++sidx) {
    double interval = times[sidx] - state.t;
    double gmax = 0.0;
    auto mg = ops.plan().gradient(state.theta0);
    for (int i = 0; i < N; ++i) {
      auto mgu = ops.plan().gradient(state.u0[i]);
      for (const auto& v : mgu)
        gmax = std::max(gmax, std::hypot(v[0], v[1]));
    }
    for (const auto& v : mg) gmax = std::max(gmax, std::hypot(v[0], v[1]));
    double dt_eff = dt_base;
    while (gmax > 0.0 && dt_eff > 0.5 * mesh.h / gmax) dt_eff *= 0.5;

    int steps = std::max(1, static_cast<int>(std::ceil(interval / dt_eff - 1e-12)));
    double dt = interval / steps;
    for (int k = 0; k < steps; ++k) {
      MacroState prev = std::move(state);
      state = step_macro(prev, ops, smolu, dt, tc.cg_tol);
      FeFunction diff(mesh);
      for (int a = 0; a < mesh.node_count(); ++a)
        diff.values[a] = (state.theta0.values[a] - prev.theta0.values[a]) / dt;
      double dtheta = l2_norm(diff);
      run.diagnostics.theta_dt_integral += dtheta * dtheta * dt;
      for (int i = 0; i < N; ++i) {
        for (int a = 0; a < mesh.node_count(); ++a)
          diff.values[a] = (state.u0[i].values[a] - prev.u0[i].values[a]) / dt;
        double du = l2_norm(diff);
        run.diagnostics.u_dt_integral[i] += du * du * dt;
        for (int a = 0; a < mesh.node_count(); ++a)
          diff.values[a] = (state.v0[i].values[a] - prev.v0[i].values[a]) / dt;
        double dv = l2_norm(diff);
        run.diagnostics.v_dt_integral[i] += dv * dv * dt;
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
