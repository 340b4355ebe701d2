#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "perfhom/cell.hpp"

using namespace perfhom;

namespace {

CellGeometry default_cell() {
  return build_cell_geometry({0.25, 0.25}, {0.75, 0.75},
                             {HoleFace::Top, HoleFace::Right});
}

EffectiveCoefficients effective_for(const CellGeometry& cell, int n,
                                    const TensorFieldSpec& kappa) {
  Mesh mesh = build_cell_mesh(cell, n);
  CellSolution cs = solve_cell_problem(mesh, kappa);
  PhysicalParams p = PhysicalParams::defaults(1);
  p.kappa = kappa;
  std::vector<CellSolution> ucs{solve_cell_problem(mesh, p.d[0])};
  return effective_tensors(cs, ucs, p, cell, mesh);
}

}  // namespace

TEST_CASE("trivial cell: constant coefficient, no hole") {
  CellGeometry cell = cell_geometry_without_hole();
  Mesh mesh = build_cell_mesh(cell, 16);
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::constant(2.0));
  CellSolution cs = solve_cell_problem(mesh, kappa);
  for (int j = 0; j < 2; ++j) {
    double l2 = l2_norm(cs.comp[j]);
    double h1 = h1_seminorm(cs.comp[j]);
    CHECK(std::sqrt(l2 * l2 + h1 * h1) <= 1e-9);
  }
  PhysicalParams p = PhysicalParams::defaults(1);
  p.kappa = kappa;
  std::vector<CellSolution> ucs{solve_cell_problem(mesh, p.d[0])};
  EffectiveCoefficients eff = effective_tensors(cs, ucs, p, cell, mesh);
  CHECK(std::abs(eff.K.xx - 2.0) <= 1e-10);
  CHECK(std::abs(eff.K.yy - 2.0) <= 1e-10);
  CHECK(std::abs(eff.K_offdiag[0]) <= 1e-10);
  CHECK(std::abs(eff.K_offdiag[1]) <= 1e-10);
}

TEST_CASE("cell solutions are zero mean and periodic") {
  Mesh mesh = build_cell_mesh(default_cell(), 32);
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2.0, 1.0));
  CellSolution cs = solve_cell_problem(mesh, kappa);
  SparseMatrix M = assemble_mass(mesh);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> Mw = M.apply(cs.comp[j].values);
    double mean = 0.0;
    for (double v : Mw) mean += v;
    CHECK(std::abs(mean) <= 1e-9);
    for (const auto& [master, slave] : mesh.periodic_pairs)
      CHECK(cs.comp[j].values[master] == cs.comp[j].values[slave]);
  }
}

TEST_CASE("laminate oracle: harmonic and arithmetic means") {
  auto lam = TensorFieldSpec::isotropic(ScalarFieldSpec::laminate(1.0, 4.0));
  EffectiveCoefficients eff =
      effective_for(cell_geometry_without_hole(), 64, lam);
  CHECK(eff.K.xx == Catch::Approx(1.6).margin(1e-3));
  CHECK(eff.K.yy == Catch::Approx(2.5).margin(1e-3));
  CHECK(std::abs(eff.K_offdiag[0]) <= 1e-6);
  CHECK(std::abs(eff.K_offdiag[1]) <= 1e-6);
}

TEST_CASE("perforated cell: symmetry, bounds, mesh stability") {
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::constant(1.0));
  EffectiveCoefficients e32 = effective_for(default_cell(), 32, kappa);
  EffectiveCoefficients e64 = effective_for(default_cell(), 64, kappa);
  // symmetric, eigenvalues strictly below the coefficient maximum
  CHECK(std::abs(e64.K_offdiag[0] - e64.K_offdiag[1]) <=
        1e-6 * std::max(1.0, std::abs(e64.K.xx)));
  CHECK(e64.K.xx < 1.0);
  CHECK(e64.K.yy < 1.0);
  CHECK(e64.K.xx > 0.1);
  // Richardson stability between resolutions
  CHECK(std::abs(e32.K.xx - e64.K.xx) <= 1e-2 * std::abs(e64.K.xx));
  CHECK(std::abs(e32.K.yy - e64.K.yy) <= 1e-2 * std::abs(e64.K.yy));
}

TEST_CASE("voigt bound for oscillating coefficients") {
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2.0, 1.0));
  EffectiveCoefficients eff =
      effective_for(cell_geometry_without_hole(), 32, kappa);
  CHECK(eff.K.xx <= kappa.max_value() + 1e-6);
  CHECK(eff.K.yy <= kappa.max_value() + 1e-6);
  CHECK(eff.K.xx >= 0.5);  // strictly positive floor
}

TEST_CASE("surface averages of deposition and heat-loss coefficients") {
  CellGeometry cell = default_cell();
  Mesh mesh = build_cell_mesh(cell, 32);
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::constant(1.0));
  CellSolution cs = solve_cell_problem(mesh, kappa);
  PhysicalParams p = PhysicalParams::defaults(2);
  p.kappa = kappa;
  p.a[0] = ScalarFieldSpec::constant(3.0);
  std::vector<CellSolution> ucs{solve_cell_problem(mesh, p.d[0]),
                                solve_cell_problem(mesh, p.d[1])};
  EffectiveCoefficients eff = effective_tensors(cs, ucs, p, cell, mesh);
  // A_i = a |Gamma| / |Y1|, heat loss = g0 |Gamma_R| / |Y1|
  CHECK(eff.A[0] == Catch::Approx(3.0 * 2.0 / 0.75).margin(1e-10));
  CHECK(eff.A[1] == Catch::Approx(1.0 * 2.0 / 0.75).margin(1e-10));
  CHECK(eff.B[0] == Catch::Approx(1.0 * 2.0 / 0.75).margin(1e-10));
  CHECK(eff.heat_loss == Catch::Approx(1.0 * 1.0 / 0.75).margin(1e-10));
}

TEST_CASE("index convention switch changes only the cross tensor") {
  CellGeometry cell = default_cell();
  Mesh mesh = build_cell_mesh(cell, 32);
  PhysicalParams p = PhysicalParams::defaults(3);
  p.tau = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(1.0, 0.5));
  CellSolution cs = solve_cell_problem(mesh, p.kappa);
  std::vector<CellSolution> ucs;
  for (int i = 0; i < 3; ++i) ucs.push_back(solve_cell_problem(mesh, p.d[i]));
  EffectiveCoefficients ep =
      effective_tensors(cs, ucs, p, cell, mesh, IndexConvention::Paper);
  EffectiveCoefficients es =
      effective_tensors(cs, ucs, p, cell, mesh, IndexConvention::Symmetric);
  CHECK(ep.K.xx == es.K.xx);
  CHECK(ep.D[0].xx == es.D[0].xx);
  CHECK(ep.A[0] == es.A[0]);
  // both conventions keep the zeroth-order average part
  for (int i = 0; i < 3; ++i) {
    CHECK(std::isfinite(ep.T[i].xx));
    CHECK(std::isfinite(es.T[i].xx));
  }
}

TEST_CASE("eval_corrector wraps periodically and hits nodes exactly") {
  Mesh mesh = build_cell_mesh(default_cell(), 16);
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2.0, 1.0));
  CellSolution cs = solve_cell_problem(mesh, kappa);
  double eps = 0.25;

  CorrectorValue a = eval_corrector(cs, {1.25 * eps, 0.5 * eps}, eps);
  CorrectorValue b = eval_corrector(cs, {0.25 * eps, 0.5 * eps}, eps);
  CHECK(a.value[0] == Catch::Approx(b.value[0]).margin(1e-12));
  CHECK(a.value[1] == Catch::Approx(b.value[1]).margin(1e-12));

  // a point mapping to a cell-mesh node reproduces the nodal value
  int node = mesh.node_id[mesh.grid_node(2, 3)];
  CorrectorValue c =
      eval_corrector(cs, {eps * 2.0 / 16.0, eps * 3.0 / 16.0}, eps);
  CHECK(c.value[0] == Catch::Approx(cs.comp[0].values[node]).margin(1e-12));

  // the hole interior is rejected
  CHECK_THROWS_AS(eval_corrector(cs, {0.5 * eps, 0.5 * eps}, eps),
                  PointInsideHole);

  // trivial solution evaluates to zero
  CellSolution trivial;
  trivial.mesh = &mesh;
  trivial.comp[0] = FeFunction(mesh);
  trivial.comp[1] = FeFunction(mesh);
  CorrectorValue z = eval_corrector(trivial, {0.05, 0.05}, eps);
  CHECK(z.value[0] == 0.0);
  CHECK(z.value[1] == 0.0);
}
