#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "perfhom/corrector.hpp"

using namespace perfhom;

namespace {

CellGeometry default_cell() {
  return build_cell_geometry({0.25, 0.25}, {0.75, 0.75},
                             {HoleFace::Top, HoleFace::Right});
}

Mesh macro_mesh(double eps, int npc) {
  return build_perforated_mesh(
      make_perforated_domain(eps, cell_geometry_without_hole()), npc);
}

}  // namespace

TEST_CASE("recovered gradient is exact on affine fields") {
  Mesh mesh = macro_mesh(0.25, 8);
  FeFunction f = FeFunction::interpolant(
      mesh, [](double x, double y) { return 2.0 + 3.0 * x - y; });
  auto g = recover_gradient(f);
  for (int a = 0; a < mesh.node_count(); ++a) {
    CHECK(g[0].values[a] == Catch::Approx(3.0).margin(1e-12));
    CHECK(g[1].values[a] == Catch::Approx(-1.0).margin(1e-12));
  }
}

TEST_CASE("reconstruction with trivial cells is the plain lift") {
  double eps = 0.25;
  Mesh mmesh = macro_mesh(eps, 8);
  Mesh pmesh = build_perforated_mesh(make_perforated_domain(eps, default_cell()), 8);
  MacroState s = init_macro(mmesh, InitialSpec::cosine(1.0, 0.5),
                            {InitialSpec::constant(0.5)},
                            {InitialSpec::constant(0.0)});
  CellSolution trivial;  // no cell data: corrector term vanishes
  std::vector<CellSolution> utriv(1);
  Reconstruction rec = reconstruct(s, trivial, utriv, pmesh, eps);
  for (int a = 0; a < pmesh.node_count(); ++a) {
    CHECK(rec.theta1e.values[a] == rec.theta0e.values[a]);
    CHECK(rec.theta1e_cut.values[a] == rec.theta0e.values[a]);
    CHECK(rec.u1e[0].values[a] == Catch::Approx(0.5).margin(1e-13));
    CHECK(rec.v0e[0].values[a] == 0.0);
  }
}

TEST_CASE("constant macro fields kill the corrector term") {
  double eps = 0.25;
  Mesh mmesh = macro_mesh(eps, 8);
  Mesh pmesh = build_perforated_mesh(make_perforated_domain(eps, default_cell()), 8);
  Mesh cmesh = build_cell_mesh(default_cell(), 16);
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2.0, 1.0));
  CellSolution cs = solve_cell_problem(cmesh, kappa);
  MacroState s = init_macro(mmesh, InitialSpec::constant(1.0),
                            {InitialSpec::constant(1.0)},
                            {InitialSpec::constant(0.0)});
  std::vector<CellSolution> ucs{cs};
  Reconstruction rec = reconstruct(s, cs, ucs, pmesh, eps);
  for (int a = 0; a < pmesh.node_count(); ++a) {
    CHECK(rec.theta1e.values[a] == Catch::Approx(1.0).margin(1e-11));
    CHECK(rec.u1e[0].values[a] == Catch::Approx(1.0).margin(1e-11));
  }
}

TEST_CASE("affine macro field reproduces the first cell corrector") {
  double eps = 0.25;
  Mesh mmesh = macro_mesh(eps, 8);
  Mesh pmesh = build_perforated_mesh(make_perforated_domain(eps, default_cell()), 8);
  Mesh cmesh = build_cell_mesh(default_cell(), 16);
  auto kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2.0, 1.0));
  CellSolution cs = solve_cell_problem(cmesh, kappa);
  MacroState s = init_macro(mmesh, InitialSpec::affine(0.0, 1.0, 0.0),
                            {InitialSpec::affine(0.0, 1.0, 0.0)},
                            {InitialSpec::constant(0.0)});
  std::vector<CellSolution> ucs{cs};
  Reconstruction rec = reconstruct(s, cs, ucs, pmesh, eps);
  for (int a = 0; a < pmesh.node_count(); ++a) {
    auto xy = pmesh.node_coord(a);
    CorrectorValue cv = eval_corrector(cs, {xy[0], xy[1]}, eps);
    double expected = xy[0] + eps * cv.value[0];
    CHECK(rec.theta1e.values[a] == Catch::Approx(expected).margin(1e-11));
  }
}

TEST_CASE("identical trajectories give vanishing mismatch norms") {
  double eps = 0.25;
  Mesh mesh = macro_mesh(eps, 8);  // no holes: surface part is empty
  auto field = [&](double t) {
    FeFunction f = FeFunction::interpolant(
        mesh, [](double x, double y) { return 1.0 + 0.3 * x + 0.2 * y; });
    f.time = t;
    return f;
  };
  std::vector<MicroState> micro(2);
  std::vector<MacroState> macro(2);
  for (int k = 0; k < 2; ++k) {
    double t = 0.05 * k;
    micro[k].t = t;
    micro[k].theta = field(t);
    micro[k].u.push_back(field(t));
    micro[k].v.emplace_back(mesh);
    macro[k].t = t;
    macro[k].theta0 = field(t);
    macro[k].u0.push_back(field(t));
    macro[k].v0.push_back(field(t));
  }
  CellSolution trivial;
  std::vector<CellSolution> utriv(1);
  ErrorRecord rec = corrector_norms(micro, macro, trivial, utriv, eps);
  CHECK(rec.w1_sq <= 1e-20);
  CHECK(rec.w2_int <= 1e-20);
  CHECK(rec.surf_sq <= 1e-20);
  CHECK(rec.w0 <= 1e-20);

  std::vector<MacroState> short_macro{macro[0]};
  CHECK_THROWS_AS(corrector_norms(micro, short_macro, trivial, utriv, eps),
                  MeshMismatch);
  macro[1].t += 1.0;
  CHECK_THROWS_AS(corrector_norms(micro, macro, trivial, utriv, eps),
                  MeshMismatch);
}

TEST_CASE("initial mismatch matches the final bulk mismatch at time zero") {
  double eps = 0.25;
  Mesh mesh = macro_mesh(eps, 8);
  MicroState ms;
  ms.theta = FeFunction::interpolant(mesh, [](double, double) { return 1.1; });
  MacroState hs;
  hs.theta0 = FeFunction::interpolant(mesh, [](double, double) { return 1.0; });
  CellSolution trivial;
  std::vector<CellSolution> none;
  ErrorRecord rec =
      corrector_norms({ms}, {hs}, trivial, none, eps);
  // |Omega| = 1 and the offset is 0.1, so the squared mismatch is 0.01
  CHECK(rec.w1_sq == Catch::Approx(0.01).margin(1e-12));
  CHECK(rec.w0 == Catch::Approx(rec.w1_sq).margin(1e-15));
}

TEST_CASE("rate fitting on synthetic data") {
  std::vector<std::array<double, 2>> exact{{0.25, 0.25}, {0.125, 0.125}, {0.0625, 0.0625}};
  RateFit f1 = fit_rate(exact);
  CHECK(f1.slope == Catch::Approx(1.0).margin(1e-12));
  CHECK(f1.constant == Catch::Approx(1.0).margin(1e-12));

  std::vector<std::array<double, 2>> quad;
  for (double e : {0.25, 0.125, 0.0625}) quad.push_back({e, 3.0 * e * e});
  RateFit f2 = fit_rate(quad);
  CHECK(f2.slope == Catch::Approx(2.0).margin(1e-12));
  CHECK(f2.constant == Catch::Approx(3.0).margin(1e-10));

  std::vector<std::array<double, 2>> saturating;
  for (double e : {0.25, 0.125, 0.0625}) saturating.push_back({e, e + 0.01});
  RateFit f3 = fit_rate(saturating);
  CHECK(f3.slope > 0.0);
  CHECK(f3.slope < 1.0);

  CHECK_THROWS_AS(fit_rate({{0.25, 1.0}, {0.125, 0.5}}), TooFewPoints);
  CHECK_THROWS_AS(fit_rate({{0.25, 1.0}, {0.125, -0.5}, {0.0625, 0.25}}),
                  NonPositiveValue);
}

TEST_CASE("oscillation diagnostic vanishes for constants and stays bounded") {
  std::vector<double> eps_list{0.25, 0.125, 0.0625};
  CellGeometry cell = default_cell();

  auto rows_c = pep_diagnostic(ScalarFieldSpec::constant(2.0), eps_list, 8, cell);
  REQUIRE(rows_c.size() == 3);
  for (const auto& r : rows_c) CHECK(r.ratio <= 1e-10);

  auto rows_t = pep_diagnostic(ScalarFieldSpec::trig(2.0, 1.0), eps_list, 8, cell);
  for (const auto& r : rows_t) {
    CHECK(r.ratio > 0.0);
    CHECK(r.ratio < 10.0);
  }
}

TEST_CASE("trace diagnostic is uniform in eps for constants") {
  CellGeometry cell = default_cell();
  for (double eps : {0.5, 0.25, 0.125}) {
    Mesh mesh = build_perforated_mesh(make_perforated_domain(eps, cell), 8);
    FeFunction one(mesh, 1.0);
    // eps |Gamma^eps| / |Omega^eps| = |Gamma| / |Y1| independently of eps
    CHECK(trace_diagnostic(one, eps) == Catch::Approx(2.0 / 0.75).margin(1e-10));
    FeFunction f = FeFunction::interpolant(
        mesh, [](double x, double y) { return 0.1 + x + 0.5 * y; });
    CHECK(trace_diagnostic(f, eps) < 10.0);
  }
}

TEST_CASE("convergence study input validation") {
  StudyConfig cfg;
  cfg.cell = default_cell();
  cfg.eps_list = {0.25, 0.125};
  CHECK_THROWS_AS(convergence_study(cfg), TooFewPoints);
  cfg.eps_list = {0.125, 0.25, 0.0625};
  CHECK_THROWS_AS(convergence_study(cfg), ValidationError);
}
