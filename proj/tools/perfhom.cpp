#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "perfhom/config.hpp"
#include "perfhom/corrector.hpp"
#include "perfhom/macro.hpp"
#include "perfhom/micro.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace perfhom;

namespace {

std::string g17(double v) { return detail::format_g17(v); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

void write_status(const fs::path& outdir, const std::string& status,
                  const std::string& message) {
  std::error_code ec;
  fs::create_directories(outdir, ec);
  json j;
  j["status"] = status;
  j["message"] = message;
  write_text(outdir / "status.json", j.dump(2) + "\n");
}

json tensor_json(const std::array<std::array<double, 2>, 2>& m) {
  return json::array({json::array({m[0][0], m[0][1]}),
                      json::array({m[1][0], m[1][1]})});
}

json effective_json(const EffectiveCoefficients& eff) {
  json j;
  j["K"] = tensor_json(eff.K_full());
  j["T"] = json::array();
  j["D"] = json::array();
  j["F"] = json::array();
  for (std::size_t i = 0; i < eff.T.size(); ++i) {
    j["T"].push_back(tensor_json(eff.T_full(static_cast<int>(i))));
    j["D"].push_back(tensor_json(eff.D_full(static_cast<int>(i))));
    j["F"].push_back(tensor_json(eff.F_full(static_cast<int>(i))));
  }
  j["A"] = eff.A;
  j["B"] = eff.B;
  j["heat_loss_factor"] = eff.heat_loss;
  return j;
}

std::string snapshot_csv(const Mesh& mesh, const FeFunction& theta,
                         const std::vector<FeFunction>& u) {
  std::string s = "x,y,theta";
  for (std::size_t i = 0; i < u.size(); ++i)
    s += ",u" + std::to_string(i + 1);
  s += "\n";
  for (int a = 0; a < mesh.node_count(); ++a) {
    auto xy = mesh.node_coord(a);
    s += g17(xy[0]) + "," + g17(xy[1]) + "," + g17(theta.values[a]);
    for (const auto& f : u) s += "," + g17(f.values[a]);
    s += "\n";
  }
  return s;
}

std::string surface_csv(const Mesh& mesh,
                        const std::vector<SurfaceFunction>& v) {
  std::string s = "x,y";
  for (std::size_t i = 0; i < v.size(); ++i)
    s += ",v" + std::to_string(i + 1);
  s += "\n";
  for (int k = 0; k < mesh.surface_node_count(); ++k) {
    auto xy = mesh.node_coord(mesh.surface_nodes[k]);
    s += g17(xy[0]) + "," + g17(xy[1]);
    for (const auto& f : v) s += "," + g17(f.values[k]);
    s += "\n";
  }
  return s;
}

std::string bulk_surface_csv(const Mesh& mesh,
                             const std::vector<FeFunction>& v) {
  std::string s = "x,y";
  for (std::size_t i = 0; i < v.size(); ++i)
    s += ",v" + std::to_string(i + 1);
  s += "\n";
  for (int a = 0; a < mesh.node_count(); ++a) {
    auto xy = mesh.node_coord(a);
    s += g17(xy[0]) + "," + g17(xy[1]);
    for (const auto& f : v) s += "," + g17(f.values[a]);
    s += "\n";
  }
  return s;
}

std::string rates_csv(const std::vector<ErrorRecord>& records) {
  std::string s = "epsilon,w1_sq,w2_int,surf_sq,w0\n";
  for (const auto& r : records)
    s += g17(r.epsilon) + "," + g17(r.w1_sq) + "," + g17(r.w2_int) + "," +
         g17(r.surf_sq) + "," + g17(r.w0) + "\n";
  return s;
}

// log-log polyline chart, one series per quantity, slope-1 reference line
std::string rates_svg(const std::vector<ErrorRecord>& records) {
  const double W = 640, H = 480, margin = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto collect = [&](double v) {
    if (v > 0.0) {
      ymin = std::min(ymin, std::log10(v));
      ymax = std::max(ymax, std::log10(v));
    }
  };
  for (const auto& r : records) {
    double lx = std::log10(r.epsilon);
    xmin = std::min(xmin, lx);
    xmax = std::max(xmax, lx);
    collect(r.w1_sq);
    collect(r.w2_int);
    collect(r.surf_sq);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double lx) {
    return margin + (lx - xmin) / (xmax - xmin) * (W - 2 * margin);
  };
  auto py = [&](double ly) {
    return H - margin - (ly - ymin) / (ymax - ymin) * (H - 2 * margin);
  };
  auto polyline = [&](const std::vector<std::array<double, 2>>& pts,
                      const std::string& color, const std::string& dash) {
    std::string s = "<polyline fill=\"none\" stroke=\"" + color +
                    "\" stroke-width=\"2\"" + dash + " points=\"";
    for (const auto& p : pts)
      s += std::to_string(px(std::log10(p[0]))) + "," +
           std::to_string(py(std::log10(p[1]))) + " ";
    s += "\"/>\n";
    return s;
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  std::to_string(static_cast<int>(W)) + "\" height=\"" +
                  std::to_string(static_cast<int>(H)) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::vector<std::array<double, 2>> p1, p2, ps, ref;
  for (const auto& r : records) {
    if (r.w1_sq > 0) p1.push_back({r.epsilon, r.w1_sq});
    if (r.w2_int > 0) p2.push_back({r.epsilon, r.w2_int});
    if (r.surf_sq > 0) ps.push_back({r.epsilon, r.surf_sq});
  }
  // slope-1 reference through the first w1 point
  if (!p1.empty())
    for (const auto& r : records)
      ref.push_back({r.epsilon, p1.front()[1] * r.epsilon / p1.front()[0]});
  s += polyline(p1, "#1f77b4", "");
  s += polyline(p2, "#d62728", "");
  s += polyline(ps, "#2ca02c", "");
  if (!ref.empty())
    s += polyline(ref, "#888888", " stroke-dasharray=\"6,4\"");
  s += "<text x=\"" + std::to_string(margin) +
       "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
       "blue: w1_sq &#160; red: w2_int &#160; green: surf_sq &#160; "
       "dashed: slope 1</text>\n";
  s += "<text x=\"" + std::to_string(W / 2 - 30) + "\" y=\"" +
       std::to_string(H - 16) +
       "\" font-family=\"sans-serif\" font-size=\"13\">log10 epsilon</text>\n";
  s += "</svg>\n";
  return s;
}

struct CellArtifacts {
  CellSolution theta_cell;
  std::vector<CellSolution> u_cells;
  EffectiveCoefficients eff;
  Mesh cell_mesh;
};

CellArtifacts solve_cells(const StudyConfig& st) {
  CellArtifacts art;
  art.cell_mesh = build_cell_mesh(st.cell, st.cell_mesh_n);
  art.theta_cell = solve_cell_problem(art.cell_mesh, st.params.kappa);
  for (int i = 0; i < st.params.N; ++i)
    art.u_cells.push_back(solve_cell_problem(art.cell_mesh, st.params.d[i]));
  art.eff = effective_tensors(art.theta_cell, art.u_cells, st.params, st.cell,
                              art.cell_mesh, st.convention);
  return art;
}

int run_cell(const RunConfig& cfg, const fs::path& outdir) {
  CellArtifacts art = solve_cells(cfg.study);
  write_text(outdir / "effective.json", effective_json(art.eff).dump(2) + "\n");
  return 0;
}

int run_micro_cmd(const RunConfig& cfg, const fs::path& outdir) {
  const StudyConfig& st = cfg.study;
  PerforatedDomain dom = make_perforated_domain(cfg.epsilon, st.cell);
  Mesh mesh = build_perforated_mesh(dom, st.n_per_cell);
  InitialSpec tm, tM;
  std::vector<InitialSpec> um, uM, vinit;
  detail::study_initial_data(st, cfg.epsilon, tm, tM, um, uM, vinit);
  MicroRun run = run_micro(mesh, st.params, st.smolu, st.moll, tm, um, vinit,
                           st.time);
  for (std::size_t k = 0; k < run.snapshots.size(); ++k) {
    char name[64];
    std::snprintf(name, sizeof(name), "snapshot_%03zu.csv", k);
    write_text(outdir / name,
               snapshot_csv(mesh, run.snapshots[k].theta, run.snapshots[k].u));
    std::snprintf(name, sizeof(name), "surface_%03zu.csv", k);
    write_text(outdir / name, surface_csv(mesh, run.snapshots[k].v));
  }
  json j;
  j["times"] = run.diagnostics.times;
  j["grad_theta_sq"] = run.diagnostics.grad_theta_sq;
  j["theta_dt_integral"] = run.diagnostics.theta_dt_integral;
  j["u_dt_integral"] = run.diagnostics.u_dt_integral;
  j["v_dt_integral"] = run.diagnostics.v_dt_integral;
  j["min_value"] = run.diagnostics.min_value;
  j["positivity_ok"] = run.diagnostics.positivity_ok;
  write_text(outdir / "diagnostics.json", j.dump(2) + "\n");
  return 0;
}

int run_macro_cmd(const RunConfig& cfg, const fs::path& outdir) {
  const StudyConfig& st = cfg.study;
  CellArtifacts art = solve_cells(st);
  Mesh mesh = build_perforated_mesh(
      make_perforated_domain(cfg.epsilon, cell_geometry_without_hole()),
      st.n_per_cell);
  InitialSpec tm, tM;
  std::vector<InitialSpec> um, uM, vinit;
  detail::study_initial_data(st, cfg.epsilon, tm, tM, um, uM, vinit);
  MacroRun run = run_macro(mesh, art.eff, st.smolu, st.moll, tM, uM, vinit,
                           st.time);
  write_text(outdir / "effective.json", effective_json(art.eff).dump(2) + "\n");
  for (std::size_t k = 0; k < run.snapshots.size(); ++k) {
    char name[64];
    std::snprintf(name, sizeof(name), "snapshot_%03zu.csv", k);
    write_text(outdir / name, snapshot_csv(mesh, run.snapshots[k].theta0,
                                           run.snapshots[k].u0));
    std::snprintf(name, sizeof(name), "surface_%03zu.csv", k);
    write_text(outdir / name, bulk_surface_csv(mesh, run.snapshots[k].v0));
  }
  json j;
  j["times"] = run.diagnostics.times;
  j["min_value"] = run.diagnostics.min_value;
  j["positivity_ok"] = run.diagnostics.positivity_ok;
  write_text(outdir / "diagnostics.json", j.dump(2) + "\n");
  return 0;
}

int run_correct(const RunConfig& cfg, const fs::path& outdir,
                const std::string& svg_file, int threads) {
  const StudyConfig& st = cfg.study;
  if (st.eps_list.size() < 3) throw TooFewPoints();
  for (std::size_t k = 1; k < st.eps_list.size(); ++k)
    if (!(st.eps_list[k] < st.eps_list[k - 1]))
      throw ValidationError("eps_list must be strictly decreasing");

  CellArtifacts art = solve_cells(st);
  std::vector<ErrorRecord> records(st.eps_list.size());
  std::vector<std::exception_ptr> errors(st.eps_list.size());

  if (threads > 1) {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    for (std::size_t k = 0; k < st.eps_list.size(); ++k) {
      pool.emplace_back([&, k] {
        try {
          records[k] = study_single_eps(st, st.eps_list[k], art.theta_cell,
                                        art.u_cells, art.eff);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
      if (pool.size() >= static_cast<std::size_t>(threads) ||
          k + 1 == st.eps_list.size()) {
        for (auto& t : pool) t.join();
        pool.clear();
      }
    }
    (void)next;
  } else {
    for (std::size_t k = 0; k < st.eps_list.size(); ++k)
      records[k] = study_single_eps(st, st.eps_list[k], art.theta_cell,
                                    art.u_cells, art.eff);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::array<double, 2>> p1, p2, ps;
  for (const auto& r : records) {
    p1.push_back({r.epsilon, r.w1_sq});
    p2.push_back({r.epsilon, r.w2_int});
    ps.push_back({r.epsilon, r.surf_sq});
  }
  RateFit f1 = fit_rate(p1), f2 = fit_rate(p2), fsf = fit_rate(ps);

  write_text(outdir / "rates.csv", rates_csv(records));
  json j;
  j["records"] = json::array();
  for (const auto& r : records) {
    json jr;
    jr["epsilon"] = r.epsilon;
    jr["w1_sq"] = r.w1_sq;
    jr["w1_sq_int"] = r.w1_sq_int;
    jr["w2_int"] = r.w2_int;
    jr["w2_int_cutoff"] = r.w2_int_cutoff;
    jr["surf_sq"] = r.surf_sq;
    jr["w0"] = r.w0;
    j["records"].push_back(jr);
  }
  j["slopes"] = {{"w1_sq", f1.slope}, {"w2_int", f2.slope}, {"surf_sq", fsf.slope}};
  j["constants"] = {{"w1_sq", f1.constant},
                    {"w2_int", f2.constant},
                    {"surf_sq", fsf.constant}};
  j["effective"] = effective_json(art.eff);
  write_text(outdir / "report.json", j.dump(2) + "\n");
  if (!svg_file.empty()) write_text(svg_file, rates_svg(records));
  return 0;
}

int run_check(const RunConfig&, const fs::path& outdir) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "pass" : "FAIL") << "  " << name << "\n";
    if (!ok) ++failures;
  };

  {  // shape functions: partition of unity, gradient rows sum to zero
    bool ok = true;
    for (double xi : {0.1, 0.5, 0.9})
      for (double eta : {0.2, 0.7}) {
        auto N = perfhom::detail::shape(xi, eta);
        auto G = perfhom::detail::shape_grad(xi, eta);
        double sn = N[0] + N[1] + N[2] + N[3];
        double gx = G[0][0] + G[1][0] + G[2][0] + G[3][0];
        double gy = G[0][1] + G[1][1] + G[2][1] + G[3][1];
        ok = ok && std::abs(sn - 1.0) < 1e-14 && std::abs(gx) < 1e-14 &&
             std::abs(gy) < 1e-14;
      }
    check("shape partition of unity", ok);
  }
  {  // stiffness rows sum to zero
    CellGeometry cell = cell_geometry_without_hole();
    Mesh mesh = build_cell_mesh(cell, 8);
    SparseMatrix A = assemble_stiffness(
        mesh, TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2, 1)).as_eval(),
        ScaleMode::Cell);
    std::vector<double> ones(mesh.node_count(), 1.0);
    std::vector<double> r = A.apply(ones);
    double m = 0.0;
    for (double v : r) m = std::max(m, std::abs(v));
    check("stiffness row sums vanish", m < 1e-12);
  }
  {  // laminate effective tensor oracle
    CellGeometry cell = cell_geometry_without_hole();
    Mesh mesh = build_cell_mesh(cell, 64);
    TensorFieldSpec lam =
        TensorFieldSpec::isotropic(ScalarFieldSpec::laminate(1.0, 4.0));
    CellSolution cs = solve_cell_problem(mesh, lam);
    PhysicalParams p = PhysicalParams::defaults(1);
    p.kappa = lam;
    std::vector<CellSolution> ucs{solve_cell_problem(mesh, p.d[0])};
    EffectiveCoefficients eff =
        effective_tensors(cs, ucs, p, cell, mesh);
    check("laminate harmonic/arithmetic oracle",
          std::abs(eff.K.xx - 1.6) < 1e-3 && std::abs(eff.K.yy - 2.5) < 1e-3);
  }
  {  // truncated Smoluchowski first moment
    SmoluchowskiParams full = SmoluchowskiParams::constant_kernel(3);
    SmoluchowskiParams trunc = SmoluchowskiParams::truncated_kernel(3);
    bool ok = true;
    unsigned long long seed = 88172645463325252ull;
    auto rnd = [&] {
      seed ^= seed << 13;
      seed ^= seed >> 7;
      seed ^= seed << 17;
      return static_cast<double>(seed % 1000000) / 1000000.0;
    };
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> s{rnd(), rnd(), rnd()};
      auto rf = smoluchowski_rate(s, full);
      auto rt = smoluchowski_rate(s, trunc);
      double mf = rf[0] + 2 * rf[1] + 3 * rf[2];
      double mt = rt[0] + 2 * rt[1] + 3 * rt[2];
      ok = ok && mf <= 1e-12 && std::abs(mt) <= 1e-12;
    }
    check("Smoluchowski first-moment inequality", ok);
  }
  {  // cut-off norms scale like sqrt(eps)
    CellGeometry cell = cell_geometry_without_hole();
    std::vector<std::array<double, 2>> pts;
    for (double eps : {0.25, 0.125, 0.0625}) {
      Mesh mesh = build_perforated_mesh(make_perforated_domain(eps, cell), 16);
      pts.push_back({eps, cutoff_norms(mesh, eps).one_minus_m_l2});
    }
    RateFit fit = fit_rate(pts);
    check("cut-off L2 slope near 1/2", std::abs(fit.slope - 0.5) < 0.15);
  }
  {  // rate fitting on exact data
    RateFit f = fit_rate({{0.25, 0.25}, {0.125, 0.125}, {0.0625, 0.0625}});
    RateFit g = fit_rate({{0.25, 3 * 0.25 * 0.25},
                          {0.125, 3 * 0.125 * 0.125},
                          {0.0625, 3 * 0.0625 * 0.0625}});
    check("rate fit recovers exact slopes",
          std::abs(f.slope - 1.0) < 1e-12 && std::abs(g.slope - 2.0) < 1e-10 &&
              std::abs(g.constant - 3.0) < 1e-9);
  }
  json j;
  j["failures"] = failures;
  write_text(outdir / "check.json", j.dump(2) + "\n");
  return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"periodic homogenization toolkit for perforated domains"};
  app.require_subcommand(1);

  std::string config_path, outdir_cli, svg_file;
  int threads = 0;
  bool deterministic = false;
  for (const char* name : {"cell", "micro", "macro", "correct", "check"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "configuration file");
    sub->add_option("-o,--outdir", outdir_cli, "output directory");
    sub->add_option("--svg", svg_file, "write a log-log rate chart");
    sub->add_option("--threads", threads, "worker threads for sweeps");
    sub->add_flag("--deterministic", deterministic,
                  "force bitwise-reproducible output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  std::string sub = app.get_subcommands().front()->get_name();

  if (threads == 0) {
    if (const char* env = std::getenv("PERFHOM_THREADS"))
      threads = std::atoi(env);
  }
  if (threads <= 0 || deterministic) threads = 1;

  fs::path outdir = outdir_cli.empty() ? fs::path(".") : fs::path(outdir_cli);
  RunConfig cfg;
  try {
    if (!config_path.empty()) {
      cfg = parse_config(config_path);
    }
    cfg.deterministic = cfg.deterministic || deterministic;
    if (!outdir_cli.empty()) cfg.outdir = outdir_cli;
    outdir = fs::path(cfg.outdir);
    fs::create_directories(outdir);
    write_text(outdir / "config_effective.toml", effective_config_text(cfg));
  } catch (const ParseError& e) {
    write_status(outdir, "validation_error", e.what());
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    write_status(outdir, "validation_error", e.what());
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    int rc = 0;
    if (sub == "cell") rc = run_cell(cfg, outdir);
    else if (sub == "micro") rc = run_micro_cmd(cfg, outdir);
    else if (sub == "macro") rc = run_macro_cmd(cfg, outdir);
    else if (sub == "correct")
      rc = run_correct(cfg, outdir, svg_file, cfg.deterministic ? 1 : threads);
    else rc = run_check(cfg, outdir);
    write_status(outdir, rc == 0 ? "ok" : "numerical_error",
                 rc == 0 ? "completed" : "self-check failures");
    return rc;
  } catch (const NotConverged& e) {
    write_status(outdir, "numerical_error", e.what());
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const BlowUp& e) {
    write_status(outdir, "numerical_error", e.what());
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    write_status(outdir, "validation_error", e.what());
    std::cerr << e.what() << "\n";
    return 1;
  }
}
