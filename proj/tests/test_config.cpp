#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "perfhom/config.hpp"

using namespace perfhom;

TEST_CASE("minimal config falls back to full defaults") {
  RunConfig cfg = build_run_config(parse_config_text("mode = \"cell\"\n"));
  CHECK(cfg.mode == RunMode::Cell);
  CHECK(cfg.epsilon == 0.25);
  CHECK(cfg.outdir == ".");
  CHECK_FALSE(cfg.deterministic);
  const StudyConfig& st = cfg.study;
  CHECK(st.cell.has_hole);
  CHECK(st.cell.hole_lo[0] == 0.25);
  CHECK(st.cell.hole_hi[1] == 0.75);
  CHECK(st.n_per_cell == 16);
  CHECK(st.cell_mesh_n == 32);
  CHECK(st.eps_list.size() == 3);
  CHECK(st.params.N == 3);
  CHECK(st.params.kappa.diag_x.kind == SpecKind::Trig);
  CHECK(st.smolu.beta.size() == 9);
  CHECK(st.smolu.beta[0] == 1.0);
  CHECK(st.moll.delta == 0.1);
  CHECK(st.time.t_end == 0.1);
  CHECK(st.time.snapshots == 11);
  CHECK(st.time.cg_tol == 1e-10);
  CHECK(st.well_prepared);
  CHECK(st.convention == IndexConvention::Paper);
}

TEST_CASE("sections, arrays and inline tables are parsed") {
  std::string text =
      "[run]\n"
      "mode = \"correct\"  # trailing comment\n"
      "deterministic = true\n"
      "[geometry]\n"
      "eps_list = [0.5, 0.25, 0.125]\n"
      "n_per_cell = 8\n"
      "robin_faces = [\"top\"]\n"
      "[physics]\n"
      "N = 2\n"
      "kappa = { kind = \"trig\", a = 2, b = 1 }\n"
      "d = { kind = \"laminate\", c1 = 1, c2 = 4 }\n"
      "g0 = 2.5\n"
      "beta = 0.5\n"
      "[time]\n"
      "t_end = 0.2\n";
  RunConfig cfg = build_run_config(parse_config_text(text));
  CHECK(cfg.mode == RunMode::Correct);
  CHECK(cfg.deterministic);
  const StudyConfig& st = cfg.study;
  CHECK(st.eps_list == std::vector<double>{0.5, 0.25, 0.125});
  CHECK(st.n_per_cell == 8);
  CHECK(st.cell.robin_faces == std::set<HoleFace>{HoleFace::Top});
  CHECK(st.params.N == 2);
  CHECK(st.params.kappa.diag_x.kind == SpecKind::Trig);
  CHECK(st.params.kappa.diag_x.a == 2.0);
  CHECK(st.params.kappa.diag_x.b == 1.0);
  // scalar entries are expanded per species
  REQUIRE(st.params.d.size() == 2);
  CHECK(st.params.d[1].diag_y.kind == SpecKind::Laminate);
  CHECK(st.params.d[1].diag_y.c2 == 4.0);
  CHECK(st.params.g0.c == 2.5);
  // a scalar kernel expands to the full N x N table
  REQUIRE(st.smolu.beta.size() == 4);
  for (double b : st.smolu.beta) CHECK(b == 0.5);
  CHECK(st.time.t_end == 0.2);
}

TEST_CASE("truncated and explicit kernels") {
  RunConfig t = build_run_config(
      parse_config_text("[physics]\nN = 3\nbeta = \"truncated\"\n"));
  CHECK(t.study.smolu.beta_at(1, 2) == 1.0);
  CHECK(t.study.smolu.beta_at(2, 2) == 0.0);
  CHECK(t.study.smolu.beta_at(3, 1) == 0.0);

  RunConfig e = build_run_config(
      parse_config_text("[physics]\nN = 2\nbeta = [1, 2, 3, 4]\n"));
  CHECK(e.study.smolu.beta_at(1, 1) == 1.0);
  CHECK(e.study.smolu.beta_at(2, 2) == 4.0);

  CHECK_THROWS_AS(build_run_config(parse_config_text(
                      "[physics]\nN = 3\nbeta = [1, 2]\n")),
                  ValidationError);
}

TEST_CASE("validation failures name the offending field") {
  auto expect_mentions = [](const std::string& text, const std::string& field) {
    try {
      build_run_config(parse_config_text(text));
      FAIL("expected ValidationError for " + field);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  expect_mentions("[geometry]\nepsilon = 0.3\n", "epsilon");
  expect_mentions("[geometry]\neps_list = [0.25, 0.3]\n", "eps_list");
  expect_mentions("[run]\nmode = \"warp\"\n", "run.mode");
  expect_mentions("[physics]\nN = 0\n", "physics.N");
  expect_mentions("[physics]\ndelta = -0.1\n", "physics.delta");
  expect_mentions("[physics]\nkappa = { kind = \"trig\", a = 1, b = 2 }\n",
                  "kappa");
  expect_mentions("[time]\nsnapshots = 1\n", "time.snapshots");
  expect_mentions("[geometry]\nhole_lo = [0, 0]\nhole_hi = [1, 1]\n",
                  "geometry");
}

TEST_CASE("parse errors carry line numbers") {
  auto expect_line = [](const std::string& text, const std::string& needle) {
    try {
      parse_config_text(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_line("mode = \"cell\"\nfoo\n", "line 2");
  expect_line("x = [1, 2\n", "line 1");
  expect_line("a = 1\nb = 2\nc = \"oops\n", "line 3");
  expect_line("q = nope\n", "not a number");
}

TEST_CASE("effective config text round-trips") {
  std::string text =
      "[run]\nmode = \"micro\"\n[geometry]\nepsilon = 0.125\n"
      "[physics]\nN = 2\nkappa = { kind = \"laminate\", c1 = 1, c2 = 4 }\n";
  RunConfig cfg = build_run_config(parse_config_text(text));
  std::string echo = effective_config_text(cfg);
  RunConfig again = build_run_config(parse_config_text(echo));
  CHECK(again.mode == RunMode::Micro);
  CHECK(again.epsilon == cfg.epsilon);
  CHECK(again.study.params.N == 2);
  CHECK(again.study.params.kappa.diag_x.kind == SpecKind::Laminate);
  CHECK(again.study.params.kappa.diag_x.c2 == 4.0);
  CHECK(effective_config_text(again) == echo);
}
