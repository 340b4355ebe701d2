#ifndef PERFHOM_CONFIG_HPP
#define PERFHOM_CONFIG_HPP

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "perfhom/cell.hpp"
#include "perfhom/coefficients.hpp"
#include "perfhom/corrector.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/micro.hpp"

namespace perfhom {

// Minimal TOML-subset value: number, bool, string, array, inline table.
struct ConfigValue {
  enum class Kind { Number, Bool, String, Array, Table } kind = Kind::Number;
  double num = 0.0;
  bool flag = false;
  std::string str;
  std::vector<ConfigValue> items;
  std::map<std::string, ConfigValue> table;
};

namespace detail {

inline ParseError parse_error(int line, const std::string& what) {
  return ParseError("parse error at line " + std::to_string(line) + ": " + what);
}

struct ConfigLexer {
  const std::string& s;
  std::size_t pos = 0;
  int line;

  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
  bool eat(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
};

inline ConfigValue parse_value(ConfigLexer& lx);

inline std::string parse_bare_key(ConfigLexer& lx) {
  lx.skip_ws();
  std::string k;
  while (lx.pos < lx.s.size() &&
         (std::isalnum(static_cast<unsigned char>(lx.s[lx.pos])) ||
          lx.s[lx.pos] == '_' || lx.s[lx.pos] == '-'))
    k += lx.s[lx.pos++];
  if (k.empty()) throw parse_error(lx.line, "expected a key");
  return k;
}

inline ConfigValue parse_value(ConfigLexer& lx) {
  ConfigValue v;
  char c = lx.peek();
  if (c == '"') {
    ++lx.pos;
    v.kind = ConfigValue::Kind::String;
    while (lx.pos < lx.s.size() && lx.s[lx.pos] != '"') v.str += lx.s[lx.pos++];
    if (lx.pos >= lx.s.size()) throw parse_error(lx.line, "unterminated string");
    ++lx.pos;
  } else if (c == '[') {
    ++lx.pos;
    v.kind = ConfigValue::Kind::Array;
    if (!lx.eat(']')) {
      while (true) {
        v.items.push_back(parse_value(lx));
        if (lx.eat(']')) break;
        if (!lx.eat(',')) throw parse_error(lx.line, "expected ',' or ']'");
      }
    }
  } else if (c == '{') {
    ++lx.pos;
    v.kind = ConfigValue::Kind::Table;
    if (!lx.eat('}')) {
      while (true) {
        std::string k = parse_bare_key(lx);
        if (!lx.eat('=')) throw parse_error(lx.line, "expected '='");
        v.table[k] = parse_value(lx);
        if (lx.eat('}')) break;
        if (!lx.eat(',')) throw parse_error(lx.line, "expected ',' or '}'");
      }
    }
  } else if (c == 't' || c == 'f') {
    std::string k = parse_bare_key(lx);
    if (k == "true") {
      v.kind = ConfigValue::Kind::Bool;
      v.flag = true;
    } else if (k == "false") {
      v.kind = ConfigValue::Kind::Bool;
      v.flag = false;
    } else {
      throw parse_error(lx.line, "unexpected token '" + k + "'");
    }
  } else {
    lx.skip_ws();
    std::size_t end = lx.pos;
    while (end < lx.s.size() && lx.s[end] != ',' && lx.s[end] != ']' &&
           lx.s[end] != '}' && lx.s[end] != ' ' && lx.s[end] != '\t')
      ++end;
    std::string tok = lx.s.substr(lx.pos, end - lx.pos);
    try {
      std::size_t used = 0;
      v.num = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw parse_error(lx.line, "not a number: '" + tok + "'");
    }
    lx.pos = end;
  }
  return v;
}

}  // namespace detail

// Flat "section.key" -> value map from a TOML-subset document.
inline std::map<std::string, ConfigValue> parse_config_text(
    const std::string& text) {
  std::map<std::string, ConfigValue> out;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string linestr = raw;
    // strip comments outside strings
    bool in_str = false;
    for (std::size_t i = 0; i < linestr.size(); ++i) {
      if (linestr[i] == '"') in_str = !in_str;
      if (linestr[i] == '#' && !in_str) {
        linestr.erase(i);
        break;
      }
    }
    detail::ConfigLexer lx{linestr, 0, lineno};
    if (lx.peek() == '\0') continue;
    if (lx.eat('[')) {
      section = detail::parse_bare_key(lx);
      if (!lx.eat(']'))
        throw detail::parse_error(lineno, "expected ']' after section name");
      if (lx.peek() != '\0')
        throw detail::parse_error(lineno, "trailing text after section header");
      continue;
    }
    std::string key = detail::parse_bare_key(lx);
    if (!lx.eat('=')) throw detail::parse_error(lineno, "expected '='");
    ConfigValue v = detail::parse_value(lx);
    if (lx.peek() != '\0')
      throw detail::parse_error(lineno, "trailing text after value");
    std::string full = section.empty() ? key : section + "." + key;
    out[full] = v;
  }
  return out;
}

enum class RunMode { Cell, Micro, Macro, Correct, Check };

struct RunConfig {
  RunMode mode = RunMode::Cell;
  StudyConfig study;          // geometry + physics + time + sweep
  double epsilon = 0.25;      // single-run epsilon (micro mode)
  bool deterministic = false;
  std::string outdir = ".";
  bool svg = false;
};

namespace detail {

inline ValidationError bad_field(const std::string& field,
                                 const std::string& why) {
  return ValidationError("invalid field '" + field + "': " + why);
}

class ConfigReader {
 public:
  explicit ConfigReader(const std::map<std::string, ConfigValue>& kv)
      : kv_(&kv) {}

  const ConfigValue* find(const std::string& full) const {
    auto it = kv_->find(full);
    if (it != kv_->end()) return &it->second;
    // top-level fallback for section-less minimal files
    auto dot = full.find('.');
    if (dot != std::string::npos) {
      it = kv_->find(full.substr(dot + 1));
      if (it != kv_->end()) return &it->second;
    }
    return nullptr;
  }

  double number(const std::string& key, double def) const {
    const ConfigValue* v = find(key);
    if (!v) return def;
    if (v->kind != ConfigValue::Kind::Number) throw bad_field(key, "expected a number");
    return v->num;
  }
  int integer(const std::string& key, int def) const {
    double d = number(key, def);
    int i = static_cast<int>(std::lround(d));
    if (std::abs(d - i) > 1e-12) throw bad_field(key, "expected an integer");
    return i;
  }
  bool boolean(const std::string& key, bool def) const {
    const ConfigValue* v = find(key);
    if (!v) return def;
    if (v->kind != ConfigValue::Kind::Bool) throw bad_field(key, "expected a boolean");
    return v->flag;
  }
  std::string string(const std::string& key, const std::string& def) const {
    const ConfigValue* v = find(key);
    if (!v) return def;
    if (v->kind != ConfigValue::Kind::String) throw bad_field(key, "expected a string");
    return v->str;
  }
  std::vector<double> numbers(const std::string& key,
                              std::vector<double> def) const {
    const ConfigValue* v = find(key);
    if (!v) return def;
    if (v->kind == ConfigValue::Kind::Number) return {v->num};
    if (v->kind != ConfigValue::Kind::Array) throw bad_field(key, "expected an array");
    std::vector<double> out;
    for (const auto& it : v->items) {
      if (it.kind != ConfigValue::Kind::Number)
        throw bad_field(key, "expected numeric entries");
      out.push_back(it.num);
    }
    return out;
  }

  ScalarFieldSpec scalar_spec(const std::string& key,
                              const ScalarFieldSpec& def) const {
    const ConfigValue* v = find(key);
    if (!v) return def;
    return scalar_from_value(key, *v);
  }

  static ScalarFieldSpec scalar_from_value(const std::string& key,
                                           const ConfigValue& v) {
    if (v.kind == ConfigValue::Kind::Number) {
      if (!(v.num > 0.0)) throw bad_field(key, "must be positive");
      return ScalarFieldSpec::constant(v.num);
    }
    if (v.kind != ConfigValue::Kind::Table)
      throw bad_field(key, "expected a number or inline table");
    auto num = [&](const std::string& k, double def) {
      auto it = v.table.find(k);
      if (it == v.table.end()) return def;
      if (it->second.kind != ConfigValue::Kind::Number)
        throw bad_field(key + "." + k, "expected a number");
      return it->second.num;
    };
    auto kit = v.table.find("kind");
    std::string kind =
        kit != v.table.end() && kit->second.kind == ConfigValue::Kind::String
            ? kit->second.str
            : "constant";
    try {
      if (kind == "constant") return ScalarFieldSpec::constant(num("c", 1.0));
      if (kind == "trig") return ScalarFieldSpec::trig(num("a", 1.0), num("b", 0.0));
      if (kind == "laminate")
        return ScalarFieldSpec::laminate(num("c1", 1.0), num("c2", 1.0));
    } catch (const NonElliptic& e) {
      throw bad_field(key, e.what());
    }
    throw bad_field(key + ".kind", "unknown spec kind '" + kind + "'");
  }

  TensorFieldSpec tensor_spec(const std::string& key,
                              const TensorFieldSpec& def) const {
    const ConfigValue* v = find(key);
    if (!v) return def;
    return TensorFieldSpec::isotropic(scalar_from_value(key, *v));
  }

  std::vector<ScalarFieldSpec> scalar_specs(const std::string& key, int n,
                                            const ScalarFieldSpec& def) const {
    const ConfigValue* v = find(key);
    if (!v) return std::vector<ScalarFieldSpec>(n, def);
    if (v->kind == ConfigValue::Kind::Array) {
      if (static_cast<int>(v->items.size()) != n)
        throw bad_field(key, "expected " + std::to_string(n) + " entries");
      std::vector<ScalarFieldSpec> out;
      for (const auto& it : v->items) out.push_back(scalar_from_value(key, it));
      return out;
    }
    return std::vector<ScalarFieldSpec>(n, scalar_from_value(key, *v));
  }

  std::vector<TensorFieldSpec> tensor_specs(const std::string& key, int n,
                                            const TensorFieldSpec& def) const {
    const ConfigValue* v = find(key);
    if (!v) return std::vector<TensorFieldSpec>(n, def);
    if (v->kind == ConfigValue::Kind::Array) {
      if (static_cast<int>(v->items.size()) != n)
        throw bad_field(key, "expected " + std::to_string(n) + " entries");
      std::vector<TensorFieldSpec> out;
      for (const auto& it : v->items)
        out.push_back(TensorFieldSpec::isotropic(scalar_from_value(key, it)));
      return out;
    }
    return std::vector<TensorFieldSpec>(
        n, TensorFieldSpec::isotropic(scalar_from_value(key, *v)));
  }

 private:
  const std::map<std::string, ConfigValue>* kv_;
};

inline void require_unit_fraction(double eps, const std::string& field) {
  if (!(eps > 0.0)) throw bad_field(field, "must be a unit fraction 1/m");
  int m = static_cast<int>(std::lround(1.0 / eps));
  if (m < 1 || std::abs(m * eps - 1.0) > 1e-12)
    throw bad_field(field, "must be a unit fraction 1/m");
}

}  // namespace detail

inline RunConfig build_run_config(const std::map<std::string, ConfigValue>& kv) {
  detail::ConfigReader r(kv);
  RunConfig cfg;

  std::string mode = r.string("run.mode", "cell");
  if (mode == "cell") cfg.mode = RunMode::Cell;
  else if (mode == "micro") cfg.mode = RunMode::Micro;
  else if (mode == "macro") cfg.mode = RunMode::Macro;
  else if (mode == "correct") cfg.mode = RunMode::Correct;
  else if (mode == "check") cfg.mode = RunMode::Check;
  else throw detail::bad_field("run.mode", "unknown mode '" + mode + "'");
  cfg.deterministic = r.boolean("run.deterministic", false);
  cfg.outdir = r.string("run.outdir", ".");
  cfg.svg = r.boolean("run.svg", false);

  // geometry
  StudyConfig& st = cfg.study;
  bool has_hole = r.boolean("geometry.has_hole", true);
  if (has_hole) {
    auto lo = r.numbers("geometry.hole_lo", {0.25, 0.25});
    auto hi = r.numbers("geometry.hole_hi", {0.75, 0.75});
    if (lo.size() != 2 || hi.size() != 2)
      throw detail::bad_field("geometry.hole_lo", "expected two coordinates");
    std::set<HoleFace> robin;
    const ConfigValue* rf = r.find("geometry.robin_faces");
    if (!rf) {
      robin = {HoleFace::Top, HoleFace::Right};
    } else {
      if (rf->kind != ConfigValue::Kind::Array)
        throw detail::bad_field("geometry.robin_faces", "expected an array");
      for (const auto& it : rf->items) {
        if (it.kind != ConfigValue::Kind::String)
          throw detail::bad_field("geometry.robin_faces", "expected face names");
        if (it.str == "left") robin.insert(HoleFace::Left);
        else if (it.str == "right") robin.insert(HoleFace::Right);
        else if (it.str == "bottom") robin.insert(HoleFace::Bottom);
        else if (it.str == "top") robin.insert(HoleFace::Top);
        else throw detail::bad_field("geometry.robin_faces",
                                     "unknown face '" + it.str + "'");
      }
    }
    try {
      st.cell = build_cell_geometry({lo[0], lo[1]}, {hi[0], hi[1]}, robin);
    } catch (const Error& e) {
      throw detail::bad_field("geometry", e.what());
    }
  } else {
    st.cell = cell_geometry_without_hole();
  }
  st.n_per_cell = r.integer("geometry.n_per_cell", 16);
  st.cell_mesh_n = r.integer("geometry.cell_mesh_n", 32);
  if (st.n_per_cell < 1) throw detail::bad_field("geometry.n_per_cell", "must be >= 1");
  if (st.cell_mesh_n < 2) throw detail::bad_field("geometry.cell_mesh_n", "must be >= 2");

  cfg.epsilon = r.number("geometry.epsilon", 0.25);
  detail::require_unit_fraction(cfg.epsilon, "epsilon");
  st.eps_list = r.numbers("geometry.eps_list", {0.25, 0.125, 0.0625});
  for (double e : st.eps_list) detail::require_unit_fraction(e, "eps_list");

  // physics
  int N = r.integer("physics.N", 3);
  if (N < 1) throw detail::bad_field("physics.N", "must be >= 1");
  PhysicalParams def = PhysicalParams::defaults(N);
  PhysicalParams& p = st.params;
  p.N = N;
  p.kappa = r.tensor_spec("physics.kappa", def.kappa);
  p.tau = r.tensor_spec("physics.tau", def.tau);
  p.d = r.tensor_specs("physics.d", N, def.d[0]);
  p.rho = r.tensor_specs("physics.rho", N, def.rho[0]);
  p.g0 = r.scalar_spec("physics.g0", def.g0);
  p.a = r.scalar_specs("physics.a", N, def.a[0]);
  p.b = r.scalar_specs("physics.b", N, def.b[0]);

  const ConfigValue* beta = r.find("physics.beta");
  if (!beta) {
    st.smolu = SmoluchowskiParams::constant_kernel(N);
  } else if (beta->kind == ConfigValue::Kind::Number) {
    if (beta->num < 0.0) throw detail::bad_field("physics.beta", "must be >= 0");
    st.smolu = SmoluchowskiParams::constant_kernel(N, beta->num);
  } else if (beta->kind == ConfigValue::Kind::String) {
    if (beta->str != "truncated")
      throw detail::bad_field("physics.beta", "unknown kernel '" + beta->str + "'");
    st.smolu = SmoluchowskiParams::truncated_kernel(N);
  } else if (beta->kind == ConfigValue::Kind::Array) {
    auto flat = r.numbers("physics.beta", {});
    if (static_cast<int>(flat.size()) != N * N)
      throw detail::bad_field("physics.beta",
                              "expected " + std::to_string(N * N) + " entries");
    st.smolu.N = N;
    st.smolu.beta = flat;
  } else {
    throw detail::bad_field("physics.beta", "expected number, string or array");
  }

  st.moll.delta = r.number("physics.delta", 0.1);
  if (!(st.moll.delta > 0.0)) throw detail::bad_field("physics.delta", "must be > 0");
  std::string conv = r.string("physics.index_convention", "paper");
  if (conv == "paper") st.convention = IndexConvention::Paper;
  else if (conv == "symmetric") st.convention = IndexConvention::Symmetric;
  else throw detail::bad_field("physics.index_convention",
                               "expected 'paper' or 'symmetric'");

  // time
  st.time.dt = r.number("time.dt", 0.0);
  if (st.time.dt < 0.0) throw detail::bad_field("time.dt", "must be >= 0");
  st.time.t_end = r.number("time.t_end", 0.1);
  if (!(st.time.t_end > 0.0)) throw detail::bad_field("time.t_end", "must be > 0");
  st.time.snapshots = r.integer("time.snapshots", 11);
  if (st.time.snapshots < 2) throw detail::bad_field("time.snapshots", "must be >= 2");
  st.time.cg_tol = r.number("time.cg_tol", 1e-10);
  if (!(st.time.cg_tol > 0.0)) throw detail::bad_field("time.cg_tol", "must be > 0");
  st.well_prepared = r.boolean("run.well_prepared", true);

  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return build_run_config(parse_config_text(ss.str()));
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string spec_toml(const ScalarFieldSpec& s) {
  switch (s.kind) {
    case SpecKind::Constant:
      return "{ kind = \"constant\", c = " + format_g17(s.c) + " }";
    case SpecKind::Trig:
      return "{ kind = \"trig\", a = " + format_g17(s.a) +
             ", b = " + format_g17(s.b) + " }";
    case SpecKind::Laminate:
      return "{ kind = \"laminate\", c1 = " + format_g17(s.c1) +
             ", c2 = " + format_g17(s.c2) + " }";
  }
  return "{}";
}

}  // namespace detail

// Echo of the fully defaulted configuration, written next to the outputs.
inline std::string effective_config_text(const RunConfig& cfg) {
  const StudyConfig& st = cfg.study;
  std::ostringstream os;
  os << "[run]\n";
  os << "mode = \"";
  switch (cfg.mode) {
    case RunMode::Cell: os << "cell"; break;
    case RunMode::Micro: os << "micro"; break;
    case RunMode::Macro: os << "macro"; break;
    case RunMode::Correct: os << "correct"; break;
    case RunMode::Check: os << "check"; break;
  }
  os << "\"\n";
  os << "deterministic = " << (cfg.deterministic ? "true" : "false") << "\n";
  os << "well_prepared = " << (st.well_prepared ? "true" : "false") << "\n\n";

  os << "[geometry]\n";
  os << "has_hole = " << (st.cell.has_hole ? "true" : "false") << "\n";
  if (st.cell.has_hole) {
    os << "hole_lo = [" << detail::format_g17(st.cell.hole_lo[0]) << ", "
       << detail::format_g17(st.cell.hole_lo[1]) << "]\n";
    os << "hole_hi = [" << detail::format_g17(st.cell.hole_hi[0]) << ", "
       << detail::format_g17(st.cell.hole_hi[1]) << "]\n";
    os << "robin_faces = [";
    bool first = true;
    for (HoleFace f : st.cell.robin_faces) {
      if (!first) os << ", ";
      first = false;
      switch (f) {
        case HoleFace::Left: os << "\"left\""; break;
        case HoleFace::Right: os << "\"right\""; break;
        case HoleFace::Bottom: os << "\"bottom\""; break;
        case HoleFace::Top: os << "\"top\""; break;
      }
    }
    os << "]\n";
  }
  os << "epsilon = " << detail::format_g17(cfg.epsilon) << "\n";
  os << "eps_list = [";
  for (std::size_t k = 0; k < st.eps_list.size(); ++k)
    os << (k ? ", " : "") << detail::format_g17(st.eps_list[k]);
  os << "]\n";
  os << "n_per_cell = " << st.n_per_cell << "\n";
  os << "cell_mesh_n = " << st.cell_mesh_n << "\n\n";

  os << "[physics]\n";
  os << "N = " << st.params.N << "\n";
  os << "kappa = " << detail::spec_toml(st.params.kappa.diag_x) << "\n";
  os << "tau = " << detail::spec_toml(st.params.tau.diag_x) << "\n";
  os << "d = " << detail::spec_toml(st.params.d[0].diag_x) << "\n";
  os << "rho = " << detail::spec_toml(st.params.rho[0].diag_x) << "\n";
  os << "g0 = " << detail::spec_toml(st.params.g0) << "\n";
  os << "a = " << detail::spec_toml(st.params.a[0]) << "\n";
  os << "b = " << detail::spec_toml(st.params.b[0]) << "\n";
  os << "beta = [";
  for (std::size_t k = 0; k < st.smolu.beta.size(); ++k)
    os << (k ? ", " : "") << detail::format_g17(st.smolu.beta[k]);
  os << "]\n";
  os << "delta = " << detail::format_g17(st.moll.delta) << "\n";
  os << "index_convention = "
     << (st.convention == IndexConvention::Paper ? "\"paper\"" : "\"symmetric\"")
     << "\n\n";

  os << "[time]\n";
  os << "dt = " << detail::format_g17(st.time.dt) << "\n";
  os << "t_end = " << detail::format_g17(st.time.t_end) << "\n";
  os << "snapshots = " << st.time.snapshots << "\n";
  os << "cg_tol = " << detail::format_g17(st.time.cg_tol) << "\n";
  return os.str();
}

}  // namespace perfhom

#endif
