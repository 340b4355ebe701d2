#ifndef PERFHOM_COEFFICIENTS_HPP
#define PERFHOM_COEFFICIENTS_HPP

#include <array>
#include <cmath>
#include <vector>

#include "perfhom/errors.hpp"
#include "perfhom/fem.hpp"
#include "perfhom/geometry.hpp"

namespace perfhom {

inline constexpr double kPi = 3.14159265358979323846;

enum class SpecKind { Constant, Trig, Laminate };

// Y-periodic scalar coefficient with uniform positive bounds.
struct ScalarFieldSpec {
  SpecKind kind = SpecKind::Constant;
  double c = 1.0;        // constant
  double a = 0.0, b = 0.0;   // trig: a + b cos(2 pi y1) cos(2 pi y2)
  double c1 = 0.0, c2 = 0.0; // laminate: c1 for y1 < 1/2 else c2
  double min_value = 1.0, max_value = 1.0;

  // zero is allowed here: ellipticity is only demanded of kappa and d_i,
  // and those are checked where the operators are assembled
  static ScalarFieldSpec constant(double v) {
    if (!(v >= 0.0)) throw NonElliptic("constant spec requires a nonnegative value");
    ScalarFieldSpec s;
    s.kind = SpecKind::Constant;
    s.c = v;
    s.min_value = s.max_value = v;
    return s;
  }
  static ScalarFieldSpec trig(double a, double b) {
    if (!(a > std::abs(b)))
      throw NonElliptic("trig spec requires a > |b|");
    ScalarFieldSpec s;
    s.kind = SpecKind::Trig;
    s.a = a;
    s.b = b;
    s.min_value = a - std::abs(b);
    s.max_value = a + std::abs(b);
    return s;
  }
  static ScalarFieldSpec laminate(double c1, double c2) {
    if (!(c1 > 0.0 && c2 > 0.0))
      throw NonElliptic("laminate spec requires positive values");
    ScalarFieldSpec s;
    s.kind = SpecKind::Laminate;
    s.c1 = c1;
    s.c2 = c2;
    s.min_value = std::min(c1, c2);
    s.max_value = std::max(c1, c2);
    return s;
  }

  double eval(double y1, double y2) const {
    y1 = wrap_unit(y1);
    y2 = wrap_unit(y2);
    switch (kind) {
      case SpecKind::Constant:
        return c;
      case SpecKind::Trig:
        return a + b * std::cos(2.0 * kPi * y1) * std::cos(2.0 * kPi * y2);
      case SpecKind::Laminate:
        return y1 < 0.5 ? c1 : c2;
    }
    return c;
  }
};

inline double eval_periodic(const ScalarFieldSpec& spec, double y1, double y2) {
  return spec.eval(y1, y2);
}

// Diagonal 2x2 tensor coefficient: either isotropic or a diagonal pair.
struct TensorFieldSpec {
  ScalarFieldSpec diag_x, diag_y;

  static TensorFieldSpec isotropic(ScalarFieldSpec s) {
    return {s, s};
  }
  static TensorFieldSpec diagonal(ScalarFieldSpec sx, ScalarFieldSpec sy) {
    return {sx, sy};
  }

  Mat2 eval(double y1, double y2) const {
    return {diag_x.eval(y1, y2), diag_y.eval(y1, y2)};
  }
  double min_value() const {
    return std::min(diag_x.min_value, diag_y.min_value);
  }
  double max_value() const {
    return std::max(diag_x.max_value, diag_y.max_value);
  }
  TensorEval as_eval() const {
    return [spec = *this](double y1, double y2) { return spec.eval(y1, y2); };
  }
};

// All Table-1 parameters of the oscillating problem.
struct PhysicalParams {
  int N = 3;
  TensorFieldSpec kappa = TensorFieldSpec::isotropic(ScalarFieldSpec::trig(2.0, 1.0));
  TensorFieldSpec tau = TensorFieldSpec::isotropic(ScalarFieldSpec::constant(0.1));
  std::vector<TensorFieldSpec> d;    // per species, size N
  std::vector<TensorFieldSpec> rho;  // per species, size N
  ScalarFieldSpec g0 = ScalarFieldSpec::constant(1.0);
  std::vector<ScalarFieldSpec> a;  // deposition rates, size N
  std::vector<ScalarFieldSpec> b;

  static PhysicalParams defaults(int n_species = 3) {
    PhysicalParams p;
    p.N = n_species;
    p.d.assign(n_species, TensorFieldSpec::isotropic(ScalarFieldSpec::trig(1.5, 0.5)));
    p.rho.assign(n_species, TensorFieldSpec::isotropic(ScalarFieldSpec::constant(0.1)));
    p.a.assign(n_species, ScalarFieldSpec::constant(1.0));
    p.b.assign(n_species, ScalarFieldSpec::constant(1.0));
    return p;
  }
};

struct SmoluchowskiParams {
  int N = 3;
  std::vector<double> beta;  // N x N, row-major

  static SmoluchowskiParams constant_kernel(int n, double value = 1.0) {
    SmoluchowskiParams p;
    p.N = n;
    p.beta.assign(n * n, value);
    return p;
  }
  static SmoluchowskiParams truncated_kernel(int n, double value = 1.0) {
    // beta_kj = 0 whenever k + j > N (mass-conserving truncation)
    SmoluchowskiParams p;
    p.N = n;
    p.beta.assign(n * n, 0.0);
    for (int k = 1; k <= n; ++k)
      for (int j = 1; j <= n; ++j)
        if (k + j <= n) p.beta[(k - 1) * n + (j - 1)] = value;
    return p;
  }
  double beta_at(int k, int j) const {  // 1-based species indices
    return beta[(k - 1) * N + (j - 1)];
  }
};

// R_i(s) = 1/2 sum_{k+j=i} beta_kj s_k s_j - sum_j beta_ij s_i s_j
inline std::vector<double> smoluchowski_rate(const std::vector<double>& s,
                                             const SmoluchowskiParams& p) {
  std::vector<double> r(p.N, 0.0);
  for (int i = 1; i <= p.N; ++i) {
    double gain = 0.0;
    for (int k = 1; k < i; ++k)
      gain += p.beta_at(k, i - k) * s[k - 1] * s[i - k - 1];
    double loss = 0.0;
    for (int j = 1; j <= p.N; ++j)
      loss += p.beta_at(i, j) * s[i - 1] * s[j - 1];
    r[i - 1] = 0.5 * gain - loss;
  }
  return r;
}

// ---------------------------------------------------------------------------
// mollified gradient

struct MollifierConfig {
  double delta = 0.1;  // kernel radius, fixed across an eps-sweep
};

// Discrete convolution with the standard bump J_delta followed by centered
// differencing of the smoothed nodal field.  The field is extended by zero
// into holes and outside Omega; the kernel mass is renormalized per point
// over Omega so constants are reproduced in the bulk.
class MollifierPlan {
 public:
  MollifierPlan(const Mesh& mesh, const MollifierConfig& cfg)
      : mesh_(&mesh), delta_(cfg.delta) {
    const double h = mesh.h;
    if (h > cfg.delta / 2.0 + 1e-12) throw KernelUnresolved();
    radius_ = static_cast<int>(std::floor(cfg.delta / h));
    for (int dj = -radius_; dj <= radius_; ++dj) {
      std::vector<double> row;
      int di_max = -1;
      for (int di = -radius_; di <= radius_; ++di) {
        double r2 = (di * di + dj * dj) * h * h / (delta_ * delta_);
        double w = (r2 < 1.0) ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
        row.push_back(w);
        if (w > 0.0) di_max = di;
      }
      rows_.push_back(std::move(row));
      (void)di_max;
    }
    const int np = mesh.n + 1;
    grid_mass_.assign(np * np, 0.0);
    for (int j = 0; j < np; ++j)
      for (int i = 0; i < np; ++i) {
        double s = 0.0;
        for (int dj = -radius_; dj <= radius_; ++dj) {
          int jj = j + dj;
          if (jj < 0 || jj >= np) continue;
          const auto& row = rows_[dj + radius_];
          int lo = std::max(-radius_, -i), hi = std::min(radius_, np - 1 - i);
          for (int di = lo; di <= hi; ++di) s += row[di + radius_];
        }
        grid_mass_[j * np + i] = s;
      }
  }

  double delta() const { return delta_; }

  // per-active-node gradient of the smoothed field
  std::vector<std::array<double, 2>> gradient(const FeFunction& f) const {
    const Mesh& mesh = *mesh_;
    const int np = mesh.n + 1;
    std::vector<double> grid(np * np, 0.0);
    for (int a = 0; a < mesh.node_count(); ++a)
      grid[mesh.active_grid[a]] = f.values[a];

    std::vector<double> smooth(np * np, 0.0);
    for (int j = 0; j < np; ++j)
      for (int i = 0; i < np; ++i) {
        double s = 0.0;
        for (int dj = -radius_; dj <= radius_; ++dj) {
          int jj = j + dj;
          if (jj < 0 || jj >= np) continue;
          const double* src = grid.data() + jj * np;
          const double* w = rows_[dj + radius_].data() + radius_;
          int lo = std::max(-radius_, -i), hi = std::min(radius_, np - 1 - i);
          for (int di = lo; di <= hi; ++di) s += w[di] * src[i + di];
        }
        smooth[j * np + i] = s / grid_mass_[j * np + i];
      }

    const double h = mesh.h;
    std::vector<std::array<double, 2>> g(mesh.node_count());
    auto diff = [&](int i, int j, int axis) {
      int stride = (axis == 0) ? 1 : np;
      int c = (axis == 0) ? i : j;
      int idx = j * np + i;
      if (c == 0) return (smooth[idx + stride] - smooth[idx]) / h;
      if (c == np - 1) return (smooth[idx] - smooth[idx - stride]) / h;
      return (smooth[idx + stride] - smooth[idx - stride]) / (2.0 * h);
    };
    for (int a = 0; a < mesh.node_count(); ++a) {
      int gidx = mesh.active_grid[a];
      int i = gidx % np, j = gidx / np;
      g[a] = {diff(i, j, 0), diff(i, j, 1)};
    }
    return g;
  }

 private:
  const Mesh* mesh_;
  double delta_;
  int radius_;
  std::vector<std::vector<double>> rows_;
  std::vector<double> grid_mass_;
};

inline std::vector<std::array<double, 2>> mollified_gradient(
    const FeFunction& f, const MollifierConfig& cfg) {
  return MollifierPlan(*f.mesh, cfg).gradient(f);
}

// ---------------------------------------------------------------------------
// boundary-layer cut-off

// m^eps(x) = min(1, dist(x, boundary of Omega) / eps)
inline FeFunction cutoff_function(const Mesh& mesh, double epsilon) {
  FeFunction m(mesh);
  const double side = mesh.n * mesh.h;
  for (int a = 0; a < mesh.node_count(); ++a) {
    auto xy = mesh.node_coord(a);
    double d = std::min(std::min(xy[0], side - xy[0]),
                        std::min(xy[1], side - xy[1]));
    m.values[a] = std::min(1.0, d / epsilon);
  }
  return m;
}

}  // namespace perfhom

#endif
