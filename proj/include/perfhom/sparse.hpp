#ifndef PERFHOM_SPARSE_HPP
#define PERFHOM_SPARSE_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "perfhom/errors.hpp"

namespace perfhom {

struct Triplet {
  int row, col;
  double value;
};

// Row-compressed sparse matrix with sorted, deduplicated columns.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  static SparseMatrix from_triplets(int n, std::vector<Triplet> triplets) {
    SparseMatrix A;
    A.n_ = n;
    std::sort(triplets.begin(), triplets.end(),
              [](const Triplet& a, const Triplet& b) {
                return a.row != b.row ? a.row < b.row : a.col < b.col;
              });
    A.row_ptr_.assign(n + 1, 0);
    for (std::size_t k = 0; k < triplets.size();) {
      std::size_t k2 = k + 1;
      double v = triplets[k].value;
      while (k2 < triplets.size() && triplets[k2].row == triplets[k].row &&
             triplets[k2].col == triplets[k].col) {
        v += triplets[k2].value;
        ++k2;
      }
      A.col_.push_back(triplets[k].col);
      A.val_.push_back(v);
      A.row_ptr_[triplets[k].row + 1]++;
      k = k2;
    }
    for (int r = 0; r < n; ++r) A.row_ptr_[r + 1] += A.row_ptr_[r];
    return A;
  }

  int rows() const { return n_; }
  std::size_t nnz() const { return val_.size(); }

  void matvec(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(n_, 0.0);
    for (int r = 0; r < n_; ++r) {
      double s = 0.0;
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        s += val_[k] * x[col_[k]];
      y[r] = s;
    }
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y;
    matvec(x, y);
    return y;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(n_, 0.0);
    for (int r = 0; r < n_; ++r)
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        if (col_[k] == r) d[r] = val_[k];
    return d;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : val_) m = std::max(m, std::abs(v));
    return m;
  }

  double max_row_sum_abs() const {
    double m = 0.0;
    for (int r = 0; r < n_; ++r) {
      double s = 0.0;
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += val_[k];
      m = std::max(m, std::abs(s));
    }
    return m;
  }

  double asymmetry() const {  // ||A - A^T||_max
    double m = 0.0;
    for (int r = 0; r < n_; ++r)
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        m = std::max(m, std::abs(val_[k] - entry(col_[k], r)));
    return m;
  }

  double entry(int r, int c) const {
    for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      if (col_[k] == c) return val_[k];
    return 0.0;
  }

  std::vector<Triplet> to_triplets(double scale = 1.0) const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (int r = 0; r < n_; ++r)
      for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        t.push_back({r, col_[k], scale * val_[k]});
    return t;
  }

  SparseMatrix add_scaled(const SparseMatrix& other, double scale) const {
    std::vector<Triplet> t = to_triplets();
    std::vector<Triplet> t2 = other.to_triplets(scale);
    t.insert(t.end(), t2.begin(), t2.end());
    return from_triplets(n_, std::move(t));
  }

  SparseMatrix scaled(double s) const {
    return from_triplets(n_, to_triplets(s));
  }

  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& cols() const { return col_; }
  const std::vector<double>& values() const { return val_; }

 private:
  int n_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

enum class CgConstraint { None, ZeroMean };

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Jacobi-preconditioned conjugate gradients for SPD (or SPSD with the
// zero-mean constraint) systems.  The zero-mean constraint projects the
// right-hand side and every iterate onto the mean-free subspace.
inline CgResult solve_cg(const SparseMatrix& A, std::vector<double> b,
                         double tol = 1e-10, int max_iter = -1,
                         CgConstraint constraint = CgConstraint::None,
                         const std::vector<double>* initial_guess = nullptr) {
  const int n = A.rows();
  if (max_iter < 0) max_iter = 10 * n;
  auto project = [&](std::vector<double>& v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    for (double& vi : v) vi -= mean;
  };

  double bnorm = norm2(b);
  if (constraint == CgConstraint::ZeroMean) {
    double bsum = std::accumulate(b.begin(), b.end(), 0.0);
    // a load vector that is pure assembly roundoff is compatible by fiat
    double floor = 1e-12 * (1.0 + A.max_abs());
    if (bnorm > floor && std::abs(bsum) / std::sqrt(double(n)) > 1e-6 * bnorm)
      throw IncompatibleRHS();
    project(b);
    bnorm = norm2(b);
  }

  CgResult res;
  res.x.assign(n, 0.0);
  if (initial_guess) {
    res.x = *initial_guess;
    if (constraint == CgConstraint::ZeroMean) project(res.x);
  }
  if (bnorm == 0.0) {
    if (!initial_guess) {
      res.converged = true;
      return res;
    }
  }

  std::vector<double> d = A.diagonal();
  for (double& di : d) di = (std::abs(di) > 0.0) ? 1.0 / di : 1.0;

  std::vector<double> r = A.apply(res.x);
  for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
  if (constraint == CgConstraint::ZeroMean) project(r);

  double ref = (bnorm > 0.0) ? bnorm : 1.0;
  std::vector<double> z(n), p(n), Ap(n);
  for (int i = 0; i < n; ++i) z[i] = d[i] * r[i];
  if (constraint == CgConstraint::ZeroMean) project(z);
  p = z;
  double rz = dot(r, z);
  double rnorm = norm2(r);

  int it = 0;
  for (; it < max_iter && rnorm / ref > tol; ++it) {
    A.matvec(p, Ap);
    if (constraint == CgConstraint::ZeroMean) project(Ap);
    double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) break;  // lost positivity, return best iterate
    double alpha = rz / pAp;
    for (int i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    for (int i = 0; i < n; ++i) z[i] = d[i] * r[i];
    if (constraint == CgConstraint::ZeroMean) project(z);
    double rz_new = dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    rnorm = norm2(r);
  }
  res.iterations = it;
  res.relative_residual = rnorm / ref;
  res.converged = (res.relative_residual <= tol);
  return res;
}

}  // namespace perfhom

#endif
