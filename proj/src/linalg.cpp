#include "persist/linalg.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "persist/error.hpp"

namespace persist {

Matrix Matrix::identity(int n) {
  Matrix m(n, n, 0.0);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix r(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) r(i, j) = a(i, j) - b(i, j);
  return r;
}

Vec operator*(const Matrix& m, const Vec& v) {
  Vec r(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

double norm1(const Matrix& m) {
  double best = 0.0;
  for (int j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (int i = 0; i < m.rows(); ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

Lu::Lu(Matrix m) : lu_(std::move(m)), piv_(lu_.rows()) {
  const int n = lu_.rows();
  if (lu_.cols() != n) throw LinalgError("LU requires a square matrix");
  for (int i = 0; i < n; ++i) piv_[i] = i;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::abs(lu_(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double v = std::abs(lu_(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == 0.0) {
      singular_ = true;
      return;
    }
    if (p != k) {
      for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
      std::swap(piv_[k], piv_[p]);
    }
    for (int i = k + 1; i < n; ++i) {
      lu_(i, k) /= lu_(k, k);
      const double l = lu_(i, k);
      for (int j = k + 1; j < n; ++j) lu_(i, j) -= l * lu_(k, j);
    }
  }
}

Vec Lu::solve(Vec b) const {
  if (singular_) throw LinalgError("singular matrix in solve");
  const int n = lu_.rows();
  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = b[piv_[i]];
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
  for (int i = n - 1; i >= 0; --i) {
    for (int j = i + 1; j < n; ++j) x[i] -= lu_(i, j) * x[j];
    x[i] /= lu_(i, i);
  }
  return x;
}

Matrix Lu::inverse() const {
  if (singular_) throw LinalgError("singular matrix in inverse");
  const int n = lu_.rows();
  Matrix inv(n, n);
  for (int j = 0; j < n; ++j) {
    Vec e(n, 0.0);
    e[j] = 1.0;
    Vec col = solve(std::move(e));
    for (int i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

double condition1(const Matrix& m, const Lu& f) {
  if (f.singular()) return std::numeric_limits<double>::infinity();
  return norm1(m) * norm1(f.inverse());
}

}  // namespace persist
