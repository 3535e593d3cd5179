#pragma once

#include <span>
#include <vector>

namespace persist {

using Vec = std::vector<double>;

// Dense row-major matrix. Systems here are desk scale (n rarely above 10),
// so everything is direct and unblocked.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }

  const std::vector<double>& data() const { return a_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

Matrix operator-(const Matrix& a, const Matrix& b);
Vec operator*(const Matrix& m, const Vec& v);

double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);
double dist2(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& m);
double norm1(const Matrix& m);  // max column sum

// LU factorization with partial pivoting.
class Lu {
 public:
  explicit Lu(Matrix m);

  bool singular() const { return singular_; }
  Vec solve(Vec b) const;      // throws LinalgError when singular
  Matrix inverse() const;      // throws LinalgError when singular

 private:
  Matrix lu_;
  std::vector<int> piv_;
  bool singular_ = false;
};

// 1-norm condition number, computed from the explicit inverse. Returns +inf
// for a singular factorization.
double condition1(const Matrix& m, const Lu& f);

}  // namespace persist
