#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace milgraph {

/// Dense row-major matrix of 64-bit floats. The whole library runs on
/// doubles; problem sizes are desk scale, so no attempt is made at
/// blocking or vectorization beyond what the compiler does on its own.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);
  Matrix(int rows, int cols, std::vector<double> values);

  static Matrix identity(int n);
  static Matrix constant(int rows, int cols, double value);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double* row(int r) { return values_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const { return values_.data() + static_cast<std::size_t>(r) * cols_; }

  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  std::string shape_string() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

// Core kernels. matmul is OpenMP-parallel over output rows; each row is
// computed exactly as in matmul_serial, so the two agree bitwise and
// results do not depend on the thread count or schedule.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_serial(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
// Adds a 1 x cols row vector to every row of a.
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);

double sum(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);
// Throws std::runtime_error naming `context` when a holds NaN/Inf.
void require_finite(const Matrix& a, const std::string& context);

}  // namespace milgraph
